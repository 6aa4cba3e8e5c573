#include "maadvisor/oracle.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "maadvisor/random.hpp"

namespace maadvisor {

double CostOracle::estimate_workload_cost(const Workload& workload,
                                          const IndexConfiguration& config) const {
  double total = 0.0;
  for (const auto& query : workload.queries) total += estimate_query_cost(query, config);
  return total;
}

double CostOracle::estimate_configuration_storage(const IndexConfiguration& config) const {
  double total = 0.0;
  for (const auto& index : config.indexes) total += estimate_index_storage(index);
  return total;
}

std::unique_ptr<CostOracle> CostOracle::with_cardinalities(
    const std::map<std::string, double>& /*cardinalities*/) const {
  return nullptr;
}

void SyntheticOracleConfig::validate() const {
  for (double w : operator_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("operator weight outside [0,1]");
  }
  if (!(composite_bonus > 0.0 && composite_bonus <= 1.0)) {
    throw ValidationError("composite_bonus must lie in (0,1]");
  }
  if (!(cost_floor_fraction > 0.0 && cost_floor_fraction < 1.0)) {
    throw ValidationError("cost_floor_fraction must lie in (0,1)");
  }
  if (!(per_index_row_overhead_bytes >= 0.0)) {
    throw ValidationError("per_index_row_overhead_bytes must be non-negative");
  }
  if (!(true_overhead_fraction >= 0.0)) {
    throw ValidationError("true_overhead_fraction must be non-negative");
  }
}

void PerturbationSpec::validate() const {
  if (!(fraction_columns >= 0.0 && fraction_columns <= 1.0)) {
    throw ValidationError("perturbation fraction_columns must lie in [0,1]");
  }
  if (!(error_factor > 0.0)) throw ValidationError("perturbation error_factor must be positive");
}

SyntheticOracle::SyntheticOracle(std::shared_ptr<const DatabaseSchema> schema,
                                 SyntheticOracleConfig config)
    : schema_(std::move(schema)), config_(config) {
  config_.validate();
  for (const auto& table : schema_->tables) {
    TableStats stats;
    stats.rows = static_cast<double>(table.row_count);
    for (const auto& column : table.columns) {
      const auto card = static_cast<double>(column.cardinality);
      stats.columns.emplace(column.name,
                            ColumnStats{card, card, static_cast<double>(column.width_bytes)});
    }
    tables_.emplace(table.name, std::move(stats));
  }
}

const SyntheticOracle::ColumnStats& SyntheticOracle::column_stats(std::string_view table,
                                                                  std::string_view column) const {
  auto t = tables_.find(std::string(table));
  if (t == tables_.end()) throw OracleError(fmt::format("unknown table '{}'", table));
  auto c = t->second.columns.find(std::string(column));
  if (c == t->second.columns.end()) {
    throw OracleError(fmt::format("unknown column '{}'", column_name(table, column)));
  }
  return c->second;
}

double SyntheticOracle::estimate_index_storage(const Index& index) const {
  auto t = tables_.find(index.table);
  if (t == tables_.end()) throw OracleError(fmt::format("unknown table '{}'", index.table));
  double width = config_.per_index_row_overhead_bytes;
  for (const auto& column : index.columns) width += column_stats(index.table, column).width_bytes;
  return t->second.rows * width / kBytesPerMegabyte;
}

double SyntheticOracle::estimated_cardinality(std::string_view table,
                                              std::string_view column) const {
  return column_stats(table, column).cardinality;
}

namespace {

struct TableUsage {
  std::string_view table;
  // Strongest operator weight per column referenced on this table.
  std::vector<std::pair<std::string_view, double>> columns;

  [[nodiscard]] const double* weight(std::string_view column) const {
    for (const auto& [name, w] : columns) {
      if (name == column) return &w;
    }
    return nullptr;
  }
};

std::vector<TableUsage> group_usages(const Query& query, const SyntheticOracleConfig& config) {
  std::vector<TableUsage> out;
  for (const auto& usage : query.usages) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const TableUsage& t) { return t.table == usage.table; });
    if (it == out.end()) {
      out.push_back({usage.table, {}});
      it = std::prev(out.end());
    }
    const double w = config.weight(usage.op);
    auto col = std::find_if(it->columns.begin(), it->columns.end(),
                            [&](const auto& entry) { return entry.first == usage.column; });
    if (col == it->columns.end()) {
      it->columns.emplace_back(usage.column, w);
    } else {
      col->second = std::max(col->second, w);
    }
  }
  return out;
}

}  // namespace

double SyntheticOracle::query_cost(const Query& query, const IndexConfiguration& config,
                                   bool truth) const {
  if (!query.base_cost) {
    throw OracleError(fmt::format("query '{}' has no base_cost", query.id));
  }
  const double base = *query.base_cost;
  double factor = 1.0;
  std::size_t applicable = 0;
  for (const auto& usage : group_usages(query, config_)) {
    double table_factor = 1.0;
    for (const auto& index : config.indexes) {
      if (index.table != usage.table) continue;
      double index_factor = 1.0;
      std::size_t prefix = 0;
      for (const auto& column : index.columns) {
        const double* w = usage.weight(column);
        if (w == nullptr) break;
        const auto& stats = column_stats(index.table, column);
        const double card = truth ? stats.true_cardinality : stats.cardinality;
        index_factor *= (1.0 - *w) + *w / card;
        ++prefix;
      }
      if (prefix == 0) continue;
      ++applicable;
      if (prefix >= 2) index_factor *= config_.composite_bonus;
      table_factor = std::min(table_factor, index_factor);
    }
    factor *= table_factor;
  }
  double cost = std::max(base * factor, config_.cost_floor_fraction * base);
  if (truth) cost += config_.true_overhead_fraction * base * static_cast<double>(applicable);
  return cost;
}

double SyntheticOracle::estimate_query_cost(const Query& query,
                                            const IndexConfiguration& config) const {
  return query_cost(query, config, false);
}

double SyntheticOracle::true_query_cost(const Query& query,
                                        const IndexConfiguration& config) const {
  return query_cost(query, config, true);
}

double SyntheticOracle::true_cost(const Workload& workload,
                                  const IndexConfiguration& config) const {
  double total = 0.0;
  for (const auto& query : workload.queries) total += true_query_cost(query, config);
  return total;
}

double SyntheticOracle::true_cardinality(std::string_view table, std::string_view column) const {
  return column_stats(table, column).true_cardinality;
}

double GroundTruthOracle::estimated_cardinality(std::string_view table,
                                                std::string_view column) const {
  return source_.true_cardinality(table, column);
}

std::unique_ptr<CostOracle> SyntheticOracle::with_cardinalities(
    const std::map<std::string, double>& cardinalities) const {
  auto copy = std::make_unique<SyntheticOracle>(*this);
  for (const auto& [name, card] : cardinalities) {
    auto dot = name.find('.');
    if (dot == std::string::npos) continue;
    auto t = copy->tables_.find(name.substr(0, dot));
    if (t == copy->tables_.end()) continue;
    auto c = t->second.columns.find(name.substr(dot + 1));
    if (c == t->second.columns.end()) continue;
    c->second.cardinality = std::max(1.0, card);
  }
  return copy;
}

SyntheticOracle SyntheticOracle::perturbed(const PerturbationSpec& spec) const {
  spec.validate();
  SyntheticOracle copy(*this);
  std::vector<std::pair<std::string, std::string>> columns;
  for (const auto& table : schema_->tables) {
    for (const auto& column : table.columns) columns.emplace_back(table.name, column.name);
  }
  const auto count = static_cast<std::size_t>(
      std::llround(spec.fraction_columns * static_cast<double>(columns.size())));
  SplitMix64 rng(spec.seed);
  deterministic_shuffle(columns, rng);
  for (std::size_t k = 0; k < count && k < columns.size(); ++k) {
    auto& stats = copy.tables_.at(columns[k].first).columns.at(columns[k].second);
    const bool multiply = (k + spec.seed) % 2 == 0;
    stats.cardinality = multiply ? stats.cardinality * spec.error_factor
                                 : std::max(1.0, stats.cardinality / spec.error_factor);
  }
  return copy;
}

std::vector<std::string> SyntheticOracle::perturbed_columns() const {
  std::vector<std::string> out;
  for (const auto& table : schema_->tables) {
    const auto& stats = tables_.at(table.name);
    for (const auto& column : table.columns) {
      const auto& c = stats.columns.at(column.name);
      if (c.cardinality != c.true_cardinality) out.push_back(column_name(table.name, column.name));
    }
  }
  return out;
}

double true_cost(const Workload& workload, const IndexConfiguration& config,
                 const DatabaseSchema& schema) {
  SyntheticOracle oracle(std::make_shared<const DatabaseSchema>(schema));
  return oracle.true_cost(workload, config);
}

SyntheticOracle perturb_statistics(const SyntheticOracle& oracle, const PerturbationSpec& spec) {
  return oracle.perturbed(spec);
}

LiveOracle::LiveOracle(std::shared_ptr<const DatabaseSchema> schema,
                       std::unique_ptr<HypotheticalIndexSession> session)
    : schema_(std::move(schema)), session_(std::move(session)) {
  if (!session_) throw OracleError("live oracle requires a session");
}

double LiveOracle::estimate_query_cost(const Query& query, const IndexConfiguration& config) const {
  std::lock_guard lock(mutex_);
  std::vector<std::int64_t> handles;
  handles.reserve(config.indexes.size());
  try {
    for (const auto& index : config.indexes) {
      handles.push_back(session_->create_hypothetical_index(index));
    }
    const double cost = session_->explain_cost(query.sql_text);
    for (auto h : handles) session_->drop_hypothetical_index(h);
    return cost;
  } catch (const OracleError&) {
    for (auto h : handles) session_->drop_hypothetical_index(h);
    throw;
  } catch (const std::exception& e) {
    for (auto h : handles) session_->drop_hypothetical_index(h);
    throw OracleError(fmt::format("live oracle: {}", e.what()));
  }
}

double LiveOracle::estimate_index_storage(const Index& index) const {
  std::lock_guard lock(mutex_);
  const auto handle = session_->create_hypothetical_index(index);
  const double bytes = session_->hypothetical_index_size_bytes(handle);
  session_->drop_hypothetical_index(handle);
  return bytes / kBytesPerMegabyte;
}

double LiveOracle::estimated_cardinality(std::string_view table, std::string_view column) const {
  std::lock_guard lock(mutex_);
  return session_->column_distinct_estimate(std::string(table), std::string(column));
}

std::unique_ptr<HypotheticalIndexSession> open_live_session(const std::string& url) {
  if (url.empty()) throw OracleError("MAADVISOR_DB_URL is not set");
  throw OracleError("this build has no live DBMS driver; use the synthetic oracle");
}

}  // namespace maadvisor
