#include "maadvisor/candidates.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace maadvisor {

DistributionDigest DistributionDigest::of(const ColumnMeta& column) {
  return {column.min_value, column.max_value, column.histogram.size()};
}

std::string format_digest(const DistributionDigest& digest) {
  const auto lo = digest.min_value ? format_scalar(*digest.min_value) : std::string("?");
  const auto hi = digest.max_value ? format_scalar(*digest.max_value) : std::string("?");
  return fmt::format("{}…{}, {} buckets", lo, hi, digest.buckets);
}

double compute_index_utility(const Query& query, const Index& index,
                             const IndexConfiguration& config, const CostOracle& oracle) {
  const double storage = oracle.estimate_index_storage(index);
  if (!(storage > 0.0)) {
    throw ValidationError(fmt::format("index {} has no storage estimate", canonical_key(index)));
  }
  IndexConfiguration with = config;
  with.indexes.push_back(index);
  const double without_cost = oracle.estimate_query_cost(query, config);
  const double with_cost = oracle.estimate_query_cost(query, with);
  return (without_cost - with_cost) / storage;
}

std::vector<QueryColumnInfo> build_query_infos(const Workload& workload, const CostOracle& oracle) {
  std::vector<QueryColumnInfo> infos;
  const IndexConfiguration empty;
  const auto& schema = oracle.schema();
  for (const auto& query : workload.queries) {
    const auto first = infos.size();
    for (const auto& usage : query.usages) {
      auto existing = std::find_if(infos.begin() + static_cast<std::ptrdiff_t>(first), infos.end(),
                                   [&](const QueryColumnInfo& info) {
                                     return info.table == usage.table &&
                                            info.column == usage.column;
                                   });
      if (existing != infos.end()) {
        existing->operators.insert(usage.op);
        continue;
      }
      const auto* meta = schema.find_column(usage.table, usage.column);
      if (meta == nullptr) {
        throw ValidationError(
            fmt::format("query '{}' uses unknown column '{}'", query.id,
                        column_name(usage.table, usage.column)));
      }
      Index index{usage.table, {usage.column}};
      const double storage = oracle.estimate_index_storage(index);
      if (!(storage > 0.0)) continue;
      QueryColumnInfo info;
      info.query_id = query.id;
      info.table = usage.table;
      info.column = usage.column;
      info.operators.insert(usage.op);
      info.est_cardinality = oracle.estimated_cardinality(usage.table, usage.column);
      info.distribution = DistributionDigest::of(*meta);
      info.est_storage_mb = storage;
      info.utility = compute_index_utility(query, index, empty, oracle);
      infos.push_back(std::move(info));
    }
  }
  return infos;
}

std::vector<ColumnCandidate> merge_candidates(const std::vector<QueryColumnInfo>& infos) {
  std::vector<ColumnCandidate> out;
  for (const auto& info : infos) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ColumnCandidate& c) {
      return c.table == info.table && c.column == info.column;
    });
    if (it == out.end()) {
      ColumnCandidate candidate;
      candidate.name = column_name(info.table, info.column);
      candidate.table = info.table;
      candidate.column = info.column;
      candidate.operators = info.operators;
      candidate.est_cardinality = info.est_cardinality;
      candidate.distribution = info.distribution;
      candidate.est_storage_mb = info.est_storage_mb;
      candidate.est_utility = info.utility;
      out.push_back(std::move(candidate));
    } else {
      it->operators |= info.operators;
      it->est_utility += info.utility;
    }
  }
  return out;
}

namespace {

/// Sum over queries of per-query utility of moving from `base` to `next`.
double summed_utility(const Workload& workload, const IndexConfiguration& base,
                      const IndexConfiguration& next, double storage,
                      const CostOracle& oracle) {
  double total = 0.0;
  for (const auto& query : workload.queries) {
    total += (oracle.estimate_query_cost(query, base) - oracle.estimate_query_cost(query, next)) /
             storage;
  }
  return total;
}

}  // namespace

std::vector<ColumnCandidate> refresh_candidates(const std::vector<ColumnCandidate>& candidates,
                                                const IndexConfiguration& config,
                                                const Workload& workload,
                                                const CostOracle& oracle,
                                                const RefreshOptions& options) {
  std::vector<ColumnCandidate> out = candidates;
  for (auto& candidate : out) {
    const bool leads = std::any_of(config.indexes.begin(), config.indexes.end(),
                                   [&](const Index& index) {
                                     return index.table == candidate.table &&
                                            index.columns.front() == candidate.column;
                                   });
    candidate.est_cardinality = oracle.estimated_cardinality(candidate.table, candidate.column);
    if (leads) {
      candidate.est_utility = 0.0;
      continue;
    }
    const double storage = candidate.est_storage_mb;
    IndexConfiguration single = config;
    single.indexes.push_back(candidate.as_index());
    double best = summed_utility(workload, config, single, storage, oracle);
    for (std::size_t i = 0; i < config.indexes.size(); ++i) {
      const auto& index = config.indexes[i];
      if (index.table != candidate.table || index.columns.size() >= options.max_composite_width) {
        continue;
      }
      if (std::find(index.columns.begin(), index.columns.end(), candidate.column) !=
          index.columns.end()) {
        continue;
      }
      IndexConfiguration widened = config;
      widened.indexes[i].columns.push_back(candidate.column);
      best = std::max(best, summed_utility(workload, config, widened, storage, oracle));
    }
    candidate.est_utility = best;
  }
  return out;
}

std::vector<ColumnCandidate> sorted_by_utility(std::vector<ColumnCandidate> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ColumnCandidate& a, const ColumnCandidate& b) {
                     if (a.est_utility != b.est_utility) return a.est_utility > b.est_utility;
                     return a.name < b.name;
                   });
  return candidates;
}

namespace {

std::string format_count(double value) {
  if (std::floor(value) == value && std::abs(value) < 1e15) return fmt::format("{:.0f}", value);
  return fmt::format("{:.1f}", value);
}

}  // namespace

std::string render_candidates(const std::vector<ColumnCandidate>& candidates, const Budget& budget,
                              const IndexConfiguration& config) {
  std::string out = fmt::format("Column candidates ({}):\n", candidates.size());
  for (const auto& c : sorted_by_utility(candidates)) {
    // "+ 0.0" folds -0.0 so equal utilities print identically.
    out += fmt::format(
        "- {}: operators={} cardinality={} distribution=[{}] storage_mb={:.3f} utility={:.1f}{}\n",
        c.name, format_operators(c.operators), format_count(c.est_cardinality),
        format_digest(c.distribution), c.est_storage_mb + 0.0, c.est_utility + 0.0,
        c.est_utility <= 0.0 ? " (non-positive)" : "");
  }
  out += fmt::format("Storage budget: total_mb={:.3f} used_mb={:.3f} remaining_mb={:.3f}\n",
                     budget.total_mb, budget.used_mb, budget.remaining_mb());
  out += "Current indexes:";
  if (config.indexes.empty()) {
    out += " none\n";
  } else {
    for (const auto& key : config.keys()) out += " " + key;
    out += "\n";
  }
  return out;
}

}  // namespace maadvisor
