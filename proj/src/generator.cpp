#include "maadvisor/generator.hpp"

#include <fmt/format.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include "maadvisor/random.hpp"

namespace maadvisor {

void SyntheticInstanceSpec::validate() const {
  if (min_tables < 1 || max_tables < min_tables) throw ValidationError("invalid table count range");
  if (min_columns < 1 || max_columns < min_columns || max_columns > 26) {
    throw ValidationError("invalid columns-per-table range");
  }
  if (!(min_rows >= 1.0) || max_rows < min_rows) throw ValidationError("invalid row range");
  if (!(low_cardinality_share >= 0.0 && low_cardinality_share <= 1.0)) {
    throw ValidationError("low_cardinality_share must lie in [0,1]");
  }
  if (widths.empty() || std::find(widths.begin(), widths.end(), 0U) != widths.end()) {
    throw ValidationError("widths must be non-empty and positive");
  }
  if (query_count < 1) throw ValidationError("query_count must be positive");
  if (min_usages < 1 || max_usages < min_usages) throw ValidationError("invalid usages range");
  if (!(join_probability >= 0.0 && join_probability <= 1.0)) {
    throw ValidationError("join_probability must lie in [0,1]");
  }
  if (!(min_base_cost > 0.0) || max_base_cost < min_base_cost) {
    throw ValidationError("invalid base cost range");
  }
}

namespace {

constexpr const char* kTableNames[] = {"orders", "lineitem", "customer", "part",
                                       "supplier", "nation", "region", "partsupp"};
constexpr const char* kColumnWords[] = {"id",   "date", "status", "price", "qty", "key", "code",
                                        "flag", "name", "type",   "zip",   "rank", "tag", "mode"};

std::string table_name(int i) {
  if (i < static_cast<int>(std::size(kTableNames))) return kTableNames[i];
  return fmt::format("t{}", i);
}

std::string column_word(std::size_t i) {
  if (i < std::size(kColumnWords)) return kColumnWords[i];
  return fmt::format("c{}", i);
}

}  // namespace

double total_table_storage_mb(const DatabaseSchema& schema) {
  double total = 0.0;
  for (const auto& table : schema.tables) {
    double width = 0.0;
    for (const auto& column : table.columns) width += column.width_bytes;
    total += static_cast<double>(table.row_count) * width / 1048576.0;
  }
  return total;
}

double SyntheticInstance::total_table_storage_mb() const {
  return maadvisor::total_table_storage_mb(*schema);
}

SyntheticInstance generate_instance(const SyntheticInstanceSpec& spec) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, 0x5eed));

  auto schema = std::make_shared<DatabaseSchema>();
  const int table_count = static_cast<int>(rng.range(spec.min_tables, spec.max_tables));
  for (int t = 0; t < table_count; ++t) {
    TableMeta table;
    table.name = table_name(t);
    const double log_rows = rng.uniform(std::log(spec.min_rows), std::log(spec.max_rows));
    table.row_count = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(std::exp(log_rows))));
    const auto prefix = std::string(1, table.name[0]) + "_";
    const int column_count = static_cast<int>(rng.range(spec.min_columns, spec.max_columns));
    std::vector<std::size_t> words(std::max<std::size_t>(std::size(kColumnWords),
                                                         static_cast<std::size_t>(column_count)));
    for (std::size_t i = 0; i < words.size(); ++i) words[i] = i;
    // Keep "id" first; shuffle the rest.
    std::vector<std::size_t> rest(words.begin() + 1, words.end());
    deterministic_shuffle(rest, rng);
    for (int c = 0; c < column_count; ++c) {
      ColumnMeta column;
      column.name = prefix + column_word(c == 0 ? 0 : rest[static_cast<std::size_t>(c - 1)]);
      const auto rows = table.row_count;
      if (c == 0) {
        column.cardinality = rows;
      } else if (rng.uniform() < spec.low_cardinality_share || rows <= 20) {
        column.cardinality = static_cast<std::uint64_t>(
            rng.range(std::min<std::int64_t>(2, static_cast<std::int64_t>(rows)),
                      std::min<std::int64_t>(20, static_cast<std::int64_t>(rows))));
      } else {
        const double lo = std::log(20.0);
        const double hi = std::log(static_cast<double>(rows));
        column.cardinality = std::clamp<std::uint64_t>(
            static_cast<std::uint64_t>(std::llround(std::exp(rng.uniform(lo, hi)))), 20, rows);
      }
      column.width_bytes = spec.widths[rng.below(spec.widths.size())];
      column.min_value = 1.0;
      column.max_value = static_cast<double>(column.cardinality);
      if (column.cardinality <= 20) {
        const auto buckets = std::min<std::uint64_t>(column.cardinality, 4);
        std::uint64_t assigned = 0;
        for (std::uint64_t b = 0; b < buckets; ++b) {
          const auto freq = b + 1 == buckets ? rows - assigned : rows / buckets;
          assigned += freq;
          const double bound = std::ceil(static_cast<double>(column.cardinality) *
                                         static_cast<double>(b + 1) / static_cast<double>(buckets));
          column.histogram.push_back({bound, freq});
        }
      }
      table.columns.push_back(std::move(column));
    }
    schema->tables.push_back(std::move(table));
  }
  schema->validate();

  SyntheticInstance instance;
  instance.schema = schema;
  for (int q = 0; q < spec.query_count; ++q) {
    std::vector<const TableMeta*> used;
    used.push_back(&schema->tables[rng.below(schema->tables.size())]);
    const bool join = schema->tables.size() >= 2 && rng.uniform() < spec.join_probability;
    if (join) {
      const TableMeta* other = used[0];
      while (other == used[0]) other = &schema->tables[rng.below(schema->tables.size())];
      used.push_back(other);
    }

    std::vector<ColumnUsage> usages;
    auto record = [&](const TableMeta& table, const ColumnMeta& column, OperatorClass op) {
      ColumnUsage usage{table.name, column.name, op};
      if (std::find(usages.begin(), usages.end(), usage) == usages.end()) usages.push_back(usage);
    };
    auto alias = [&](const TableMeta* table) {
      return fmt::format("a{}", table == used[0] ? 0 : 1);
    };

    std::string sql = fmt::format("SELECT * FROM {} a0", used[0]->name);
    if (join) {
      const auto& left = used[0]->columns[rng.below(used[0]->columns.size())];
      const auto& right = used[1]->columns[rng.below(used[1]->columns.size())];
      sql += fmt::format(" JOIN {} a1 ON a0.{} = a1.{}", used[1]->name, left.name, right.name);
      record(*used[0], left, OperatorClass::Join);
      record(*used[1], right, OperatorClass::Join);
    }

    std::vector<std::string> predicates;
    std::vector<std::string> sort_items;
    const int usage_count = static_cast<int>(rng.range(spec.min_usages, spec.max_usages));
    for (int u = 0; u < usage_count; ++u) {
      const TableMeta* table = used[rng.below(used.size())];
      const auto& column = table->columns[rng.below(table->columns.size())];
      const auto ref = fmt::format("{}.{}", alias(table), column.name);
      const double pick = rng.uniform();
      const auto card = static_cast<std::int64_t>(column.cardinality);
      if (pick < 0.35) {
        if (rng.uniform() < 0.8) {
          predicates.push_back(fmt::format("{} = {}", ref, rng.range(1, card)));
        } else {
          predicates.push_back(
              fmt::format("{} IN ({}, {})", ref, rng.range(1, card), rng.range(1, card)));
        }
        record(*table, column, OperatorClass::Eq);
      } else if (pick < 0.7) {
        const auto v = rng.range(1, card);
        switch (rng.below(3)) {
          case 0:
            predicates.push_back(fmt::format("{} < {}", ref, v));
            break;
          case 1:
            predicates.push_back(fmt::format("{} >= {}", ref, v));
            break;
          default:
            predicates.push_back(fmt::format("{} BETWEEN {} AND {}", ref, v, v + rng.range(0, card)));
            break;
        }
        record(*table, column, OperatorClass::Range);
      } else {
        sort_items.push_back(ref);
        record(*table, column, OperatorClass::SortGroup);
      }
    }
    for (std::size_t i = 0; i < predicates.size(); ++i) {
      sql += (i == 0 ? " WHERE " : " AND ") + predicates[i];
    }
    for (std::size_t i = 0; i < sort_items.size(); ++i) {
      sql += (i == 0 ? " ORDER BY " : ", ") + sort_items[i];
    }

    const double base = std::round(rng.uniform(spec.min_base_cost, spec.max_base_cost) * 100.0) / 100.0;
    instance.sources.push_back({fmt::format("q{}", q + 1), std::move(sql), base});
    instance.intended_usages.push_back(std::move(usages));
  }
  instance.workload = load_workload(instance.sources, *schema);
  return instance;
}

SyntheticInstanceSpec instance_spec_from_json(const nlohmann::json& object) {
  if (!object.is_object()) throw ValidationError("instance spec must be a JSON object");
  SyntheticInstanceSpec spec;
  try {
    for (const auto& [key, value] : object.items()) {
      if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else if (key == "min_tables") spec.min_tables = value.get<int>();
      else if (key == "max_tables") spec.max_tables = value.get<int>();
      else if (key == "min_columns") spec.min_columns = value.get<int>();
      else if (key == "max_columns") spec.max_columns = value.get<int>();
      else if (key == "min_rows") spec.min_rows = value.get<double>();
      else if (key == "max_rows") spec.max_rows = value.get<double>();
      else if (key == "low_cardinality_share") spec.low_cardinality_share = value.get<double>();
      else if (key == "widths") spec.widths = value.get<std::vector<std::uint32_t>>();
      else if (key == "query_count") spec.query_count = value.get<int>();
      else if (key == "min_usages") spec.min_usages = value.get<int>();
      else if (key == "max_usages") spec.max_usages = value.get<int>();
      else if (key == "join_probability") spec.join_probability = value.get<double>();
      else if (key == "min_base_cost") spec.min_base_cost = value.get<double>();
      else if (key == "max_base_cost") spec.max_base_cost = value.get<double>();
      else throw ValidationError(fmt::format("instance spec: unknown field '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("instance spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

nlohmann::json instance_spec_to_json(const SyntheticInstanceSpec& spec) {
  nlohmann::json out{{"seed", spec.seed},
                     {"min_tables", spec.min_tables},
                     {"max_tables", spec.max_tables},
                     {"min_columns", spec.min_columns},
                     {"max_columns", spec.max_columns},
                     {"min_rows", spec.min_rows},
                     {"max_rows", spec.max_rows},
                     {"low_cardinality_share", spec.low_cardinality_share},
                     {"widths", spec.widths},
                     {"query_count", spec.query_count},
                     {"min_usages", spec.min_usages},
                     {"max_usages", spec.max_usages},
                     {"join_probability", spec.join_probability},
                     {"min_base_cost", spec.min_base_cost},
                     {"max_base_cost", spec.max_base_cost}};
  return out;
}

}  // namespace maadvisor
