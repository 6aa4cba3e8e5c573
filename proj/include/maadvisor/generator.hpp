#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "maadvisor/core.hpp"
#include "maadvisor/io.hpp"

namespace maadvisor {

/// Parameters of the seeded synthetic instance generator.
struct SyntheticInstanceSpec {
  std::uint64_t seed = 0;
  int min_tables = 1;
  int max_tables = 3;
  int min_columns = 2;
  int max_columns = 6;
  double min_rows = 1e3;
  double max_rows = 1e6;
  /// Share of columns drawn with low cardinality (2..20 distinct values).
  double low_cardinality_share = 0.3;
  std::vector<std::uint32_t> widths = {1, 2, 4, 4, 8, 8, 16, 32};
  int query_count = 10;
  int min_usages = 1;
  int max_usages = 4;
  double join_probability = 0.4;
  double min_base_cost = 10.0;
  double max_base_cost = 1000.0;

  void validate() const;
};

struct SyntheticInstance {
  std::shared_ptr<const DatabaseSchema> schema;
  std::vector<QuerySource> sources;
  /// Usages the generator encoded into each statement, in query order.
  std::vector<std::vector<ColumnUsage>> intended_usages;
  /// Parsed workload (load_workload over `sources`).
  Workload workload;

  /// Sum of table sizes in MB (rows x row width), the base for budget fractions.
  [[nodiscard]] double total_table_storage_mb() const;
};

SyntheticInstance generate_instance(const SyntheticInstanceSpec& spec);

/// Overrides defaults with the fields present in `object`; unknown keys throw.
SyntheticInstanceSpec instance_spec_from_json(const nlohmann::json& object);
nlohmann::json instance_spec_to_json(const SyntheticInstanceSpec& spec);

/// Total table storage of a schema in MB.
double total_table_storage_mb(const DatabaseSchema& schema);

}  // namespace maadvisor
