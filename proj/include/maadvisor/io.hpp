#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maadvisor/core.hpp"

namespace maadvisor {

/// One entry of a workload file before column extraction.
struct QuerySource {
  std::string id;
  std::string sql;
  std::optional<double> base_cost;
};

/// Parses and validates a schema document:
/// {"tables":[{"name","rows","columns":[{"name","cardinality","width_bytes","min"?,"max"?,"histogram"?}]}]}
DatabaseSchema load_schema(std::string_view document);
std::string dump_schema(const DatabaseSchema& schema);

/// Parses a workload document: [{"id","sql","base_cost"?}, ...].
std::vector<QuerySource> parse_workload_document(std::string_view document);
std::string dump_workload(const Workload& workload);

/// Extracts indexable column usages for every statement. Columns missing
/// from the schema and unsupported constructs are skipped and reported
/// through `warnings` when provided.
Workload load_workload(std::span<const QuerySource> sources, const DatabaseSchema& schema,
                       std::vector<std::string>* warnings = nullptr);

/// Convenience overload for bare SQL strings; ids become q1, q2, ...
Workload load_workload(std::span<const std::string> sql_texts, const DatabaseSchema& schema,
                       std::vector<std::string>* warnings = nullptr);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace maadvisor
