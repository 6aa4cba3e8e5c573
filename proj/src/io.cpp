#include "maadvisor/io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "maadvisor/sql.hpp"

namespace maadvisor {

using nlohmann::json;

namespace {

Scalar scalar_from_json(const json& value, std::string_view what) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) return value.get<std::string>();
  throw ValidationError(fmt::format("{} must be a number or string", what));
}

json scalar_to_json(const Scalar& value) {
  if (const auto* number = std::get_if<double>(&value)) return *number;
  return std::get<std::string>(value);
}

template <typename T>
T required(const json& object, const char* key, std::string_view context) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw ValidationError(fmt::format("{}: missing field '{}'", context, key));
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(fmt::format("{}: field '{}' has the wrong type", context, key));
  }
}

std::uint64_t required_count(const json& object, const char* key, std::string_view context) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw ValidationError(fmt::format("{}: missing field '{}'", context, key));
  }
  if (!it->is_number_integer() && !it->is_number_unsigned()) {
    throw ValidationError(fmt::format("{}: field '{}' must be an integer", context, key));
  }
  auto value = it->get<std::int64_t>();
  if (value < 0) throw ValidationError(fmt::format("{}: field '{}' is negative", context, key));
  return static_cast<std::uint64_t>(value);
}

json parse_json(std::string_view document, std::string_view what) {
  try {
    return json::parse(document);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("malformed {} document: {}", what, e.what()));
  }
}

}  // namespace

DatabaseSchema load_schema(std::string_view document) {
  const json root = parse_json(document, "schema");
  if (!root.is_object() || !root.contains("tables") || !root["tables"].is_array()) {
    throw ValidationError("schema document must be an object with a 'tables' array");
  }
  DatabaseSchema schema;
  for (const auto& t : root["tables"]) {
    if (!t.is_object()) throw ValidationError("schema: table entry must be an object");
    TableMeta table;
    table.name = required<std::string>(t, "name", "table");
    const auto context = fmt::format("table '{}'", table.name);
    table.row_count = required_count(t, "rows", context);
    if (!t.contains("columns") || !t["columns"].is_array()) {
      throw ValidationError(fmt::format("{}: missing 'columns' array", context));
    }
    for (const auto& c : t["columns"]) {
      if (!c.is_object()) throw ValidationError(fmt::format("{}: column must be an object", context));
      ColumnMeta column;
      column.name = required<std::string>(c, "name", context);
      const auto column_context = fmt::format("column '{}'", column_name(table.name, column.name));
      column.cardinality = required_count(c, "cardinality", column_context);
      const auto width = required_count(c, "width_bytes", column_context);
      if (width > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError(fmt::format("{}: width_bytes too large", column_context));
      }
      column.width_bytes = static_cast<std::uint32_t>(width);
      if (auto it = c.find("min"); it != c.end() && !it->is_null()) {
        column.min_value = scalar_from_json(*it, column_context + " min");
      }
      if (auto it = c.find("max"); it != c.end() && !it->is_null()) {
        column.max_value = scalar_from_json(*it, column_context + " max");
      }
      if (auto it = c.find("histogram"); it != c.end() && !it->is_null()) {
        if (!it->is_array()) {
          throw ValidationError(fmt::format("{}: histogram must be an array", column_context));
        }
        for (const auto& bucket : *it) {
          if (!bucket.is_array() || bucket.size() != 2) {
            throw ValidationError(
                fmt::format("{}: histogram bucket must be [bound, frequency]", column_context));
          }
          if (!bucket[1].is_number_integer() || bucket[1].get<std::int64_t>() < 0) {
            throw ValidationError(
                fmt::format("{}: histogram frequency must be a count", column_context));
          }
          column.histogram.push_back(
              {scalar_from_json(bucket[0], column_context + " histogram bound"),
               bucket[1].get<std::uint64_t>()});
        }
      }
      table.columns.push_back(std::move(column));
    }
    schema.tables.push_back(std::move(table));
  }
  schema.validate();
  return schema;
}

std::string dump_schema(const DatabaseSchema& schema) {
  json tables = json::array();
  for (const auto& table : schema.tables) {
    json columns = json::array();
    for (const auto& column : table.columns) {
      json c = {{"name", column.name},
                {"cardinality", column.cardinality},
                {"width_bytes", column.width_bytes}};
      if (column.min_value) c["min"] = scalar_to_json(*column.min_value);
      if (column.max_value) c["max"] = scalar_to_json(*column.max_value);
      if (!column.histogram.empty()) {
        json histogram = json::array();
        for (const auto& bucket : column.histogram) {
          histogram.push_back(json::array({scalar_to_json(bucket.bound), bucket.frequency}));
        }
        c["histogram"] = std::move(histogram);
      }
      columns.push_back(std::move(c));
    }
    tables.push_back({{"name", table.name}, {"rows", table.row_count}, {"columns", columns}});
  }
  return json{{"tables", tables}}.dump(2) + "\n";
}

std::vector<QuerySource> parse_workload_document(std::string_view document) {
  const json root = parse_json(document, "workload");
  if (!root.is_array()) throw ValidationError("workload document must be a JSON array");
  std::vector<QuerySource> out;
  for (const auto& entry : root) {
    if (!entry.is_object()) throw ValidationError("workload entry must be an object");
    QuerySource source;
    source.id = required<std::string>(entry, "id", "workload entry");
    source.sql = required<std::string>(entry, "sql", fmt::format("query '{}'", source.id));
    if (auto it = entry.find("base_cost"); it != entry.end() && !it->is_null()) {
      if (!it->is_number()) {
        throw ValidationError(fmt::format("query '{}': base_cost must be a number", source.id));
      }
      source.base_cost = it->get<double>();
    }
    out.push_back(std::move(source));
  }
  return out;
}

std::string dump_workload(const Workload& workload) {
  json out = json::array();
  for (const auto& query : workload.queries) {
    json entry = {{"id", query.id}, {"sql", query.sql_text}};
    if (query.base_cost) entry["base_cost"] = *query.base_cost;
    out.push_back(std::move(entry));
  }
  return out.dump(2) + "\n";
}

Workload load_workload(std::span<const QuerySource> sources, const DatabaseSchema& schema,
                       std::vector<std::string>* warnings) {
  if (sources.empty()) throw ValidationError("workload is empty");
  Workload workload;
  std::unordered_set<std::string> ids;
  for (const auto& source : sources) {
    if (!ids.insert(source.id).second) {
      throw ValidationError(fmt::format("duplicate query id '{}'", source.id));
    }
    if (source.base_cost && !(*source.base_cost > 0.0)) {
      throw ValidationError(fmt::format("query '{}': base_cost must be positive", source.id));
    }
    UsageExtraction extraction;
    try {
      extraction = extract_column_usages(source.sql, schema);
    } catch (const SqlParseError& e) {
      throw ValidationError(fmt::format("query '{}': {}", source.id, e.what()));
    }
    if (warnings != nullptr) {
      for (auto& w : extraction.warnings) warnings->push_back(fmt::format("{}: {}", source.id, w));
      if (extraction.usages.empty()) {
        warnings->push_back(fmt::format("{}: no indexable column", source.id));
      }
    }
    workload.queries.push_back(
        Query{source.id, source.sql, source.base_cost, std::move(extraction.usages)});
  }
  return workload;
}

Workload load_workload(std::span<const std::string> sql_texts, const DatabaseSchema& schema,
                       std::vector<std::string>* warnings) {
  std::vector<QuerySource> sources;
  sources.reserve(sql_texts.size());
  for (std::size_t i = 0; i < sql_texts.size(); ++i) {
    sources.push_back({fmt::format("q{}", i + 1), sql_texts[i], std::nullopt});
  }
  return load_workload(sources, schema, warnings);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace maadvisor
