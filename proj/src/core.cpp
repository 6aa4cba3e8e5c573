#include "maadvisor/core.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <unordered_set>

namespace maadvisor {

std::string_view to_string(OperatorClass op) {
  switch (op) {
    case OperatorClass::Eq:
      return "Eq";
    case OperatorClass::Range:
      return "Range";
    case OperatorClass::Join:
      return "Join";
    case OperatorClass::SortGroup:
      return "SortGroup";
  }
  return "Eq";
}

std::optional<OperatorClass> operator_from_string(std::string_view text) {
  for (int i = 0; i < kOperatorClassCount; ++i) {
    auto op = static_cast<OperatorClass>(i);
    if (to_string(op) == text) return op;
  }
  return std::nullopt;
}

std::vector<OperatorClass> OperatorSet::members() const {
  std::vector<OperatorClass> out;
  for (int i = 0; i < kOperatorClassCount; ++i) {
    auto op = static_cast<OperatorClass>(i);
    if (contains(op)) out.push_back(op);
  }
  return out;
}

std::string format_operators(OperatorSet ops) {
  std::string out = "[";
  bool first = true;
  for (auto op : ops.members()) {
    if (!first) out += ",";
    out += to_string(op);
    first = false;
  }
  out += "]";
  return out;
}

std::string format_scalar(const Scalar& value) {
  if (const auto* number = std::get_if<double>(&value)) return fmt::format("{}", *number);
  return std::get<std::string>(value);
}

const ColumnMeta* TableMeta::find_column(std::string_view column) const {
  auto it = std::find_if(columns.begin(), columns.end(),
                         [&](const ColumnMeta& c) { return c.name == column; });
  return it == columns.end() ? nullptr : &*it;
}

const TableMeta* DatabaseSchema::find_table(std::string_view table) const {
  auto it = std::find_if(tables.begin(), tables.end(),
                         [&](const TableMeta& t) { return t.name == table; });
  return it == tables.end() ? nullptr : &*it;
}

const ColumnMeta* DatabaseSchema::find_column(std::string_view table,
                                              std::string_view column) const {
  const auto* t = find_table(table);
  return t == nullptr ? nullptr : t->find_column(column);
}

std::size_t DatabaseSchema::column_count() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.columns.size();
  return n;
}

namespace {

bool scalar_less(const Scalar& a, const Scalar& b) {
  if (a.index() != b.index()) return false;  // incomparable kinds are not checked
  return a < b;
}

}  // namespace

void DatabaseSchema::validate() const {
  std::unordered_set<std::string_view> table_names;
  for (const auto& table : tables) {
    if (table.name.empty()) throw ValidationError("table with empty name");
    if (!table_names.insert(table.name).second) {
      throw ValidationError(fmt::format("duplicate table name '{}'", table.name));
    }
    std::unordered_set<std::string_view> column_names;
    for (const auto& column : table.columns) {
      const auto qualified = column_name(table.name, column.name);
      if (column.name.empty()) {
        throw ValidationError(fmt::format("table '{}' has a column with empty name", table.name));
      }
      if (!column_names.insert(column.name).second) {
        throw ValidationError(fmt::format("duplicate column name '{}'", qualified));
      }
      if (column.cardinality < 1) {
        throw ValidationError(fmt::format("column '{}' has cardinality < 1", qualified));
      }
      if (column.cardinality > table.row_count && table.row_count > 0) {
        throw ValidationError(fmt::format("column '{}' cardinality {} exceeds table rows {}",
                                          qualified, column.cardinality, table.row_count));
      }
      if (table.row_count == 0 && column.cardinality > 1) {
        throw ValidationError(
            fmt::format("column '{}' cardinality {} exceeds empty table", qualified,
                        column.cardinality));
      }
      if (column.width_bytes < 1) {
        throw ValidationError(fmt::format("column '{}' has width < 1 byte", qualified));
      }
      if (column.min_value && column.max_value &&
          scalar_less(*column.max_value, *column.min_value)) {
        throw ValidationError(fmt::format("column '{}' has min > max", qualified));
      }
      if (!column.histogram.empty()) {
        std::uint64_t total = 0;
        for (const auto& bucket : column.histogram) total += bucket.frequency;
        if (total != table.row_count) {
          throw ValidationError(fmt::format(
              "column '{}' histogram frequencies sum to {}, expected {}", qualified, total,
              table.row_count));
        }
      }
    }
  }
}

std::string canonical_key(const Index& index) {
  std::string out = "I(";
  for (std::size_t i = 0; i < index.columns.size(); ++i) {
    if (i > 0) out += ",";
    out += "C ";
    out += index.table;
    out += ".";
    out += index.columns[i];
  }
  out += ")";
  return out;
}

std::optional<Index> parse_canonical_key(std::string_view key) {
  if (key.size() < 4 || key.substr(0, 2) != "I(" || key.back() != ')') return std::nullopt;
  auto body = key.substr(2, key.size() - 3);
  Index index;
  while (!body.empty()) {
    auto comma = body.find(',');
    auto part = body.substr(0, comma);
    if (part.substr(0, 2) != "C ") return std::nullopt;
    part.remove_prefix(2);
    auto dot = part.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == part.size()) return std::nullopt;
    auto table = part.substr(0, dot);
    if (index.table.empty()) {
      index.table = std::string(table);
    } else if (index.table != table) {
      return std::nullopt;
    }
    index.columns.emplace_back(part.substr(dot + 1));
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  if (index.columns.empty()) return std::nullopt;
  return index;
}

void validate_index(const Index& index, const DatabaseSchema& schema) {
  if (index.columns.empty()) throw ValidationError("index without columns");
  const auto* table = schema.find_table(index.table);
  if (table == nullptr) throw ValidationError(fmt::format("unknown table '{}'", index.table));
  for (std::size_t i = 0; i < index.columns.size(); ++i) {
    if (table->find_column(index.columns[i]) == nullptr) {
      throw ValidationError(
          fmt::format("unknown column '{}'", column_name(index.table, index.columns[i])));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (index.columns[j] == index.columns[i]) {
        throw ValidationError(fmt::format("repeated column in {}", canonical_key(index)));
      }
    }
  }
}

bool IndexConfiguration::contains(const Index& index) const {
  return std::find(indexes.begin(), indexes.end(), index) != indexes.end();
}

std::vector<std::string> IndexConfiguration::keys() const {
  std::vector<std::string> out;
  out.reserve(indexes.size());
  for (const auto& index : indexes) out.push_back(canonical_key(index));
  return out;
}

}  // namespace maadvisor
