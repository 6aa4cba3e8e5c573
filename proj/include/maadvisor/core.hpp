#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace maadvisor {

/// Raised when an input document or value violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OperatorClass : std::uint8_t { Eq = 0, Range = 1, Join = 2, SortGroup = 3 };

inline constexpr int kOperatorClassCount = 4;

std::string_view to_string(OperatorClass op);
std::optional<OperatorClass> operator_from_string(std::string_view text);

/// Small bitset over OperatorClass. Iteration order is the enum order.
class OperatorSet {
 public:
  constexpr OperatorSet() = default;

  void insert(OperatorClass op) { bits_ |= mask(op); }
  [[nodiscard]] bool contains(OperatorClass op) const { return (bits_ & mask(op)) != 0; }
  [[nodiscard]] bool empty() const { return bits_ == 0; }
  [[nodiscard]] std::vector<OperatorClass> members() const;
  OperatorSet& operator|=(OperatorSet other) {
    bits_ |= other.bits_;
    return *this;
  }
  friend bool operator==(OperatorSet, OperatorSet) = default;

 private:
  static constexpr std::uint8_t mask(OperatorClass op) {
    return static_cast<std::uint8_t>(1U << static_cast<unsigned>(op));
  }
  std::uint8_t bits_ = 0;
};

/// "[Eq,Range]" style rendering used in prompts and reports.
std::string format_operators(OperatorSet ops);

using Scalar = std::variant<double, std::string>;
std::string format_scalar(const Scalar& value);

struct HistogramBucket {
  Scalar bound;
  std::uint64_t frequency = 0;
};

struct ColumnMeta {
  std::string name;
  std::uint64_t cardinality = 1;
  std::uint32_t width_bytes = 1;
  std::optional<Scalar> min_value;
  std::optional<Scalar> max_value;
  std::vector<HistogramBucket> histogram;
};

struct TableMeta {
  std::string name;
  std::uint64_t row_count = 0;
  std::vector<ColumnMeta> columns;

  [[nodiscard]] const ColumnMeta* find_column(std::string_view column) const;
};

struct DatabaseSchema {
  std::vector<TableMeta> tables;

  [[nodiscard]] const TableMeta* find_table(std::string_view table) const;
  [[nodiscard]] const ColumnMeta* find_column(std::string_view table, std::string_view column) const;
  [[nodiscard]] std::size_t column_count() const;
  /// Throws ValidationError on the first violated invariant.
  void validate() const;
};

struct ColumnUsage {
  std::string table;
  std::string column;
  OperatorClass op = OperatorClass::Eq;

  friend bool operator==(const ColumnUsage&, const ColumnUsage&) = default;
};

struct Query {
  std::string id;
  std::string sql_text;
  std::optional<double> base_cost;
  std::vector<ColumnUsage> usages;
};

struct Workload {
  std::vector<Query> queries;
};

/// Ordered multi-column index on one table.
struct Index {
  std::string table;
  std::vector<std::string> columns;

  friend bool operator==(const Index&, const Index&) = default;
};

/// "I(C table.col1,C table.col2)" preserving column order.
std::string canonical_key(const Index& index);

/// Parses a canonical key back into an Index; nullopt when malformed.
std::optional<Index> parse_canonical_key(std::string_view key);

/// Throws ValidationError unless the index is non-empty, has distinct
/// columns and every column exists on its table.
void validate_index(const Index& index, const DatabaseSchema& schema);

struct IndexConfiguration {
  std::vector<Index> indexes;
  double est_storage_mb = 0.0;

  [[nodiscard]] bool contains(const Index& index) const;
  [[nodiscard]] std::vector<std::string> keys() const;
};

struct Budget {
  double total_mb = 0.0;
  double used_mb = 0.0;

  [[nodiscard]] double remaining_mb() const { return total_mb - used_mb; }
};

/// "Table.Column" candidate name.
inline std::string column_name(std::string_view table, std::string_view column) {
  std::string out;
  out.reserve(table.size() + column.size() + 1);
  out.append(table).append(".").append(column);
  return out;
}

}  // namespace maadvisor
