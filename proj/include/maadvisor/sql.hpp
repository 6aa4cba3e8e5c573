#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "maadvisor/core.hpp"

namespace maadvisor {

class SqlParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UsageExtraction {
  std::vector<ColumnUsage> usages;
  std::vector<std::string> warnings;
};

/// Extracts (table, column, operator) usages from a single SELECT statement.
///
/// Recognized: WHERE comparisons (=, <, >, <=, >=), BETWEEN, LIKE with a
/// literal prefix, IN lists, explicit JOIN ... ON and implicit equi-joins,
/// GROUP BY, ORDER BY and nested subqueries. Anything else is skipped with a
/// warning. Usages are de-duplicated and returned in first-seen order; only
/// columns present in `schema` are emitted.
///
/// Throws SqlParseError when the text contains no SELECT statement.
UsageExtraction extract_column_usages(std::string_view sql, const DatabaseSchema& schema);

}  // namespace maadvisor
