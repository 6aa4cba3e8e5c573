#include "maadvisor/sql.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <optional>

namespace maadvisor {
namespace {

enum class TokenKind { Word, QuotedIdent, String, Number, Param, Symbol, End };

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;   // original spelling (quotes stripped for QuotedIdent / String)
  std::string upper;  // upper-cased for keyword comparison (Word only)
};

std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

std::vector<Token> tokenize(std::string_view sql) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const auto n = sql.size();
  while (i < n) {
    const char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      auto close = sql.find("*/", i + 2);
      i = close == std::string_view::npos ? n : close + 2;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '_' ||
                       sql[j] == '$')) {
        ++j;
      }
      auto word = sql.substr(i, j - i);
      tokens.push_back({TokenKind::Word, std::string(word), to_upper(word)});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '.')) ++j;
      tokens.push_back({TokenKind::Number, std::string(sql.substr(i, j - i)), {}});
      i = j;
      continue;
    }
    if (c == '\'' || c == '"' || c == '`') {
      const char quote = c;
      std::string text;
      std::size_t j = i + 1;
      while (j < n) {
        if (sql[j] == quote) {
          if (j + 1 < n && sql[j + 1] == quote) {
            text.push_back(quote);
            j += 2;
            continue;
          }
          break;
        }
        text.push_back(sql[j++]);
      }
      tokens.push_back(
          {quote == '\'' ? TokenKind::String : TokenKind::QuotedIdent, std::move(text), {}});
      i = std::min(j + 1, n);
      continue;
    }
    if (c == '?' || (c == '$' && i + 1 < n && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t j = i + 1;
      while (j < n && std::isdigit(static_cast<unsigned char>(sql[j]))) ++j;
      tokens.push_back({TokenKind::Param, std::string(sql.substr(i, j - i)), {}});
      i = j;
      continue;
    }
    static constexpr std::string_view kTwoChar[] = {"<=", ">=", "<>", "!=", "||", "::"};
    bool matched = false;
    for (auto op : kTwoChar) {
      if (sql.substr(i, 2) == op) {
        tokens.push_back({TokenKind::Symbol, std::string(op), {}});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    tokens.push_back({TokenKind::Symbol, std::string(1, c), {}});
    ++i;
  }
  tokens.push_back({TokenKind::End, {}, {}});
  return tokens;
}

struct TableRef {
  std::string alias;        // name the query uses to refer to this source
  const TableMeta* table;   // nullptr for derived tables and CTEs
};

struct Scope {
  std::vector<TableRef> refs;
  const Scope* parent = nullptr;
};

struct ResolvedColumn {
  const TableMeta* table;
  const ColumnMeta* column;
  const TableRef* ref;
};

/// Operand of a predicate, reduced to what matters for indexability.
struct Operand {
  enum class Kind { Column, Literal, Expression } kind = Kind::Expression;
  std::optional<ResolvedColumn> column;  // set for Kind::Column when resolvable
  bool unresolved = false;               // bare column that could not be resolved
  std::optional<std::string> string_literal;
};

bool is_clause_keyword(const Token& t) {
  static constexpr std::string_view kWords[] = {
      "SELECT", "FROM",  "WHERE",  "GROUP", "HAVING", "ORDER",     "LIMIT",  "OFFSET",
      "UNION",  "EXCEPT", "INTERSECT", "WINDOW", "FETCH", "FOR", "QUALIFY"};
  if (t.kind != TokenKind::Word) return false;
  return std::find(std::begin(kWords), std::end(kWords), t.upper) != std::end(kWords);
}

bool is_join_keyword(const Token& t) {
  static constexpr std::string_view kWords[] = {"JOIN", "INNER", "LEFT",   "RIGHT",
                                                "FULL", "OUTER", "CROSS", "NATURAL"};
  if (t.kind != TokenKind::Word) return false;
  return std::find(std::begin(kWords), std::end(kWords), t.upper) != std::end(kWords);
}

bool is_reserved_after_table(const Token& t) {
  static constexpr std::string_view kWords[] = {"ON", "USING", "WHERE", "GROUP", "ORDER",
                                                "HAVING", "LIMIT", "UNION", "EXCEPT",
                                                "INTERSECT", "JOIN", "INNER", "LEFT", "RIGHT",
                                                "FULL", "OUTER", "CROSS", "NATURAL", "OFFSET",
                                                "WINDOW", "FETCH", "FOR"};
  if (t.kind != TokenKind::Word) return false;
  return std::find(std::begin(kWords), std::end(kWords), t.upper) != std::end(kWords);
}

class Extractor {
 public:
  Extractor(std::string_view sql, const DatabaseSchema& schema)
      : tokens_(tokenize(sql)), schema_(schema) {}

  UsageExtraction run() {
    std::size_t pos = 0;
    while (pos < tokens_.size() && is_symbol(pos, ";")) ++pos;
    if (!starts_select(pos)) {
      throw SqlParseError("statement is not a SELECT query");
    }
    auto end = statement_end(pos);
    process_query_expression(pos, end, nullptr);
    for (std::size_t i = end; i < tokens_.size(); ++i) {
      if (tokens_[i].kind != TokenKind::End && !is_symbol(i, ";")) {
        warn("trailing tokens after the first statement ignored");
        break;
      }
    }
    return std::move(result_);
  }

 private:
  // ---- token helpers -------------------------------------------------------

  [[nodiscard]] bool is_word(std::size_t i, std::string_view upper) const {
    return i < tokens_.size() && tokens_[i].kind == TokenKind::Word && tokens_[i].upper == upper;
  }
  [[nodiscard]] bool is_symbol(std::size_t i, std::string_view s) const {
    return i < tokens_.size() && tokens_[i].kind == TokenKind::Symbol && tokens_[i].text == s;
  }
  [[nodiscard]] bool at_end(std::size_t i, std::size_t end) const {
    return i >= end || tokens_[i].kind == TokenKind::End;
  }

  /// Index one past the parenthesis matching the '(' at `open`.
  [[nodiscard]] std::size_t skip_parens(std::size_t open, std::size_t end) const {
    int depth = 0;
    for (std::size_t i = open; i < end; ++i) {
      if (is_symbol(i, "(")) ++depth;
      if (is_symbol(i, ")")) {
        if (--depth == 0) return i + 1;
      }
    }
    return end;
  }

  [[nodiscard]] bool starts_select(std::size_t pos) const {
    while (is_symbol(pos, "(")) ++pos;
    return is_word(pos, "SELECT") || is_word(pos, "WITH");
  }

  [[nodiscard]] std::size_t statement_end(std::size_t pos) const {
    int depth = 0;
    for (std::size_t i = pos; i < tokens_.size(); ++i) {
      if (tokens_[i].kind == TokenKind::End) return i;
      if (is_symbol(i, "(")) ++depth;
      if (is_symbol(i, ")")) --depth;
      if (depth == 0 && is_symbol(i, ";")) return i;
    }
    return tokens_.size() - 1;
  }

  void warn(std::string message) {
    if (std::find(result_.warnings.begin(), result_.warnings.end(), message) ==
        result_.warnings.end()) {
      result_.warnings.push_back(std::move(message));
    }
  }

  void emit(const ResolvedColumn& column, OperatorClass op) {
    ColumnUsage usage{column.table->name, column.column->name, op};
    if (std::find(result_.usages.begin(), result_.usages.end(), usage) == result_.usages.end()) {
      result_.usages.push_back(std::move(usage));
    }
  }

  // ---- query structure -----------------------------------------------------

  /// SELECT ... [UNION SELECT ...], optionally preceded by WITH and wrapped in parens.
  void process_query_expression(std::size_t begin, std::size_t end, const Scope* parent) {
    Scope cte_scope;
    cte_scope.parent = parent;
    std::size_t pos = begin;
    if (is_word(pos, "WITH")) {
      ++pos;
      if (is_word(pos, "RECURSIVE")) ++pos;
      while (!at_end(pos, end)) {
        std::string name = tokens_[pos].text;
        ++pos;
        if (is_symbol(pos, "(")) pos = skip_parens(pos, end);  // column list
        if (!is_word(pos, "AS")) {
          warn("malformed WITH clause ignored");
          return;
        }
        ++pos;
        if (is_word(pos, "MATERIALIZED")) ++pos;
        if (is_word(pos, "NOT") && is_word(pos + 1, "MATERIALIZED")) pos += 2;
        if (!is_symbol(pos, "(")) {
          warn("malformed WITH clause ignored");
          return;
        }
        const auto close = skip_parens(pos, end);
        process_query_expression(pos + 1, close - 1, &cte_scope);
        cte_scope.refs.push_back({name, nullptr});
        pos = close;
        if (is_symbol(pos, ",")) {
          ++pos;
          continue;
        }
        break;
      }
    }
    const Scope* outer = cte_scope.refs.empty() ? parent : &cte_scope;

    // Split on top-level set operators.
    std::size_t part_begin = pos;
    int depth = 0;
    for (std::size_t i = pos; i <= end; ++i) {
      const bool boundary =
          i == end || (depth == 0 && (is_word(i, "UNION") || is_word(i, "EXCEPT") ||
                                      is_word(i, "INTERSECT")));
      if (boundary) {
        process_select_part(part_begin, i, outer);
        if (i == end) break;
        std::size_t next = i + 1;
        if (is_word(next, "ALL") || is_word(next, "DISTINCT")) ++next;
        part_begin = next;
        continue;
      }
      if (is_symbol(i, "(")) ++depth;
      if (is_symbol(i, ")")) --depth;
    }
  }

  void process_select_part(std::size_t begin, std::size_t end, const Scope* parent) {
    if (begin >= end) return;
    if (is_symbol(begin, "(")) {
      const auto close = skip_parens(begin, end);
      process_query_expression(begin + 1, close - 1, parent);
      if (close < end) process_trailing_clauses(close, end, parent);
      return;
    }
    if (!is_word(begin, "SELECT")) {
      warn(fmt::format("unsupported construct '{}' ignored", tokens_[begin].text));
      return;
    }

    // Locate top-level clause boundaries.
    struct Clause {
      std::string name;
      std::size_t begin;
      std::size_t end;
    };
    std::vector<Clause> clauses;
    int depth = 0;
    for (std::size_t i = begin; i < end; ++i) {
      if (is_symbol(i, "(")) ++depth;
      if (is_symbol(i, ")")) --depth;
      if (depth != 0 || !is_clause_keyword(tokens_[i])) continue;
      std::string name = tokens_[i].upper;
      std::size_t body = i + 1;
      if ((name == "GROUP" || name == "ORDER") && is_word(body, "BY")) ++body;
      if (!clauses.empty()) clauses.back().end = i;
      clauses.push_back({name, body, end});
    }

    Scope scope;
    scope.parent = parent;
    std::vector<std::pair<std::size_t, std::size_t>> join_conditions;
    for (const auto& clause : clauses) {
      if (clause.name == "FROM") process_from(clause.begin, clause.end, scope, join_conditions);
    }
    for (auto [b, e] : join_conditions) process_condition(b, e, scope);
    for (const auto& clause : clauses) {
      if (clause.name == "SELECT") {
        process_nested_queries(clause.begin, clause.end, scope);
      } else if (clause.name == "WHERE") {
        process_condition(clause.begin, clause.end, scope);
      } else if (clause.name == "GROUP" || clause.name == "ORDER") {
        process_sort_list(clause.begin, clause.end, scope);
      } else if (clause.name == "HAVING" || clause.name == "QUALIFY") {
        process_nested_queries(clause.begin, clause.end, scope);
      } else if (clause.name != "FROM" && clause.name != "LIMIT" && clause.name != "OFFSET" &&
                 clause.name != "FETCH") {
        warn(fmt::format("{} clause ignored", clause.name));
      }
    }
  }

  /// ORDER BY after a parenthesized set operation.
  void process_trailing_clauses(std::size_t begin, std::size_t /*end*/, const Scope* parent) {
    (void)parent;
    if (is_word(begin, "ORDER") || is_word(begin, "LIMIT")) return;
    warn("tokens after parenthesized query ignored");
  }

  void process_from(std::size_t begin, std::size_t end, Scope& scope,
                    std::vector<std::pair<std::size_t, std::size_t>>& join_conditions) {
    std::size_t pos = begin;
    while (!at_end(pos, end)) {
      if (is_symbol(pos, ",")) {
        ++pos;
        continue;
      }
      if (is_join_keyword(tokens_[pos])) {
        while (!at_end(pos, end) && is_join_keyword(tokens_[pos])) ++pos;
        continue;
      }
      if (is_word(pos, "LATERAL")) ++pos;
      if (is_word(pos, "ON")) {
        std::size_t cond_end = pos + 1;
        int depth = 0;
        for (; cond_end < end; ++cond_end) {
          if (is_symbol(cond_end, "(")) ++depth;
          if (is_symbol(cond_end, ")")) --depth;
          if (depth == 0 && (is_symbol(cond_end, ",") || is_join_keyword(tokens_[cond_end]))) {
            break;
          }
        }
        join_conditions.emplace_back(pos + 1, cond_end);
        pos = cond_end;
        continue;
      }
      if (is_word(pos, "USING")) {
        pos = process_using(pos + 1, end, scope);
        continue;
      }
      pos = process_table_ref(pos, end, scope);
    }
  }

  std::size_t read_alias(std::size_t pos, std::size_t end, std::string& alias) const {
    if (is_word(pos, "AS")) ++pos;
    if (!at_end(pos, end) &&
        ((tokens_[pos].kind == TokenKind::Word && !is_reserved_after_table(tokens_[pos])) ||
         tokens_[pos].kind == TokenKind::QuotedIdent)) {
      alias = tokens_[pos].text;
      ++pos;
      if (is_symbol(pos, "(")) pos = skip_parens(pos, end);  // column alias list
    }
    return pos;
  }

  std::size_t process_table_ref(std::size_t pos, std::size_t end, Scope& scope) {
    if (is_symbol(pos, "(")) {
      const auto close = skip_parens(pos, end);
      if (starts_select(pos + 1)) {
        process_query_expression(pos + 1, close - 1, scope.parent);
      } else {
        // Parenthesized join tree.
        std::vector<std::pair<std::size_t, std::size_t>> conditions;
        process_from(pos + 1, close - 1, scope, conditions);
        for (auto [b, e] : conditions) process_condition(b, e, scope);
      }
      std::string alias;
      pos = read_alias(close, end, alias);
      if (!alias.empty()) scope.refs.push_back({alias, nullptr});
      return pos;
    }
    if (tokens_[pos].kind != TokenKind::Word && tokens_[pos].kind != TokenKind::QuotedIdent) {
      warn(fmt::format("unexpected token '{}' in FROM clause", tokens_[pos].text));
      return pos + 1;
    }
    std::string name = tokens_[pos].text;
    ++pos;
    while (is_symbol(pos, ".") && !at_end(pos + 1, end)) {  // schema-qualified name
      name = tokens_[pos + 1].text;
      pos += 2;
    }
    if (is_symbol(pos, "(")) {
      warn(fmt::format("table function '{}' ignored", name));
      pos = skip_parens(pos, end);
      std::string alias;
      pos = read_alias(pos, end, alias);
      if (!alias.empty()) scope.refs.push_back({alias, nullptr});
      return pos;
    }
    const TableMeta* table = find_table(name, scope);
    std::string alias = name;
    pos = read_alias(pos, end, alias);
    if (table == nullptr && !is_cte(name, scope)) {
      warn(fmt::format("unknown table '{}' dropped", name));
    }
    scope.refs.push_back({alias, table});
    return pos;
  }

  std::size_t process_using(std::size_t pos, std::size_t end, Scope& scope) {
    if (!is_symbol(pos, "(")) return pos;
    const auto close = skip_parens(pos, end);
    // USING (c): the column joins the last two sources.
    if (scope.refs.size() >= 2) {
      const auto& right = scope.refs.back();
      for (std::size_t i = pos + 1; i + 1 < close; ++i) {
        if (tokens_[i].kind != TokenKind::Word && tokens_[i].kind != TokenKind::QuotedIdent) {
          continue;
        }
        const auto& name = tokens_[i].text;
        if (auto r = resolve_in_ref(right, name)) emit(*r, OperatorClass::Join);
        for (std::size_t k = 0; k + 1 < scope.refs.size(); ++k) {
          if (auto l = resolve_in_ref(scope.refs[k], name)) {
            emit(*l, OperatorClass::Join);
            break;
          }
        }
      }
    }
    return close;
  }

  [[nodiscard]] const TableMeta* find_table(std::string_view name, const Scope& scope) const {
    if (is_cte(name, scope)) return nullptr;
    for (const auto& table : schema_.tables) {
      if (iequals(table.name, name)) return &table;
    }
    return nullptr;
  }

  [[nodiscard]] static bool is_cte(std::string_view name, const Scope& scope) {
    for (const Scope* s = scope.parent; s != nullptr; s = s->parent) {
      for (const auto& ref : s->refs) {
        if (ref.table == nullptr && iequals(ref.alias, name)) return true;
      }
    }
    return false;
  }

  // ---- column resolution ---------------------------------------------------

  static std::optional<ResolvedColumn> resolve_in_ref(const TableRef& ref, std::string_view name) {
    if (ref.table == nullptr) return std::nullopt;
    for (const auto& column : ref.table->columns) {
      if (iequals(column.name, name)) return ResolvedColumn{ref.table, &column, &ref};
    }
    return std::nullopt;
  }

  std::optional<ResolvedColumn> resolve(const std::string* qualifier, const std::string& name,
                                        const Scope& scope, bool& unresolved) {
    unresolved = false;
    for (const Scope* s = &scope; s != nullptr; s = s->parent) {
      if (qualifier != nullptr) {
        for (const auto& ref : s->refs) {
          if (!iequals(ref.alias, *qualifier)) continue;
          if (ref.table == nullptr) return std::nullopt;  // derived table column
          if (auto r = resolve_in_ref(ref, name)) return r;
          warn(fmt::format("unknown column '{}.{}' dropped", *qualifier, name));
          unresolved = true;
          return std::nullopt;
        }
        continue;
      }
      std::optional<ResolvedColumn> found;
      bool derived_present = false;
      for (const auto& ref : s->refs) {
        if (ref.table == nullptr) derived_present = true;
        if (auto r = resolve_in_ref(ref, name)) {
          if (found && found->table != r->table) {
            warn(fmt::format("ambiguous column '{}' dropped", name));
            unresolved = true;
            return std::nullopt;
          }
          if (!found) found = r;
        }
      }
      if (found) return found;
      if (derived_present) return std::nullopt;
    }
    if (qualifier != nullptr) {
      warn(fmt::format("unknown table alias '{}' dropped", *qualifier));
    } else {
      warn(fmt::format("unknown column '{}' dropped", name));
    }
    unresolved = true;
    return std::nullopt;
  }

  // ---- expressions ---------------------------------------------------------

  /// Recurse into every parenthesized subquery inside [begin, end).
  void process_nested_queries(std::size_t begin, std::size_t end, const Scope& scope) {
    for (std::size_t i = begin; i < end; ++i) {
      if (is_symbol(i, "(") && starts_select(i + 1)) {
        const auto close = skip_parens(i, end);
        process_query_expression(i + 1, close - 1, &scope);
        i = close - 1;
      }
    }
  }

  [[nodiscard]] static bool is_comparison(const Token& t) {
    if (t.kind != TokenKind::Symbol) return false;
    return t.text == "=" || t.text == "<" || t.text == ">" || t.text == "<=" || t.text == ">=" ||
           t.text == "<>" || t.text == "!=";
  }

  [[nodiscard]] bool is_operand_stop(std::size_t i, std::size_t end) const {
    if (at_end(i, end)) return true;
    const auto& t = tokens_[i];
    if (is_comparison(t)) return true;
    if (t.kind == TokenKind::Symbol && (t.text == ")" || t.text == ",")) return true;
    if (t.kind == TokenKind::Word) {
      static constexpr std::string_view kStop[] = {"AND", "OR",   "NOT",  "BETWEEN", "LIKE",
                                                   "ILIKE", "IN", "IS",   "THEN",    "ELSE",
                                                   "WHEN",  "END", "ASC", "DESC",    "NULLS",
                                                   "ESCAPE", "SIMILAR"};
      return std::find(std::begin(kStop), std::end(kStop), t.upper) != std::end(kStop);
    }
    return false;
  }

  /// Parses one operand starting at `pos`; returns the position after it.
  std::size_t parse_operand(std::size_t pos, std::size_t end, const Scope& scope, Operand& out) {
    struct Part {
      enum class Kind { Column, Literal, Other } kind;
      std::optional<ResolvedColumn> column;
      bool unresolved = false;
      std::optional<std::string> text;
    };
    std::vector<Part> parts;
    std::size_t i = pos;
    bool expect_value = true;
    while (!is_operand_stop(i, end)) {
      const auto& t = tokens_[i];
      if (!expect_value) {
        if (t.kind == TokenKind::Symbol &&
            (t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/" ||
             t.text == "||" || t.text == "%")) {
          parts.push_back({Part::Kind::Other, std::nullopt, false, std::nullopt});
          expect_value = true;
          ++i;
          continue;
        }
        if (t.kind == TokenKind::Symbol && t.text == "::") {  // cast suffix
          i += 2;
          if (is_symbol(i, "(")) i = skip_parens(i, end);
          continue;
        }
        break;
      }
      if (t.kind == TokenKind::Symbol && (t.text == "-" || t.text == "+")) {
        ++i;
        continue;
      }
      if (t.kind == TokenKind::Number || t.kind == TokenKind::String ||
          t.kind == TokenKind::Param) {
        Part part{Part::Kind::Literal, std::nullopt, false, std::nullopt};
        if (t.kind == TokenKind::String) part.text = t.text;
        parts.push_back(std::move(part));
        ++i;
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Symbol && t.text == "(") {
        const auto close = skip_parens(i, end);
        if (starts_select(i + 1)) {
          process_query_expression(i + 1, close - 1, &scope);
          parts.push_back({Part::Kind::Literal, std::nullopt, false, std::nullopt});
        } else {
          Operand inner;
          auto after = parse_operand(i + 1, close - 1, scope, inner);
          if (after + 1 == close) {
            parts.push_back({inner.kind == Operand::Kind::Column
                                 ? Part::Kind::Column
                                 : (inner.kind == Operand::Kind::Literal ? Part::Kind::Literal
                                                                         : Part::Kind::Other),
                             inner.column, inner.unresolved, inner.string_literal});
          } else {
            process_nested_queries(i + 1, close - 1, scope);
            parts.push_back({Part::Kind::Other, std::nullopt, false, std::nullopt});
          }
        }
        i = close;
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Word && t.upper == "CASE") {
        int depth = 0;
        std::size_t j = i;
        for (; j < end; ++j) {
          if (is_word(j, "CASE")) ++depth;
          if (is_word(j, "END") && --depth == 0) break;
        }
        process_nested_queries(i, j, scope);
        parts.push_back({Part::Kind::Other, std::nullopt, false, std::nullopt});
        i = std::min(j + 1, end);
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Word &&
          (t.upper == "DATE" || t.upper == "TIMESTAMP" || t.upper == "TIME" ||
           t.upper == "INTERVAL") &&
          i + 1 < end && tokens_[i + 1].kind == TokenKind::String) {
        parts.push_back({Part::Kind::Literal, std::nullopt, false, std::nullopt});
        i += 2;
        // INTERVAL '3' MONTH
        if (t.upper == "INTERVAL" && i < end && tokens_[i].kind == TokenKind::Word &&
            !is_operand_stop(i, end)) {
          ++i;
        }
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Word &&
          (t.upper == "NULL" || t.upper == "TRUE" || t.upper == "FALSE" ||
           t.upper == "CURRENT_DATE" || t.upper == "CURRENT_TIMESTAMP")) {
        parts.push_back({Part::Kind::Literal, std::nullopt, false, std::nullopt});
        ++i;
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Word || t.kind == TokenKind::QuotedIdent) {
        if (is_symbol(i + 1, "(")) {  // function call
          const auto close = skip_parens(i + 1, end);
          bool has_column = false;
          for (std::size_t k = i + 2; k + 1 < close; ++k) {
            if ((tokens_[k].kind == TokenKind::Word || tokens_[k].kind == TokenKind::QuotedIdent) &&
                !is_symbol(k + 1, "(")) {
              has_column = true;
            }
          }
          process_nested_queries(i + 2, close - 1, scope);
          if (has_column) warn(fmt::format("function '{}' over a column ignored", t.text));
          parts.push_back(
              {has_column ? Part::Kind::Other : Part::Kind::Literal, std::nullopt, false,
               std::nullopt});
          i = close;
          expect_value = false;
          continue;
        }
        std::string first = t.text;
        std::size_t j = i + 1;
        std::optional<std::string> qualifier;
        std::string name = first;
        if (is_symbol(j, ".") && j + 1 < end &&
            (tokens_[j + 1].kind == TokenKind::Word ||
             tokens_[j + 1].kind == TokenKind::QuotedIdent)) {
          qualifier = first;
          name = tokens_[j + 1].text;
          j += 2;
          while (is_symbol(j, ".") && j + 1 < end) {  // schema.table.column
            qualifier = name;
            name = tokens_[j + 1].text;
            j += 2;
          }
        } else if (is_symbol(j, ".") && is_symbol(j + 1, "*")) {
          parts.push_back({Part::Kind::Other, std::nullopt, false, std::nullopt});
          i = j + 2;
          expect_value = false;
          continue;
        }
        bool unresolved = false;
        auto column = resolve(qualifier ? &*qualifier : nullptr, name, scope, unresolved);
        parts.push_back({Part::Kind::Column, column, unresolved, std::nullopt});
        i = j;
        expect_value = false;
        continue;
      }
      if (t.kind == TokenKind::Symbol && t.text == "*") {
        parts.push_back({Part::Kind::Other, std::nullopt, false, std::nullopt});
        ++i;
        expect_value = false;
        continue;
      }
      break;
    }

    out = Operand{};
    if (parts.size() == 1 && parts[0].kind == Part::Kind::Column) {
      out.kind = Operand::Kind::Column;
      out.column = parts[0].column;
      out.unresolved = parts[0].unresolved;
    } else if (!parts.empty() &&
               std::all_of(parts.begin(), parts.end(), [](const Part& p) {
                 return p.kind != Part::Kind::Column;
               }) &&
               std::none_of(parts.begin(), parts.end(), [](const Part& p) {
                 return p.kind == Part::Kind::Other && p.column.has_value();
               })) {
      // Arithmetic over literals only still counts as a literal.
      bool literal = true;
      for (std::size_t k = 0; k < parts.size(); k += 2) {
        if (parts[k].kind != Part::Kind::Literal) literal = false;
      }
      out.kind = literal ? Operand::Kind::Literal : Operand::Kind::Expression;
      if (parts.size() == 1) out.string_literal = parts[0].text;
    } else {
      out.kind = Operand::Kind::Expression;
      if (std::any_of(parts.begin(), parts.end(),
                      [](const Part& p) { return p.kind == Part::Kind::Column; })) {
        warn("non-sargable expression over a column ignored");
      }
    }
    return i == pos ? pos + 1 : i;
  }

  /// Boolean condition: terms separated by AND / OR.
  void process_condition(std::size_t begin, std::size_t end, const Scope& scope) {
    std::size_t pos = begin;
    while (!at_end(pos, end)) {
      if (is_word(pos, "AND") || is_word(pos, "OR")) {
        ++pos;
        continue;
      }
      pos = process_term(pos, end, scope, false);
    }
  }

  std::size_t process_term(std::size_t pos, std::size_t end, const Scope& scope, bool negated) {
    if (is_word(pos, "NOT")) return process_term(pos + 1, end, scope, !negated);
    if (is_word(pos, "EXISTS") && is_symbol(pos + 1, "(")) {
      const auto close = skip_parens(pos + 1, end);
      process_query_expression(pos + 2, close - 1, &scope);
      return close;
    }
    if (is_symbol(pos, "(") && !starts_select(pos + 1)) {
      const auto close = skip_parens(pos, end);
      // A parenthesized boolean group unless a comparison follows it.
      if (close >= end || !(is_comparison(tokens_[close]) || is_word(close, "BETWEEN") ||
                            is_word(close, "IN") || is_word(close, "LIKE") ||
                            is_word(close, "IS") || is_word(close, "NOT") ||
                            (tokens_[close].kind == TokenKind::Symbol &&
                             tokens_[close].text != ")" && tokens_[close].text != ","))) {
        if (negated) {
          warn("negated condition group ignored");
          process_nested_queries(pos + 1, close - 1, scope);
        } else {
          process_condition(pos + 1, close - 1, scope);
        }
        return close;
      }
    }
    return process_predicate(pos, end, scope, negated);
  }

  std::size_t process_predicate(std::size_t pos, std::size_t end, const Scope& scope,
                                bool negated) {
    Operand left;
    std::size_t i = parse_operand(pos, end, scope, left);
    bool not_kw = false;
    if (is_word(i, "NOT")) {
      not_kw = true;
      ++i;
    }
    const bool neg = negated != not_kw;

    if (!at_end(i, end) && is_comparison(tokens_[i])) {
      const std::string op = tokens_[i].text;
      Operand right;
      // ANY / ALL / SOME (subquery)
      std::size_t r = i + 1;
      if (is_word(r, "ANY") || is_word(r, "ALL") || is_word(r, "SOME")) ++r;
      i = parse_operand(r, end, scope, right);
      classify_comparison(left, op, right, neg);
      return i;
    }
    if (is_word(i, "BETWEEN")) {
      Operand low;
      Operand high;
      i = parse_operand(i + 1, end, scope, low);
      if (is_word(i, "AND")) i = parse_operand(i + 1, end, scope, high);
      if (left.kind == Operand::Kind::Column && left.column) {
        if (neg) {
          warn("NOT BETWEEN predicate ignored");
        } else {
          emit(*left.column, OperatorClass::Range);
        }
      }
      return i;
    }
    if (is_word(i, "LIKE") || is_word(i, "ILIKE")) {
      const bool case_insensitive = is_word(i, "ILIKE");
      Operand pattern;
      i = parse_operand(i + 1, end, scope, pattern);
      if (is_word(i, "ESCAPE")) i = parse_operand(i + 1, end, scope, pattern);
      if (left.kind == Operand::Kind::Column && left.column) {
        const bool prefix = pattern.string_literal && !pattern.string_literal->empty() &&
                            pattern.string_literal->front() != '%' &&
                            pattern.string_literal->front() != '_';
        if (neg) {
          warn("NOT LIKE predicate ignored");
        } else if (prefix && !case_insensitive) {
          emit(*left.column, OperatorClass::Range);
        } else {
          warn("LIKE without a literal prefix ignored");
        }
      }
      return i;
    }
    if (is_word(i, "IN") && is_symbol(i + 1, "(")) {
      const auto close = skip_parens(i + 1, end);
      const bool subquery = starts_select(i + 2);
      if (subquery) {
        process_query_expression(i + 2, close - 1, &scope);
      } else {
        process_nested_queries(i + 2, close - 1, scope);
      }
      if (left.kind == Operand::Kind::Column && left.column) {
        if (neg) {
          warn("NOT IN predicate ignored");
        } else {
          emit(*left.column, subquery ? OperatorClass::Join : OperatorClass::Eq);
        }
      }
      return close;
    }
    if (is_word(i, "IS")) {
      ++i;
      if (is_word(i, "NOT")) ++i;
      if (is_word(i, "DISTINCT") && is_word(i + 1, "FROM")) {
        Operand right;
        return parse_operand(i + 2, end, scope, right);
      }
      if (!at_end(i, end)) ++i;  // NULL / TRUE / FALSE
      if (left.kind == Operand::Kind::Column && left.column) warn("IS predicate ignored");
      return i;
    }
    // Bare boolean operand or unsupported syntax: skip to the next connective.
    if (left.kind == Operand::Kind::Column && left.column) warn("bare boolean column ignored");
    int depth = 0;
    while (!at_end(i, end)) {
      if (is_symbol(i, "(")) ++depth;
      if (is_symbol(i, ")")) --depth;
      if (depth <= 0 && (is_word(i, "AND") || is_word(i, "OR"))) break;
      ++i;
    }
    return i;
  }

  void classify_comparison(const Operand& left, const std::string& op, const Operand& right,
                           bool negated) {
    const bool left_col = left.kind == Operand::Kind::Column && left.column.has_value();
    const bool right_col = right.kind == Operand::Kind::Column && right.column.has_value();
    if (negated || op == "<>" || op == "!=") {
      if (left_col || right_col) warn(fmt::format("'{}' predicate ignored", negated ? "NOT" : op));
      return;
    }
    if (left_col && right_col) {
      if (op != "=") {
        warn("non-equi join predicate ignored");
        return;
      }
      if (left.column->ref == right.column->ref) {
        warn("same-source column comparison ignored");
        return;
      }
      emit(*left.column, OperatorClass::Join);
      emit(*right.column, OperatorClass::Join);
      return;
    }
    // Equality with a column of a derived table or CTE still joins the base column.
    const bool left_derived = left.kind == Operand::Kind::Column && !left.column && !left.unresolved;
    const bool right_derived =
        right.kind == Operand::Kind::Column && !right.column && !right.unresolved;
    if (op == "=" && ((left_col && right_derived) || (right_col && left_derived))) {
      emit(left_col ? *left.column : *right.column, OperatorClass::Join);
      return;
    }
    const OperatorClass cls = op == "=" ? OperatorClass::Eq : OperatorClass::Range;
    if (left_col && right.kind == Operand::Kind::Literal) {
      emit(*left.column, cls);
    } else if (right_col && left.kind == Operand::Kind::Literal) {
      emit(*right.column, cls);
    } else if (left_col || right_col) {
      warn("comparison against a non-constant expression ignored");
    }
  }

  void process_sort_list(std::size_t begin, std::size_t end, const Scope& scope) {
    std::size_t pos = begin;
    while (!at_end(pos, end)) {
      if (is_symbol(pos, ",")) {
        ++pos;
        continue;
      }
      if (is_word(pos, "ROLLUP") || is_word(pos, "CUBE") || is_word(pos, "GROUPING")) {
        warn("grouping sets ignored");
        while (!at_end(pos, end) && !is_symbol(pos, ",")) {
          pos = is_symbol(pos, "(") ? skip_parens(pos, end) : pos + 1;
        }
        continue;
      }
      if (tokens_[pos].kind == TokenKind::Number) {
        warn("positional GROUP BY / ORDER BY reference ignored");
        ++pos;
      } else {
        Operand item;
        // Aliases from the select list resolve to nothing in the schema; stay quiet about them.
        const auto saved = result_.warnings.size();
        pos = parse_operand(pos, end, scope, item);
        if (item.kind == Operand::Kind::Column && item.column) {
          emit(*item.column, OperatorClass::SortGroup);
        } else if (item.kind == Operand::Kind::Column && item.unresolved) {
          result_.warnings.resize(saved);
          warn("GROUP BY / ORDER BY item not resolvable to a column ignored");
        }
      }
      while (!at_end(pos, end) && !is_symbol(pos, ",")) ++pos;  // ASC / DESC / NULLS ...
    }
  }

  std::vector<Token> tokens_;
  const DatabaseSchema& schema_;
  UsageExtraction result_;
};

}  // namespace

UsageExtraction extract_column_usages(std::string_view sql, const DatabaseSchema& schema) {
  return Extractor(sql, schema).run();
}

}  // namespace maadvisor
