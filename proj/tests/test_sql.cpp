#include <doctest.h>

#include <algorithm>
#include <set>

#include "maadvisor/io.hpp"
#include "maadvisor/sql.hpp"

using namespace maadvisor;

namespace {

const DatabaseSchema& schema() {
  static const DatabaseSchema s = load_schema(R"({"tables":[
    {"name":"orders","rows":1000,"columns":[
      {"name":"o_id","cardinality":1000,"width_bytes":4},
      {"name":"o_date","cardinality":100,"width_bytes":4},
      {"name":"o_status","cardinality":3,"width_bytes":1},
      {"name":"o_cust","cardinality":50,"width_bytes":4}]},
    {"name":"lines","rows":5000,"columns":[
      {"name":"l_oid","cardinality":1000,"width_bytes":4},
      {"name":"l_price","cardinality":900,"width_bytes":8},
      {"name":"l_ship","cardinality":200,"width_bytes":4},
      {"name":"l_comment","cardinality":4000,"width_bytes":40}]},
    {"name":"customer","rows":50,"columns":[
      {"name":"c_id","cardinality":50,"width_bytes":4},
      {"name":"c_name","cardinality":50,"width_bytes":20},
      {"name":"c_nation","cardinality":25,"width_bytes":4}]}
  ]})");
  return s;
}

using U = ColumnUsage;
constexpr auto Eq = OperatorClass::Eq;
constexpr auto Range = OperatorClass::Range;
constexpr auto Join = OperatorClass::Join;
constexpr auto SortGroup = OperatorClass::SortGroup;

std::vector<U> sorted(std::vector<U> v) {
  std::sort(v.begin(), v.end(), [](const U& a, const U& b) {
    return std::tie(a.table, a.column, a.op) < std::tie(b.table, b.column, b.op);
  });
  return v;
}

void expect_usages(const std::string& sql, std::vector<U> expected) {
  INFO(sql);
  auto got = extract_column_usages(sql, schema());
  CHECK(sorted(got.usages) == sorted(std::move(expected)));
}

}  // namespace

TEST_CASE("single predicates") {
  expect_usages("SELECT * FROM orders WHERE o_id = 5", {{"orders", "o_id", Eq}});
  expect_usages("SELECT * FROM orders WHERE 5 = o_id", {{"orders", "o_id", Eq}});
  expect_usages("select * from orders where o_date >= '2020-01-01'", {{"orders", "o_date", Range}});
  expect_usages("SELECT * FROM orders WHERE o_date BETWEEN 1 AND 9", {{"orders", "o_date", Range}});
  expect_usages("SELECT * FROM customer WHERE c_name LIKE 'Ab%'", {{"customer", "c_name", Range}});
  expect_usages("SELECT * FROM orders WHERE o_status IN ('F', 'O')", {{"orders", "o_status", Eq}});
  expect_usages("SELECT * FROM orders WHERE o_id = ?", {{"orders", "o_id", Eq}});
  expect_usages("SELECT * FROM orders WHERE o_date < DATE '1995-01-01' + INTERVAL '3' MONTH",
                {{"orders", "o_date", Range}});
}

TEST_CASE("explicit join with ORDER BY") {
  expect_usages(
      "SELECT * FROM orders o JOIN lines l ON o.o_id = l.l_oid ORDER BY o.o_date",
      {{"orders", "o_id", Join}, {"lines", "l_oid", Join}, {"orders", "o_date", SortGroup}});
}

TEST_CASE("implicit equi-join, filters and grouping") {
  expect_usages(
      "SELECT c_nation, SUM(l_price) FROM customer, orders, lines "
      "WHERE c_id = o_cust AND o_id = l_oid AND l_ship > 10 AND o_status = 'F' "
      "GROUP BY c_nation ORDER BY c_nation",
      {{"customer", "c_id", Join},
       {"orders", "o_cust", Join},
       {"orders", "o_id", Join},
       {"lines", "l_oid", Join},
       {"lines", "l_ship", Range},
       {"orders", "o_status", Eq},
       {"customer", "c_nation", SortGroup}});
}

TEST_CASE("subqueries are recursed into") {
  expect_usages(
      "SELECT * FROM orders WHERE o_cust IN (SELECT c_id FROM customer WHERE c_nation = 7)",
      {{"orders", "o_cust", Join}, {"customer", "c_nation", Eq}});
  expect_usages(
      "SELECT * FROM orders o WHERE EXISTS (SELECT 1 FROM lines l WHERE l.l_oid = o.o_id "
      "AND l.l_price > 100)",
      {{"lines", "l_oid", Join}, {"orders", "o_id", Join}, {"lines", "l_price", Range}});
  expect_usages(
      "SELECT x.total FROM (SELECT l_oid, SUM(l_price) AS total FROM lines GROUP BY l_oid) x "
      "WHERE x.total > 5",
      {{"lines", "l_oid", SortGroup}});
  expect_usages("SELECT * FROM lines WHERE l_price > (SELECT AVG(l_price) FROM lines)",
                {{"lines", "l_price", Range}});
  expect_usages(
      "WITH big AS (SELECT o_id FROM orders WHERE o_status = 'F') "
      "SELECT * FROM big JOIN lines ON big.o_id = lines.l_oid",
      {{"orders", "o_status", Eq}, {"lines", "l_oid", Join}});
}

TEST_CASE("set operations and nested boolean groups") {
  expect_usages(
      "SELECT o_id FROM orders WHERE o_date > 3 UNION ALL SELECT l_oid FROM lines WHERE l_ship = 2",
      {{"orders", "o_date", Range}, {"lines", "l_ship", Eq}});
  expect_usages("SELECT * FROM orders WHERE (o_id = 1 OR (o_status = 'F' AND o_date < 10))",
                {{"orders", "o_id", Eq}, {"orders", "o_status", Eq}, {"orders", "o_date", Range}});
  expect_usages(
      "SELECT * FROM orders LEFT OUTER JOIN lines USING (l_oid) WHERE o_id = 1",
      {{"orders", "o_id", Eq}, {"lines", "l_oid", Join}});
}

TEST_CASE("unsupported constructs are ignored with warnings") {
  auto r = extract_column_usages("SELECT 1", schema());
  CHECK(r.usages.empty());

  r = extract_column_usages("SELECT * FROM orders WHERE UPPER(o_status) = 'F'", schema());
  CHECK(r.usages.empty());
  CHECK_FALSE(r.warnings.empty());

  r = extract_column_usages("SELECT * FROM customer WHERE c_name LIKE '%x'", schema());
  CHECK(r.usages.empty());
  CHECK_FALSE(r.warnings.empty());

  r = extract_column_usages("SELECT * FROM orders WHERE o_id <> 3 AND NOT o_date = 4", schema());
  CHECK(r.usages.empty());

  r = extract_column_usages("SELECT * FROM orders WHERE o_missing = 3 AND o_id = 1", schema());
  CHECK(r.usages == std::vector<U>{{"orders", "o_id", Eq}});
  CHECK(std::any_of(r.warnings.begin(), r.warnings.end(),
                    [](const std::string& w) { return w.find("o_missing") != std::string::npos; }));

  r = extract_column_usages("SELECT * FROM ghosts g WHERE g.x = 1", schema());
  CHECK(r.usages.empty());
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("non-SELECT statements are rejected") {
  CHECK_THROWS_AS(extract_column_usages("DELETE FROM orders", schema()), SqlParseError);
  CHECK_THROWS_AS(extract_column_usages("", schema()), SqlParseError);
  CHECK_THROWS_AS(extract_column_usages("CREATE INDEX i ON orders(o_id)", schema()), SqlParseError);
}

TEST_CASE("duplicate usages collapse, distinct operators remain") {
  auto r = extract_column_usages(
      "SELECT * FROM orders WHERE o_id = 1 AND o_id > 0 AND o_id = 2 ORDER BY o_id", schema());
  CHECK(r.usages == std::vector<U>{{"orders", "o_id", Eq},
                                   {"orders", "o_id", Range},
                                   {"orders", "o_id", SortGroup}});
}

TEST_CASE("usage count never exceeds schema columns") {
  const char* statements[] = {
      "SELECT * FROM orders o, lines l, customer c WHERE o.o_id = l.l_oid AND c.c_id = o.o_cust "
      "AND o.o_date > 1 AND l.l_ship < 3 AND c.c_nation = 1 AND l.l_price BETWEEN 1 AND 2 "
      "GROUP BY o.o_status, c.c_name, l.l_comment ORDER BY o.o_date"};
  for (const char* sql : statements) {
    auto r = extract_column_usages(sql, schema());
    std::set<std::pair<std::string, std::string>> distinct;
    for (const auto& u : r.usages) {
      CHECK(schema().find_column(u.table, u.column) != nullptr);
      distinct.emplace(u.table, u.column);
    }
    CHECK(distinct.size() <= schema().column_count());
    CHECK(distinct.size() == 11);
  }
}
