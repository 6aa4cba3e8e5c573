#include <doctest.h>

#include <cmath>

#include "maadvisor/generator.hpp"
#include "maadvisor/oracle.hpp"
#include "maadvisor/random.hpp"
#include "support.hpp"

using namespace maadvisor;

namespace {

// Direct evaluation of the factor formula, written out per S1 column.
constexpr double kEqId = 0.1 + 0.9 / 10000.0;      // o_id, Eq
constexpr double kJoinId = 0.3 + 0.7 / 10000.0;    // o_id, Join
constexpr double kRangeDate = 0.4 + 0.6 / 2000.0;  // o_date, Range
constexpr double kSortDate = 0.7 + 0.3 / 2000.0;   // o_date, SortGroup

IndexConfiguration config_of(std::vector<Index> indexes) {
  IndexConfiguration c;
  c.indexes = std::move(indexes);
  return c;
}

const Index kId{"orders", {"o_id"}};
const Index kDate{"orders", {"o_date"}};
const Index kIdDate{"orders", {"o_id", "o_date"}};

}  // namespace

TEST_CASE("index storage") {
  testing::S1 s1;
  CHECK(s1.oracle.estimate_index_storage(kId) == doctest::Approx(120000.0 / 1048576.0));
  CHECK(s1.oracle.estimate_index_storage(kId) == doctest::Approx(0.11444).epsilon(1e-4));
  CHECK(s1.oracle.estimate_index_storage(kIdDate) == doctest::Approx(0.15259).epsilon(1e-4));
  CHECK_THROWS_AS(s1.oracle.estimate_index_storage(Index{"orders", {"nope"}}), OracleError);
  CHECK_THROWS_AS(s1.oracle.estimate_index_storage(Index{"nope", {"o_id"}}), OracleError);

  auto empty = std::make_shared<const DatabaseSchema>(load_schema(
      R"({"tables":[{"name":"e","rows":0,"columns":[{"name":"c","cardinality":1,"width_bytes":4}]}]})"));
  SyntheticOracle oracle(empty);
  CHECK(oracle.estimate_index_storage(Index{"e", {"c"}}) == 0.0);
}

TEST_CASE("query and workload cost on S1") {
  testing::S1 s1;
  const auto& q1 = s1.workload.queries[0];
  CHECK(s1.oracle.estimate_query_cost(q1, {}) == 100.0);
  CHECK(s1.oracle.estimate_query_cost(q1, config_of({kId})) == doctest::Approx(100.0 * kEqId));
  CHECK(s1.oracle.estimate_query_cost(q1, config_of({kId})) == doctest::Approx(10.009));
  CHECK(s1.oracle.estimate_query_cost(q1, config_of({kIdDate})) ==
        doctest::Approx(100.0 * kEqId * kRangeDate * 0.9));
  CHECK(s1.oracle.estimate_query_cost(q1, config_of({kIdDate})) == doctest::Approx(3.606).epsilon(1e-3));

  CHECK(s1.oracle.estimate_workload_cost(s1.workload, {}) == 300.0);
  CHECK(s1.oracle.estimate_workload_cost(s1.workload, config_of({kId})) ==
        doctest::Approx(100.0 * kEqId + 200.0 * kJoinId));
  CHECK(s1.oracle.estimate_workload_cost(s1.workload, config_of({kId})) == doctest::Approx(70.023));
  const double composite = 100.0 * kEqId * kRangeDate * 0.9 + 200.0 * kJoinId * kSortDate * 0.9;
  CHECK(s1.oracle.estimate_workload_cost(s1.workload, config_of({kIdDate})) ==
        doctest::Approx(composite));
  CHECK(s1.oracle.estimate_workload_cost(s1.workload, config_of({kIdDate})) ==
        doctest::Approx(41.42).epsilon(1e-3));

  // Best single index per table, no stacking.
  CHECK(s1.oracle.estimate_workload_cost(s1.workload, config_of({kId, kDate})) ==
        doctest::Approx(70.023));

  Query no_base{"x", "SELECT 1", std::nullopt, {}};
  CHECK_THROWS_AS(s1.oracle.estimate_query_cost(no_base, {}), OracleError);
}

TEST_CASE("prefix matching stops at the first unused column") {
  testing::S1 s1;
  Query q{"q", "", 50.0, {{"orders", "o_date", OperatorClass::Range}}};
  // o_id leads and is unused by q, so the composite is not applicable.
  CHECK(s1.oracle.estimate_query_cost(q, config_of({kIdDate})) == 50.0);
  Index date_id{"orders", {"o_date", "o_id"}};
  CHECK(s1.oracle.estimate_query_cost(q, config_of({date_id})) == doctest::Approx(50.0 * kRangeDate));
}

TEST_CASE("cost floor") {
  auto schema = std::make_shared<const DatabaseSchema>(load_schema(
      R"({"tables":[{"name":"t","rows":1000000,"columns":[
        {"name":"a","cardinality":1000000,"width_bytes":4},
        {"name":"b","cardinality":1000000,"width_bytes":4}]}]})"));
  SyntheticOracleConfig cfg;
  cfg.operator_weights[0] = 1.0;
  SyntheticOracle oracle(schema, cfg);
  Query q{"q", "", 10.0, {{"t", "a", OperatorClass::Eq}, {"t", "b", OperatorClass::Eq}}};
  CHECK(oracle.estimate_query_cost(q, config_of({Index{"t", {"a", "b"}}})) ==
        doctest::Approx(0.01 * 10.0));
}

TEST_CASE("perturb_statistics") {
  testing::S1 s1;
  auto same = perturb_statistics(s1.oracle, {7, 0.0, 100.0});
  auto unit = perturb_statistics(s1.oracle, {7, 1.0, 1.0});
  const IndexConfiguration configs[] = {config_of({}), config_of({kId}), config_of({kIdDate}),
                                        config_of({kDate})};
  for (const auto& c : configs) {
    CHECK(same.estimate_workload_cost(s1.workload, c) == s1.oracle.estimate_workload_cost(s1.workload, c));
    CHECK(unit.estimate_workload_cost(s1.workload, c) == s1.oracle.estimate_workload_cost(s1.workload, c));
  }
  CHECK(same.perturbed_columns().empty());

  auto a = perturb_statistics(s1.oracle, {7, 0.2, 100.0});
  auto b = perturb_statistics(s1.oracle, {7, 0.2, 100.0});
  // round(0.2 * 3) = 1 column.
  CHECK(a.perturbed_columns().size() == 1);
  CHECK(a.perturbed_columns() == b.perturbed_columns());
  for (const auto& c : configs) {
    CHECK(a.estimate_workload_cost(s1.workload, c) == b.estimate_workload_cost(s1.workload, c));
  }
  // The wrapped oracle is untouched.
  CHECK(s1.oracle.perturbed_columns().empty());
  CHECK(s1.oracle.estimated_cardinality("orders", "o_id") == 10000.0);

  auto full = perturb_statistics(s1.oracle, {4, 1.0, 10.0});
  CHECK(full.perturbed_columns().size() == 3);
  // Truth is unaffected by perturbation.
  for (const auto& c : configs) {
    CHECK(full.true_cost(s1.workload, c) == s1.oracle.true_cost(s1.workload, c));
  }
  CHECK_THROWS_AS(perturb_statistics(s1.oracle, {1, 1.5, 2.0}), ValidationError);
  CHECK_THROWS_AS(perturb_statistics(s1.oracle, {1, 0.5, 0.0}), ValidationError);
}

TEST_CASE("true cost") {
  testing::S1 s1;
  CHECK(s1.oracle.true_cost(s1.workload, {}) == s1.oracle.estimate_workload_cost(s1.workload, {}));
  CHECK(true_cost(s1.workload, {}, *s1.schema) == 300.0);

  // An index used by q1 only: o_status equality appears in a one-off query.
  Workload w = s1.workload;
  Query q3{"q3", "", 80.0, {{"orders", "o_status", OperatorClass::SortGroup}}};
  w.queries.push_back(q3);
  const Index status{"orders", {"o_status"}};
  const double est = s1.oracle.estimate_workload_cost(w, config_of({status}));
  CHECK(s1.oracle.true_cost(w, config_of({status})) == doctest::Approx(est + 0.02 * 80.0));

  // I(o_id) is applicable to both S1 queries.
  const double est_id = s1.oracle.estimate_workload_cost(s1.workload, config_of({kId}));
  CHECK(s1.oracle.true_cost(s1.workload, config_of({kId})) ==
        doctest::Approx(est_id + 0.02 * 100.0 + 0.02 * 200.0));

  // Dominated index: no estimated benefit, so it is a true regression.
  const double with_both = s1.oracle.true_cost(s1.workload, config_of({kId, kDate}));
  const double with_id = s1.oracle.true_cost(s1.workload, config_of({kId}));
  CHECK(with_both > with_id);

  // Low-cardinality SortGroup index whose benefit is below the overhead.
  auto schema = std::make_shared<const DatabaseSchema>(load_schema(
      R"({"tables":[{"name":"t","rows":100,"columns":[{"name":"flag","cardinality":1,"width_bytes":1}]}]})"));
  SyntheticOracle small(schema);
  Workload lw;
  lw.queries.push_back(Query{"q", "", 100.0, {{"t", "flag", OperatorClass::SortGroup}}});
  const Index flag{"t", {"flag"}};
  const double delta = small.true_cost(lw, {}) - small.true_cost(lw, config_of({flag}));
  CHECK(delta < 0.0);
}

TEST_CASE("oracle properties over random instances") {
  SplitMix64 rng(3);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SyntheticInstanceSpec spec;
    spec.seed = seed;
    auto instance = generate_instance(spec);
    SyntheticOracle oracle(instance.schema);
    std::vector<Index> pool;
    for (const auto& table : instance.schema->tables) {
      for (const auto& column : table.columns) pool.push_back(Index{table.name, {column.name}});
      if (table.columns.size() >= 2) {
        pool.push_back(Index{table.name, {table.columns[1].name, table.columns[0].name}});
      }
    }
    for (int trial = 0; trial < 25; ++trial) {
      IndexConfiguration small;
      IndexConfiguration large;
      for (const auto& index : pool) {
        const double u = rng.uniform();
        if (u < 0.25) small.indexes.push_back(index);
        if (u < 0.6) large.indexes.push_back(index);
      }
      for (const auto& q : instance.workload.queries) {
        const double cs = oracle.estimate_query_cost(q, small);
        const double cl = oracle.estimate_query_cost(q, large);
        CHECK(cl <= cs);
        CHECK(cl >= 0.01 * *q.base_cost);
        CHECK(oracle.true_query_cost(q, large) >= cl);
      }
      double sum = 0.0;
      for (const auto& index : large.indexes) sum += oracle.estimate_index_storage(index);
      CHECK(oracle.estimate_configuration_storage(large) == doctest::Approx(sum));
    }
  }
}

namespace {

class FakeSession : public HypotheticalIndexSession {
 public:
  std::int64_t create_hypothetical_index(const Index& index) override {
    live.push_back(index);
    return next_++;
  }
  void drop_hypothetical_index(std::int64_t) override {
    if (!live.empty()) live.pop_back();
  }
  double hypothetical_index_size_bytes(std::int64_t) override { return 8192.0 * 16; }
  double explain_cost(const std::string&) override {
    return 1000.0 / static_cast<double>(1 + live.size());
  }
  double column_distinct_estimate(const std::string&, const std::string&) override { return 42; }

  std::vector<Index> live;

 private:
  std::int64_t next_ = 1;
};

}  // namespace

TEST_CASE("live oracle adapter over a session") {
  testing::S1 s1;
  auto session = std::make_unique<FakeSession>();
  auto* raw = session.get();
  LiveOracle oracle(s1.schema, std::move(session));
  const auto& q1 = s1.workload.queries[0];
  CHECK(oracle.estimate_query_cost(q1, {}) == 1000.0);
  CHECK(oracle.estimate_query_cost(q1, config_of({kId, kDate})) == doctest::Approx(1000.0 / 3));
  CHECK(raw->live.empty());  // hypothetical indexes are dropped after each call
  CHECK(oracle.estimate_index_storage(kId) == doctest::Approx(0.125));
  CHECK(oracle.estimated_cardinality("orders", "o_id") == 42.0);
  CHECK_THROWS_AS(open_live_session(""), OracleError);
}
