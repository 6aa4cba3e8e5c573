#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "maadvisor/baselines.hpp"
#include "maadvisor/generator.hpp"
#include "support.hpp"

using namespace maadvisor;

namespace {

const double kSingle = 10000.0 * 12.0 / 1048576.0;
const double kComposite = 10000.0 * 16.0 / 1048576.0;
// Closed forms for S1 under the default synthetic weights.
const double kCostOid = 100.0 * (0.1 + 0.9 / 10000) + 200.0 * (0.3 + 0.7 / 10000);
const double kCostComposite = 100.0 * (0.1 + 0.9 / 10000) * (0.4 + 0.6 / 2000) * 0.9 +
                              200.0 * (0.3 + 0.7 / 10000) * (0.7 + 0.3 / 2000) * 0.9;

double workload_cost(const CostOracle& oracle, const Workload& w, const IndexConfiguration& c) {
  double total = 0.0;
  for (const auto& q : w.queries) total += oracle.estimate_query_cost(q, c);
  return total;
}

}  // namespace

TEST_CASE("benefit_to_cost") {
  CHECK(benefit_to_cost(100, 80, 10) == doctest::Approx(2.0));
  CHECK(benefit_to_cost(100, 120, 10) == doctest::Approx(-2.0));
  CHECK(benefit_to_cost(300, kCostComposite, kComposite) == doctest::Approx(1694.5).epsilon(1e-4));
  CHECK_THROWS_AS(benefit_to_cost(100, 80, 0), ValidationError);
}

TEST_CASE("relative_improvement") {
  CHECK(std::abs(relative_improvement(193.58, 161.28) - 16.69) <= 0.01);
  CHECK(std::abs(relative_improvement(193.58, 155.54) - 19.65) <= 0.01);
  CHECK(relative_improvement(100, 100) == 0.0);
  CHECK(relative_improvement(100, 0) == 100.0);
  CHECK_THROWS_AS(relative_improvement(0, 10), ValidationError);
}

TEST_CASE("extend_advisor on S1") {
  testing::S1 s1;
  SUBCASE("first move is I(o_id)") {
    // Widening needs more than 0.12 MB, so the run stops after one move.
    std::vector<double> history;
    auto c = extend_advisor(s1.workload, s1.oracle, 0.12, 3, &history);
    CHECK(c.keys() == std::vector<std::string>{"I(C orders.o_id)"});
    REQUIRE(history.size() == 1);
    CHECK(history[0] == doctest::Approx(kCostOid));
    CHECK((300.0 - kCostOid) / kSingle == doctest::Approx(2009.6).epsilon(1e-4));
  }
  SUBCASE("widening beats adding I(o_date)") {
    // With I(o_id) present, I(o_date) changes neither query's best factor.
    const double add_ratio = 0.0 / kSingle;
    const double widen_ratio = (kCostOid - kCostComposite) / (kComposite - kSingle);
    CHECK(widen_ratio > add_ratio);
    std::vector<double> history;
    auto c = extend_advisor(s1.workload, s1.oracle, 0.3, 3, &history);
    CHECK(c.keys() == std::vector<std::string>{"I(C orders.o_id,C orders.o_date)"});
    CHECK(c.est_storage_mb == doctest::Approx(kComposite));
    REQUIRE(history.size() == 2);
    CHECK(history[0] == doctest::Approx(kCostOid));
    CHECK(history[1] == doctest::Approx(kCostComposite));
  }
  SUBCASE("budget below every single-column storage") {
    CHECK(extend_advisor(s1.workload, s1.oracle, 0.1).indexes.empty());
  }
  CHECK_THROWS_AS(extend_advisor(s1.workload, s1.oracle, -1.0), ValidationError);
}

TEST_CASE("drop_advisor on S1") {
  testing::S1 s1;
  auto all = drop_advisor(s1.workload, s1.oracle, 10.0);
  CHECK(all.keys() == std::vector<std::string>{"I(C orders.o_id)", "I(C orders.o_date)"});
  CHECK(all.est_storage_mb == doctest::Approx(2 * kSingle));
  // Dropping I(o_date) costs nothing while I(o_id) is kept (see extend).
  CHECK(drop_advisor(s1.workload, s1.oracle, 0.12).keys() ==
        std::vector<std::string>{"I(C orders.o_id)"});
  CHECK(drop_advisor(s1.workload, s1.oracle, 0.0).indexes.empty());
}

TEST_CASE("brute_force_optimal") {
  testing::S1 s1;
  const std::vector<Index> universe{Index{"orders", {"o_id"}}, Index{"orders", {"o_date"}},
                                    Index{"orders", {"o_id", "o_date"}}};
  auto best = brute_force_optimal(s1.workload, s1.oracle, 0.16, universe);
  CHECK(best.keys() == std::vector<std::string>{"I(C orders.o_id,C orders.o_date)"});
  CHECK(workload_cost(s1.oracle, s1.workload, best) == doctest::Approx(kCostComposite));

  CHECK(brute_force_optimal(s1.workload, s1.oracle, 0.12, {universe[0]}).keys() ==
        std::vector<std::string>{"I(C orders.o_id)"});
  CHECK(brute_force_optimal(s1.workload, s1.oracle, 0.05, universe).indexes.empty());

  // {I(o_id)} and {I(o_id), I(o_date)} cost the same; the smaller one wins.
  auto tie = brute_force_optimal(s1.workload, s1.oracle, 0.3, {universe[0], universe[1]});
  CHECK(tie.keys() == std::vector<std::string>{"I(C orders.o_id)"});
  // Same cost and storage: lexicographically smaller key list.
  auto twin = brute_force_optimal(s1.workload, s1.oracle, 0.3, {universe[0], universe[0]});
  CHECK(twin.keys() == std::vector<std::string>{"I(C orders.o_id)"});

  std::vector<Index> too_many(kBruteForceCap + 1, universe[0]);
  CHECK_THROWS_AS(brute_force_optimal(s1.workload, s1.oracle, 1.0, too_many), ValidationError);

  const auto composites = candidate_universe(s1.workload, s1.oracle, true);
  CHECK(composites.size() == 3);
  CHECK(canonical_key(composites[2]) == "I(C orders.o_id,C orders.o_date)");
}

TEST_CASE("baseline properties over seeded instances") {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    SyntheticInstanceSpec spec;
    spec.seed = seed;
    auto inst = generate_instance(spec);
    SyntheticOracle oracle(inst.schema);
    const auto singles = candidate_universe(inst.workload, oracle);
    double all = 0.0;
    for (const auto& i : singles) all += oracle.estimate_index_storage(i);
    const double budget = all * (0.2 + 0.2 * static_cast<double>(seed % 4));
    INFO("seed " << seed);

    std::vector<double> history;
    auto ext = extend_advisor(inst.workload, oracle, budget, 3, &history);
    auto drop = drop_advisor(inst.workload, oracle, budget);
    CHECK(ext.est_storage_mb <= budget);
    CHECK(drop.est_storage_mb <= budget);
    double previous = workload_cost(oracle, inst.workload, {});
    for (double c : history) {
      CHECK(c <= previous);
      previous = c;
    }
    if (singles.size() <= 10) {
      ++compared;
      auto best = brute_force_optimal(inst.workload, oracle, budget, singles);
      CHECK(best.est_storage_mb <= budget);
      const double opt = workload_cost(oracle, inst.workload, best);
      CHECK(opt <= workload_cost(oracle, inst.workload, drop) + 1e-9);
      // Independent check: no affordable subset of singles is cheaper.
      for (std::uint32_t mask = 0; mask < (1U << singles.size()); mask += 7) {
        IndexConfiguration c;
        double used = 0.0;
        for (std::size_t i = 0; i < singles.size(); ++i) {
          if ((mask >> i) & 1U) {
            c.indexes.push_back(singles[i]);
            used += oracle.estimate_index_storage(singles[i]);
          }
        }
        if (used <= budget) CHECK(opt <= workload_cost(oracle, inst.workload, c) + 1e-9);
      }
    }
  }
  CHECK(compared > 20);
}

TEST_CASE("metric signs agree") {
  for (double after : {50.0, 100.0, 150.0}) {
    const double btc = benefit_to_cost(100.0, after, 3.0);
    const double rel = relative_improvement(100.0, after);
    CHECK((btc > 0) == (rel > 0));
    CHECK((btc < 0) == (rel < 0));
  }
}

TEST_CASE("experiment spec parsing") {
  auto spec = parse_experiment_spec(R"({"methods":["extend"],"seeds":{"from":3,"count":2},
    "budgets_mb":[1.5],"oracle":"synthetic-perturbed","perturbation":{"fraction":0.3,"factor":50},
    "instance":{"query_count":5},"pipeline":{"alpha":7,"enable_revision":false},"timing":false})");
  CHECK(spec.methods == std::vector<std::string>{"extend"});
  CHECK(spec.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(spec.budget_fractions.empty());
  CHECK(spec.budgets_mb == std::vector<double>{1.5});
  CHECK(spec.perturbation.fraction_columns == 0.3);
  CHECK(spec.perturbation.error_factor == 50.0);
  CHECK(spec.instance.query_count == 5);
  CHECK(spec.pipeline.max_substeps == 7);
  CHECK_FALSE(spec.pipeline.enable_revision);
  CHECK_FALSE(spec.timing);

  CHECK_THROWS_AS(parse_experiment_spec(R"({"methods":["anytime"]})"), ValidationError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"bogus":1})"), ValidationError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"seeds":"x"})"), ValidationError);
  CHECK_THROWS_AS(parse_experiment_spec("not json"), ValidationError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"oracle":"live"})"), ValidationError);
}

TEST_CASE("run_experiment") {
  SUBCASE("one method, one seed") {
    ExperimentSpec spec;
    spec.methods = {"extend"};
    auto rows = run_experiment(spec);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].method == "extend");
    CHECK(rows[0].used_mb <= rows[0].budget_mb);
  }
  SUBCASE("four methods, 25 seeds, deterministic") {
    ExperimentSpec spec;
    spec.timing = false;
    spec.seeds.clear();
    for (std::uint64_t s = 0; s < 25; ++s) spec.seeds.push_back(s);
    auto rows = run_experiment(spec);
    CHECK(rows.size() == 100);
    const auto csv = reports_to_csv(rows);
    spec.jobs = 3;
    CHECK(reports_to_csv(run_experiment(spec)) == csv);
    CHECK(csv.rfind("method,seed,budget_mb,used_mb,est_before,est_after,true_before,true_after,btc,"
                    "rel_impr_pct,runtime_s\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);
    for (const auto& r : rows) {
      CHECK(r.runtime_s == 0.0);
      CHECK(r.used_mb <= r.budget_mb);
      CHECK(r.rel_impr_pct <= 100.0);
    }
    auto json = nlohmann::json::parse(reports_to_json(rows));
    CHECK(json.size() == 100);
    CHECK(json[0]["method"] == "maadvisor");
  }
  SUBCASE("S1 budgets") {
    ExperimentSpec spec;
    spec.schema_path = testing::fixture_path("s1_schema.json");
    spec.workload_path = testing::fixture_path("s1_workload.json");
    spec.budget_fractions.clear();
    spec.budgets_mb = {0.12, 0.3};
    auto rows = run_experiment(spec);
    REQUIRE(rows.size() == 8);
    std::vector<double> extend_costs;
    for (const auto& r : rows) {
      if (r.method == "extend") extend_costs.push_back(r.est_after);
      CHECK(r.used_mb <= r.budget_mb);
      CHECK(r.est_before == 300.0);
    }
    REQUIRE(extend_costs.size() == 2);
    CHECK(extend_costs[1] <= extend_costs[0]);
    CHECK(rows[4].method == "maadvisor");
    CHECK(rows[4].config_keys == std::vector<std::string>{"I(C orders.o_id,C orders.o_date)"});
  }
  SUBCASE("maadvisor stays within budget over 100 seeds") {
    ExperimentSpec spec;
    spec.methods = {"maadvisor"};
    spec.seeds.clear();
    for (std::uint64_t s = 0; s < 100; ++s) spec.seeds.push_back(s);
    spec.budget_fractions = {0.01, 0.1};
    spec.oracle = "synthetic-perturbed";
    for (const auto& r : run_experiment(spec)) CHECK(r.used_mb <= r.budget_mb);
  }
}
