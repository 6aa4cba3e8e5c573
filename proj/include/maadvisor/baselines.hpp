#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maadvisor/core.hpp"
#include "maadvisor/generator.hpp"
#include "maadvisor/oracle.hpp"
#include "maadvisor/pipeline.hpp"

namespace maadvisor {

/// Workload cost reduction per MB of index storage. Negative on regression.
double benefit_to_cost(double cost_before, double cost_after, double storage_mb);

/// Percentage reduction of workload cost.
double relative_improvement(double cost_before, double cost_after);

/// Greedy ADD: grows from the empty configuration by the affordable move with
/// the best cost reduction per added MB. Moves are new single-column indexes
/// and appending a same-table column to an existing index (up to max_width).
/// `cost_history`, when given, receives the workload cost after every move.
IndexConfiguration extend_advisor(const Workload& workload, const CostOracle& oracle,
                                  double budget_mb, std::size_t max_width = 3,
                                  std::vector<double>* cost_history = nullptr);

/// Greedy DROP: starts from every single-column candidate and removes the
/// index whose removal costs least until the budget is met.
IndexConfiguration drop_advisor(const Workload& workload, const CostOracle& oracle,
                                double budget_mb);

inline constexpr std::size_t kBruteForceCap = 12;

/// Single-column candidates, plus per-table composites ordered by the
/// combination rule (widths 2..rule.max_width) when `composites` is set.
std::vector<Index> candidate_universe(const Workload& workload, const CostOracle& oracle,
                                      bool composites = false,
                                      const CombinationRule& rule = {});

/// Exhaustive search over subsets of `candidates` (at most kBruteForceCap)
/// within budget. Ties go to less storage, then the lexicographically smallest
/// sorted key list.
IndexConfiguration brute_force_optimal(const Workload& workload, const CostOracle& oracle,
                                       double budget_mb, const std::vector<Index>& candidates);

struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  double budget_mb = 0.0;
  double used_mb = 0.0;
  double est_before = 0.0;
  double est_after = 0.0;
  double true_before = 0.0;
  double true_after = 0.0;
  double btc = 0.0;           // on true costs; 0 when nothing was built
  double rel_impr_pct = 0.0;  // on true costs
  double runtime_s = 0.0;
  std::vector<std::string> config_keys;
};

struct ExperimentSpec {
  std::vector<std::string> methods{"maadvisor", "extend", "drop", "optimal"};
  std::vector<std::uint64_t> seeds{0};
  /// Budgets as fractions of total table storage...
  std::vector<double> budget_fractions{0.1};
  /// ...and/or in absolute MB.
  std::vector<double> budgets_mb;
  std::string oracle = "synthetic";  // or "synthetic-perturbed"
  PerturbationSpec perturbation{0, 0.2, 100.0};
  SyntheticInstanceSpec instance;
  /// Fixed instance instead of generated ones; seeds then only label rows.
  std::optional<std::string> schema_path;
  std::optional<std::string> workload_path;
  std::string policy = "rules";
  PipelineConfig pipeline;
  bool timing = true;
  unsigned jobs = 1;

  void validate() const;
};

ExperimentSpec parse_experiment_spec(const std::string& document);

/// One row per (seed, budget, method) in that order. Deterministic except for
/// runtime_s, which is 0 when timing is off.
std::vector<MetricReport> run_experiment(const ExperimentSpec& spec);

std::string reports_to_csv(const std::vector<MetricReport>& reports);
std::string reports_to_json(const std::vector<MetricReport>& reports);

}  // namespace maadvisor
