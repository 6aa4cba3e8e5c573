#pragma once

#include <array>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "maadvisor/candidates.hpp"
#include "maadvisor/core.hpp"
#include "maadvisor/oracle.hpp"
#include "maadvisor/policy.hpp"

namespace maadvisor {

/// Column ordering for composite indexes: lower rank goes first.
struct CombinationRule {
  std::array<OperatorClass, kOperatorClassCount> precedence = {
      OperatorClass::Eq, OperatorClass::Join, OperatorClass::Range, OperatorClass::SortGroup};
  std::size_t max_width = 3;

  [[nodiscard]] int rank(OperatorClass op) const;
  /// Rank of the best (lowest-ranked) operator in the set.
  [[nodiscard]] int rank(OperatorSet ops) const;
  void validate() const;
};

enum class ExperienceVerdict { Discourage, Remove };

/// Conjunction of optional conditions over an index's leading column.
struct ExperienceRule {
  std::string id;
  std::string description;
  ExperienceVerdict verdict = ExperienceVerdict::Discourage;
  std::optional<OperatorSet> only_operators;       // workload operators ⊆ this set
  std::optional<double> max_cardinality_ratio;     // est. cardinality / rows ≤
  std::optional<double> max_table_rows;            // rows ≤
  std::optional<double> max_marginal_utility;      // marginal utility ≤

  struct Subject {
    OperatorSet operators;
    double cardinality = 0.0;
    double rows = 0.0;
    double marginal_utility = 0.0;
  };
  [[nodiscard]] bool matches(const Subject& subject) const;
};

/// Parses {"rules":[{"id","description","verdict","when":{...}}]}.
std::vector<ExperienceRule> parse_experience_rules(const std::string& document);
/// The built-in set, identical to data/experience_rules.json.
const std::vector<ExperienceRule>& default_experience_rules();

struct PipelineConfig {
  int max_substeps = 20;  // α
  bool enable_revision = true;
  bool enable_indicator = false;
  std::string policy_id = "rules";
  std::string oracle_id = "synthetic";
  CombinationRule combination;
  std::vector<ExperienceRule> experience = default_experience_rules();
  double indicator_threshold = -0.5;
  /// An estimate above this multiple of the distribution-implied bound is a discrepancy.
  double discrepancy_factor = 10.0;
  RefreshOptions refresh;

  void validate() const;
};

/// Reads {"alpha", "enable_revision", "enable_indicator", "indicator_threshold",
/// "discrepancy_factor", "max_composite_width", "precedence", "experience_rules"}
/// over the defaults. "experience_rules" is a file path. Unknown keys throw.
PipelineConfig pipeline_config_from_json(const nlohmann::json& object);

/// Scores indexes in [-1, 1]; negative means a predicted regression.
using IndexScorer = std::function<std::vector<double>(const std::vector<Index>&)>;

struct TraceEntry {
  std::size_t step = 0;
  AgentAction action;
  double used_mb = 0.0;
  std::vector<std::string> config_keys;
  bool fallback = false;
  std::string detail;
};

struct RecommendationResult {
  IndexConfiguration config;
  std::vector<TraceEntry> trace;
  double est_cost_before = 0.0;
  double est_cost_after = 0.0;
  Budget budget;
  std::size_t exceptions = 0;
};

/// One JSON object per line: {step, action, used_mb, config_keys[, fallback]}.
std::string trace_to_jsonl(const std::vector<TraceEntry>& trace);

/// Raised when the oracle fails mid-run; carries the trace so far.
class PipelineAborted : public std::runtime_error {
 public:
  PipelineAborted(const std::string& what, RecommendationResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const RecommendationResult& partial() const { return partial_; }

 private:
  RecommendationResult partial_;
};

/// Mutable state of one advisor run.
struct PipelineState {
  const Workload* workload = nullptr;
  const CostOracle* oracle = nullptr;
  const PipelineConfig* config = nullptr;
  IndexScorer scorer;

  IndexConfiguration indexes;
  Budget budget;
  std::vector<ColumnCandidate> merged;     // utilities against the empty configuration
  std::vector<ColumnCandidate> candidates; // refreshed against `indexes`
  std::set<std::string> rejected;          // columns removed by Revision
  std::vector<HistoryEntry> history;
  bool combined_since_change = false;
  bool revised_since_change = false;
  Suggestion suggestion;

  PipelineState(const Workload& w, const CostOracle& o, const PipelineConfig& c, double budget_mb);

  void refresh();
  [[nodiscard]] PolicyRequest request(AgentRole role) const;
  [[nodiscard]] std::vector<CombinationOption> combination_options() const;
  [[nodiscard]] std::vector<IndexView> index_views() const;
};

/// Outcome of one local-agent call.
struct StepOutcome {
  AgentAction action;
  bool changed = false;
  bool fallback = false;
  std::string detail;
};

StepOutcome select_index(PipelineState& state, PolicyBackend& policy);
StepOutcome combine_indexes(PipelineState& state, PolicyBackend& policy);
StepOutcome revise_indexes(PipelineState& state, PolicyBackend& policy);
Suggestion reflect(const PipelineState& state, PolicyBackend& policy);

/// Planning / local agents / reflection loop with budget accounting.
RecommendationResult run_pipeline(const Workload& workload, const CostOracle& oracle,
                                  double budget_mb, PolicyBackend& policy,
                                  const PipelineConfig& config = {}, IndexScorer scorer = {});

}  // namespace maadvisor
