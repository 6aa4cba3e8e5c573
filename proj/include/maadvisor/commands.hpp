#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "maadvisor/generator.hpp"
#include "maadvisor/indicator.hpp"
#include "maadvisor/oracle.hpp"
#include "maadvisor/pipeline.hpp"

namespace maadvisor {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitOracle = 3;

/// Everything one command needs. Loaded from a JSON run config and then
/// overridden field by field from the command line.
struct RunConfig {
  std::string schema_path;
  std::string workload_path;
  std::optional<double> budget_mb;
  std::optional<double> budget_fraction;  // of total table storage
  std::string policy = "rules";
  std::string oracle = "synthetic";  // synthetic | synthetic-perturbed | live
  std::uint64_t seed = 0;            // seeds the perturbation
  PerturbationSpec perturbation{0, 0.2, 100.0};
  PipelineConfig pipeline;
  std::optional<std::string> indicator_params;
  std::optional<std::string> trace_out;
  std::optional<std::string> report_out;
  unsigned jobs = 0;  // 0: hardware concurrency

  /// Throws ValidationError on bad values or missing referenced files.
  void validate() const;
};

/// Keys: schema, workload, budget, budget_fraction, policy, oracle, seed,
/// alpha, perturbation{fraction,factor}, pipeline{...}, indicator_params,
/// trace_out, report_out, jobs. Unknown keys throw.
RunConfig run_config_from_json(const nlohmann::json& object);

/// "maa_idx_<table>_<col1>_<col2>..."
std::string index_name(const Index& index);
/// "CREATE INDEX maa_idx_t_a_b ON t (a, b);"
std::string create_index_statement(const Index& index);

/// {"indexes":[keys], "est_storage_mb", "est_before", "est_after"}
std::string recommendation_to_json(const RecommendationResult& result);

// Each command writes its primary output to `out`, diagnostics to `err`, and
// returns the process exit status. Config errors map to 2, oracle failures
// to 3; policy misbehavior never fails a run.
int cmd_advise(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_candidates(const RunConfig& config, std::ostream& out, std::ostream& err);

struct ExperimentCommand {
  std::string spec_path;
  std::optional<std::string> report_out;  // .json writes JSON, anything else CSV
  std::optional<unsigned> jobs;
};
int cmd_experiment(const ExperimentCommand& command, std::ostream& out, std::ostream& err);

struct GenCommand {
  std::optional<std::string> spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> query_count;
  std::string out_dir = ".";
};
/// Writes <out_dir>/schema.json and <out_dir>/workload.json.
int cmd_gen(const GenCommand& command, std::ostream& out, std::ostream& err);

struct IndicatorTrainCommand {
  std::optional<std::string> pairs_path;  // otherwise pairs are generated
  std::size_t generate = 1000;
  std::uint64_t pair_seed = 0;
  TrainOptions options;
  std::string params_out = "indicator_params.json";
  std::optional<std::string> loss_out;
};
/// Prints "epoch <i> loss <x>" per epoch.
int cmd_indicator_train(const IndicatorTrainCommand& command, std::ostream& out, std::ostream& err);

struct IndicatorScoreCommand {
  RunConfig run;           // schema, workload, oracle
  std::string params_path;
  std::vector<std::string> index_keys;  // empty: every single-column candidate
};
/// One "<key>\t<score>" line per index, in the order scored.
int cmd_indicator_score(const IndicatorScoreCommand& command, std::ostream& out, std::ostream& err);

}  // namespace maadvisor
