// maadvisor command-line entry point. All logic lives in the library's cmd_*
// functions; this file only maps flags onto them.
#include <CLI11.hpp>

#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <thread>

#include "maadvisor/commands.hpp"
#include "maadvisor/io.hpp"

using namespace maadvisor;

namespace {

/// Flags shared by advise, candidates and indicator score. Unset flags leave
/// the --config value (or the default) alone.
struct RunFlags {
  std::optional<std::string> config;
  std::optional<std::string> schema, workload, policy, oracle, trace_out, report_out, indicator_params;
  std::optional<double> budget, budget_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<int> alpha;
  std::optional<unsigned> jobs;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON run config; flags override its fields");
    app.add_option("--schema", schema, "schema JSON file");
    app.add_option("--workload", workload, "workload JSON file");
    app.add_option("--budget", budget, "storage budget in MB");
    app.add_option("--budget-fraction", budget_fraction, "budget as a fraction of total table storage");
    app.add_option("--policy", policy, "rules | llm");
    app.add_option("--oracle", oracle, "synthetic | synthetic-perturbed | live");
    app.add_option("--seed", seed, "perturbation seed");
    app.add_option("--alpha", alpha, "planning step limit");
    app.add_option("--trace-out", trace_out, "write the step trace as JSON lines");
    app.add_option("--report-out", report_out, "write the recommendation JSON");
    app.add_option("--indicator-params", indicator_params, "enable the regression indicator with these params");
    app.add_option("--jobs", jobs, "worker threads");
  }

  [[nodiscard]] RunConfig resolve() const {
    RunConfig c;
    if (config) c = run_config_from_json(nlohmann::json::parse(read_text_file(*config)));
    if (schema) c.schema_path = *schema;
    if (workload) c.workload_path = *workload;
    // A budget flag replaces whichever budget form the config file used.
    if (budget) c.budget_mb = *budget, c.budget_fraction.reset();
    if (budget_fraction) c.budget_fraction = *budget_fraction, c.budget_mb.reset();
    if (policy) c.policy = *policy;
    if (oracle) c.oracle = *oracle;
    if (seed) c.seed = *seed;
    if (alpha) c.pipeline.max_substeps = *alpha;
    if (trace_out) c.trace_out = *trace_out;
    if (report_out) c.report_out = *report_out;
    if (indicator_params) c.indicator_params = *indicator_params;
    if (jobs) c.jobs = *jobs;
    return c;
  }
};

/// Config-file problems surface before any command runs.
template <typename F>
int with_config(const RunFlags& flags, F&& command) {
  RunConfig config;
  try {
    config = flags.resolve();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return command(config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maadvisor: multi-agent index advisor"};
  app.require_subcommand(1);
  int status = kExitOk;

  RunFlags advise_flags;
  auto* advise = app.add_subcommand("advise", "recommend indexes and print CREATE INDEX statements");
  advise_flags.attach(*advise);
  advise->callback([&] {
    status = with_config(advise_flags, [](const RunConfig& c) { return cmd_advise(c, std::cout, std::cerr); });
  });

  RunFlags candidate_flags;
  auto* candidates = app.add_subcommand("candidates", "print the column candidate table");
  candidate_flags.attach(*candidates);
  candidates->callback([&] {
    status = with_config(candidate_flags, [](const RunConfig& c) { return cmd_candidates(c, std::cout, std::cerr); });
  });

  ExperimentCommand experiment_command;
  auto* experiment = app.add_subcommand("experiment", "run the method comparison described by a spec file");
  experiment->add_option("spec", experiment_command.spec_path, "experiment spec JSON")->required();
  experiment->add_option("--report-out", experiment_command.report_out, "CSV, or JSON when the name ends in .json");
  experiment->add_option("--jobs", experiment_command.jobs, "worker threads (default: processors)");
  experiment->callback([&] {
    if (!experiment_command.jobs) experiment_command.jobs = std::max(1u, std::thread::hardware_concurrency());
    status = cmd_experiment(experiment_command, std::cout, std::cerr);
  });

  GenCommand gen_command;
  auto* gen = app.add_subcommand("gen", "write a seeded synthetic schema and workload");
  gen->add_option("--spec", gen_command.spec_path, "instance spec JSON");
  gen->add_option("--seed", gen_command.seed, "instance seed");
  gen->add_option("--queries", gen_command.query_count, "query count");
  gen->add_option("--out-dir", gen_command.out_dir, "output directory")->capture_default_str();
  gen->callback([&] { status = cmd_gen(gen_command, std::cout, std::cerr); });

  auto* indicator = app.add_subcommand("indicator", "train or apply the regression indicator");
  indicator->require_subcommand(1);

  IndicatorTrainCommand train_command;
  auto* train = indicator->add_subcommand("train", "train on labeled pairs");
  train->add_option("--pairs", train_command.pairs_path, "labeled pairs JSON (default: generate)");
  train->add_option("--generate", train_command.generate, "pairs to generate")->capture_default_str();
  train->add_option("--seed", train_command.pair_seed, "pair generation seed")->capture_default_str();
  train->add_option("--init-seed", train_command.options.seed, "weight initialization seed")->capture_default_str();
  train->add_option("--epochs", train_command.options.epochs)->capture_default_str();
  train->add_option("--batch", train_command.options.batch_size)->capture_default_str();
  train->add_option("--lr", train_command.options.learning_rate)->capture_default_str();
  train->add_option("--params-out", train_command.params_out)->capture_default_str();
  train->add_option("--loss-out", train_command.loss_out, "write the per-epoch loss log");
  train->callback([&] { status = cmd_indicator_train(train_command, std::cout, std::cerr); });

  RunFlags score_flags;
  IndicatorScoreCommand score_command;
  auto* score = indicator->add_subcommand("score", "score indexes against a workload");
  score_flags.attach(*score);
  score->add_option("--params", score_command.params_path, "params JSON")->required();
  score->add_option("--index", score_command.index_keys, "canonical index keys (default: every candidate)");
  score->callback([&] {
    status = with_config(score_flags, [&](const RunConfig& c) {
      score_command.run = c;
      return cmd_indicator_score(score_command, std::cout, std::cerr);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  return status;
}
