#include "maadvisor/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "maadvisor/baselines.hpp"
#include "maadvisor/candidates.hpp"
#include "maadvisor/io.hpp"
#include "maadvisor/policy.hpp"
#include "maadvisor/sql.hpp"

namespace maadvisor {

using nlohmann::json;

void RunConfig::validate() const {
  if (schema_path.empty()) throw ValidationError("no schema path given");
  if (workload_path.empty()) throw ValidationError("no workload path given");
  for (const auto* path : {&schema_path, &workload_path}) {
    if (!std::filesystem::is_regular_file(*path)) throw ValidationError(fmt::format("no such file '{}'", *path));
  }
  if (indicator_params && !std::filesystem::is_regular_file(*indicator_params)) {
    throw ValidationError(fmt::format("no such file '{}'", *indicator_params));
  }
  if (budget_mb && budget_fraction) throw ValidationError("give either a budget or a budget fraction, not both");
  if (!budget_mb && !budget_fraction) throw ValidationError("no budget given");
  if (budget_mb && !(*budget_mb > 0.0)) throw ValidationError("budget must be positive");
  if (budget_fraction && !(*budget_fraction > 0.0)) throw ValidationError("budget fraction must be positive");
  if (policy != "rules" && policy != "llm") throw ValidationError(fmt::format("unknown policy '{}'", policy));
  if (oracle != "synthetic" && oracle != "synthetic-perturbed" && oracle != "live") {
    throw ValidationError(fmt::format("unknown oracle '{}'", oracle));
  }
  perturbation.validate();
  pipeline.validate();
}

RunConfig run_config_from_json(const json& object) {
  if (!object.is_object()) throw ValidationError("run config must be a JSON object");
  RunConfig config;
  std::optional<int> alpha;
  try {
    for (const auto& [key, value] : object.items()) {
      if (key == "schema") config.schema_path = value.get<std::string>();
      else if (key == "workload") config.workload_path = value.get<std::string>();
      else if (key == "budget") config.budget_mb = value.get<double>();
      else if (key == "budget_fraction") config.budget_fraction = value.get<double>();
      else if (key == "policy") config.policy = value.get<std::string>();
      else if (key == "oracle") config.oracle = value.get<std::string>();
      else if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "alpha") alpha = value.get<int>();
      else if (key == "pipeline") config.pipeline = pipeline_config_from_json(value);
      else if (key == "indicator_params") config.indicator_params = value.get<std::string>();
      else if (key == "trace_out") config.trace_out = value.get<std::string>();
      else if (key == "report_out") config.report_out = value.get<std::string>();
      else if (key == "jobs") config.jobs = value.get<unsigned>();
      else if (key == "perturbation") {
        for (const auto& [k, v] : value.items()) {
          if (k == "fraction") config.perturbation.fraction_columns = v.get<double>();
          else if (k == "factor") config.perturbation.error_factor = v.get<double>();
          else throw ValidationError(fmt::format("run config: unknown perturbation field '{}'", k));
        }
      } else {
        throw ValidationError(fmt::format("run config: unknown field '{}'", key));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("run config: {}", e.what()));
  }
  // The top-level alpha wins over a pipeline block regardless of key order.
  if (alpha) config.pipeline.max_substeps = *alpha;
  return config;
}

std::string index_name(const Index& index) {
  std::string name = "maa_idx_" + index.table;
  for (const auto& c : index.columns) name += "_" + c;
  return name;
}

std::string create_index_statement(const Index& index) {
  std::string columns;
  for (const auto& c : index.columns) {
    if (!columns.empty()) columns += ", ";
    columns += c;
  }
  return fmt::format("CREATE INDEX {} ON {} ({});", index_name(index), index.table, columns);
}

std::string recommendation_to_json(const RecommendationResult& result) {
  json keys = json::array();
  for (const auto& index : result.config.indexes) keys.push_back(canonical_key(index));
  json doc = {{"indexes", keys},
              {"est_storage_mb", result.config.est_storage_mb},
              {"est_before", result.est_cost_before},
              {"est_after", result.est_cost_after}};
  return doc.dump(2) + "\n";
}

namespace {

std::string read_input(const std::string& path) {
  try {
    return read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw ValidationError(e.what());
  }
}

struct Loaded {
  std::shared_ptr<const DatabaseSchema> schema;
  Workload workload;
  std::unique_ptr<CostOracle> oracle;
  double budget_mb = 0.0;
};

Loaded load(const RunConfig& config, std::ostream& err) {
  config.validate();
  Loaded l;
  l.schema = std::make_shared<const DatabaseSchema>(load_schema(read_input(config.schema_path)));
  std::vector<std::string> warnings;
  try {
    const auto sources = parse_workload_document(read_input(config.workload_path));
    l.workload = load_workload(sources, *l.schema, &warnings);
  } catch (const SqlParseError& e) {
    throw ValidationError(e.what());
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";

  if (config.oracle == "live") {
    const char* url = std::getenv("MAADVISOR_DB_URL");
    if (url == nullptr || *url == '\0') throw OracleError("MAADVISOR_DB_URL is not set");
    l.oracle = std::make_unique<LiveOracle>(l.schema, open_live_session(url));
  } else if (config.oracle == "synthetic-perturbed") {
    auto spec = config.perturbation;
    spec.seed = config.seed;
    l.oracle = std::make_unique<SyntheticOracle>(perturb_statistics(SyntheticOracle(l.schema), spec));
  } else {
    l.oracle = std::make_unique<SyntheticOracle>(l.schema);
  }
  l.budget_mb = config.budget_mb ? *config.budget_mb : *config.budget_fraction * total_table_storage_mb(*l.schema);
  return l;
}

std::vector<ColumnCandidate> merged(const Loaded& l) {
  return merge_candidates(build_query_infos(l.workload, *l.oracle));
}

/// Maps library exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const PipelineAborted& e) {
    err << "error: " << e.what() << "\n";
    return kExitOracle;
  } catch (const OracleError& e) {
    err << "error: oracle: " << e.what() << "\n";
    return kExitOracle;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {  // unwritable output paths
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int cmd_advise(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto l = load(config, err);
    auto pipeline = config.pipeline;
    pipeline.policy_id = config.policy;
    pipeline.oracle_id = config.oracle;
    IndexScorer scorer;
    if (config.indicator_params) {
      auto params = std::make_shared<const IndicatorParams>(params_from_json(read_input(*config.indicator_params)));
      scorer = make_indicator_scorer(std::move(params), l.workload, *l.oracle);
      pipeline.enable_indicator = true;
    }
    auto policy = make_policy(config.policy);

    RecommendationResult result;
    try {
      result = run_pipeline(l.workload, *l.oracle, l.budget_mb, *policy, pipeline, scorer);
    } catch (const PipelineAborted& e) {
      if (config.trace_out) write_text_file(*config.trace_out, trace_to_jsonl(e.partial().trace));
      throw;
    }
    if (config.trace_out) write_text_file(*config.trace_out, trace_to_jsonl(result.trace));
    if (config.report_out) write_text_file(*config.report_out, recommendation_to_json(result));
    for (const auto& index : result.config.indexes) out << create_index_statement(index) << "\n";
    if (result.exceptions > 0) err << fmt::format("note: {} undefined planning actions\n", result.exceptions);
    return kExitOk;
  });
}

int cmd_candidates(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto l = load(config, err);
    const auto candidates = merged(l);
    Budget budget;
    budget.total_mb = l.budget_mb;
    out << render_candidates(candidates, budget, IndexConfiguration{});
    if (candidates.empty()) err << "note: the workload has no indexable column usages\n";
    return kExitOk;
  });
}

int cmd_experiment(const ExperimentCommand& command, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto spec = parse_experiment_spec(read_input(command.spec_path));
    if (command.jobs) spec.jobs = std::max(1u, *command.jobs);
    const auto reports = run_experiment(spec);
    if (!command.report_out) {
      out << reports_to_csv(reports);
      return kExitOk;
    }
    const bool as_json = std::filesystem::path(*command.report_out).extension() == ".json";
    write_text_file(*command.report_out, as_json ? reports_to_json(reports) : reports_to_csv(reports));
    out << fmt::format("{} rows written to {}\n", reports.size(), *command.report_out);
    return kExitOk;
  });
}

int cmd_gen(const GenCommand& command, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SyntheticInstanceSpec spec;
    if (command.spec_path) spec = instance_spec_from_json(json::parse(read_input(*command.spec_path)));
    if (command.seed) spec.seed = *command.seed;
    if (command.query_count) spec.query_count = *command.query_count;
    spec.validate();
    const auto instance = generate_instance(spec);

    std::error_code ec;
    std::filesystem::create_directories(command.out_dir, ec);
    if (ec) throw ValidationError(fmt::format("cannot create '{}': {}", command.out_dir, ec.message()));
    const auto dir = std::filesystem::path(command.out_dir);
    json workload = json::array();
    for (const auto& s : instance.sources) {
      json entry = {{"id", s.id}, {"sql", s.sql}};
      if (s.base_cost) entry["base_cost"] = *s.base_cost;
      workload.push_back(std::move(entry));
    }
    write_text_file((dir / "schema.json").string(), dump_schema(*instance.schema));
    write_text_file((dir / "workload.json").string(), workload.dump(2) + "\n");
    out << fmt::format("seed {}: {} tables, {} queries -> {}\n", spec.seed, instance.schema->tables.size(),
                       instance.sources.size(), dir.string());
    return kExitOk;
  });
}

int cmd_indicator_train(const IndicatorTrainCommand& command, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<LabeledPair> pairs;
    if (command.pairs_path) {
      pairs = pairs_from_json(read_input(*command.pairs_path));
    } else {
      PairGenerationOptions gen;
      gen.seed = command.pair_seed;
      pairs = generate_labeled_pairs(command.generate, gen);
    }
    const auto result = train_indicator(pairs, command.options);
    std::string log;
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
      log += fmt::format("epoch {} loss {:.6f}\n", e + 1, result.loss_history[e]);
    }
    out << log;
    write_text_file(command.params_out, params_to_json(result.params));
    if (command.loss_out) write_text_file(*command.loss_out, log);
    out << fmt::format("train accuracy {:.4f}; params written to {}\n", sign_accuracy(pairs, result.params),
                       command.params_out);
    return kExitOk;
  });
}

int cmd_indicator_score(const IndicatorScoreCommand& command, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto run = command.run;
    if (!run.budget_mb && !run.budget_fraction) run.budget_mb = 1.0;  // unused by scoring
    auto l = load(run, err);
    const auto params = std::make_shared<const IndicatorParams>(params_from_json(read_input(command.params_path)));

    std::vector<Index> indexes;
    if (command.index_keys.empty()) {
      for (const auto& c : sorted_by_utility(merged(l))) indexes.push_back(c.as_index());
    } else {
      for (const auto& key : command.index_keys) {
        auto index = parse_canonical_key(key);
        if (!index) throw ValidationError(fmt::format("malformed index key '{}'", key));
        validate_index(*index, *l.schema);
        indexes.push_back(std::move(*index));
      }
    }
    const auto scores = make_indicator_scorer(params, l.workload, *l.oracle)(indexes);
    for (std::size_t i = 0; i < indexes.size(); ++i) {
      out << fmt::format("{}\t{:.6f}\n", canonical_key(indexes[i]), scores[i]);
    }
    return kExitOk;
  });
}

}  // namespace maadvisor
