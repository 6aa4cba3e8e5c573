// Python bindings over JSON documents: schemas, workloads and results cross
// the boundary as strings and dicts, so no C++ types leak into Python.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <nlohmann/json.hpp>

#include "maadvisor/baselines.hpp"
#include "maadvisor/candidates.hpp"
#include "maadvisor/commands.hpp"
#include "maadvisor/generator.hpp"
#include "maadvisor/indicator.hpp"
#include "maadvisor/io.hpp"
#include "maadvisor/pipeline.hpp"
#include "maadvisor/policy.hpp"

namespace py = pybind11;
using namespace maadvisor;

namespace {

struct Loaded {
  std::shared_ptr<const DatabaseSchema> schema;
  Workload workload;
};

Loaded load(const std::string& schema_json, const std::string& workload_json) {
  Loaded l;
  l.schema = std::make_shared<const DatabaseSchema>(load_schema(schema_json));
  l.workload = load_workload(parse_workload_document(workload_json), *l.schema);
  return l;
}

std::vector<Index> parse_keys(const std::vector<std::string>& keys, const DatabaseSchema& schema) {
  std::vector<Index> out;
  for (const auto& key : keys) {
    auto index = parse_canonical_key(key);
    if (!index) throw ValidationError("malformed index key '" + key + "'");
    validate_index(*index, schema);
    out.push_back(std::move(*index));
  }
  return out;
}

py::dict advise(const std::string& schema_json, const std::string& workload_json, double budget_mb,
                const std::string& policy_id, int alpha, bool enable_revision) {
  const auto l = load(schema_json, workload_json);
  const SyntheticOracle oracle(l.schema);
  PipelineConfig config;
  config.max_substeps = alpha;
  config.enable_revision = enable_revision;
  config.policy_id = policy_id;
  auto policy = make_policy(policy_id);
  RecommendationResult r;
  {
    py::gil_scoped_release release;
    r = run_pipeline(l.workload, oracle, budget_mb, *policy, config);
  }
  py::list indexes, trace, statements;
  for (const auto& index : r.config.indexes) {
    indexes.append(canonical_key(index));
    statements.append(create_index_statement(index));
  }
  for (const auto& step : r.trace) {
    py::dict d;
    d["step"] = step.step;
    d["action"] = format_action(step.action);
    d["used_mb"] = step.used_mb;
    d["config_keys"] = step.config_keys;
    d["fallback"] = step.fallback;
    trace.append(d);
  }
  py::dict out;
  out["indexes"] = indexes;
  out["est_storage_mb"] = r.config.est_storage_mb;
  out["est_before"] = r.est_cost_before;
  out["est_after"] = r.est_cost_after;
  out["statements"] = statements;
  out["trace"] = trace;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-agent index advisor core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<OracleError>(m, "OracleError", PyExc_RuntimeError);

  m.def("relative_improvement", &relative_improvement, py::arg("cost_before"), py::arg("cost_after"),
        "Percentage reduction of workload cost.");
  m.def("benefit_to_cost", &benefit_to_cost, py::arg("cost_before"), py::arg("cost_after"), py::arg("storage_mb"),
        "Workload cost reduction per MB of index storage.");

  m.def("advise", &advise, py::arg("schema_json"), py::arg("workload_json"), py::arg("budget_mb"),
        py::arg("policy") = "rules", py::arg("alpha") = 20, py::arg("enable_revision") = true,
        "Runs the advisor over the synthetic oracle and returns the recommendation with its trace.");

  m.def(
      "candidates",
      [](const std::string& schema_json, const std::string& workload_json, double budget_mb) {
        const auto l = load(schema_json, workload_json);
        const SyntheticOracle oracle(l.schema);
        Budget budget;
        budget.total_mb = budget_mb;
        return render_candidates(merge_candidates(build_query_infos(l.workload, oracle)), budget, {});
      },
      py::arg("schema_json"), py::arg("workload_json"), py::arg("budget_mb"), "Rendered candidate table.");

  m.def(
      "workload_cost",
      [](const std::string& schema_json, const std::string& workload_json, const std::vector<std::string>& keys,
         bool truth) {
        const auto l = load(schema_json, workload_json);
        const SyntheticOracle oracle(l.schema);
        IndexConfiguration config;
        config.indexes = parse_keys(keys, *l.schema);
        return truth ? oracle.true_cost(l.workload, config) : oracle.estimate_workload_cost(l.workload, config);
      },
      py::arg("schema_json"), py::arg("workload_json"), py::arg("index_keys") = std::vector<std::string>{},
      py::arg("truth") = false, "Estimated (or ground-truth) workload cost under a configuration.");

  m.def(
      "index_storage_mb",
      [](const std::string& schema_json, const std::string& key) {
        auto schema = std::make_shared<const DatabaseSchema>(load_schema(schema_json));
        const SyntheticOracle oracle(schema);
        return oracle.estimate_index_storage(parse_keys({key}, *schema).front());
      },
      py::arg("schema_json"), py::arg("index_key"));

  m.def(
      "create_index_statement",
      [](const std::string& key) {
        auto index = parse_canonical_key(key);
        if (!index) throw ValidationError("malformed index key '" + key + "'");
        return create_index_statement(*index);
      },
      py::arg("index_key"));

  m.def(
      "generate_instance",
      [](std::uint64_t seed, int query_count) {
        SyntheticInstanceSpec spec;
        spec.seed = seed;
        spec.query_count = query_count;
        const auto inst = generate_instance(spec);
        nlohmann::json workload = nlohmann::json::array();
        for (const auto& s : inst.sources) {
          nlohmann::json entry = {{"id", s.id}, {"sql", s.sql}};
          if (s.base_cost) entry["base_cost"] = *s.base_cost;
          workload.push_back(std::move(entry));
        }
        return py::make_tuple(dump_schema(*inst.schema), workload.dump(2) + "\n");
      },
      py::arg("seed"), py::arg("query_count") = 10, "Seeded synthetic (schema_json, workload_json).");

  m.def(
      "run_experiment",
      [](const std::string& spec_json, const std::string& format) {
        const auto spec = parse_experiment_spec(spec_json);
        std::vector<MetricReport> reports;
        {
          py::gil_scoped_release release;
          reports = run_experiment(spec);
        }
        if (format == "json") return reports_to_json(reports);
        if (format == "csv") return reports_to_csv(reports);
        throw ValidationError("format must be csv or json");
      },
      py::arg("spec_json"), py::arg("format") = "csv", "Method comparison report.");

  m.def(
      "train_indicator",
      [](std::size_t pairs, std::uint64_t seed, int epochs) {
        PairGenerationOptions gen;
        gen.seed = seed;
        const auto data = generate_labeled_pairs(pairs, gen);
        TrainOptions options;
        options.epochs = epochs;
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train_indicator(data, options);
        }
        return py::make_tuple(params_to_json(result.params), result.loss_history);
      },
      py::arg("pairs") = 200, py::arg("seed") = 0, py::arg("epochs") = 4,
      "Trains on generated pairs; returns (params_json, loss_history).");

  m.def(
      "indicator_accuracy",
      [](const std::string& params_json, std::size_t pairs, std::uint64_t seed) {
        PairGenerationOptions gen;
        gen.seed = seed;
        return sign_accuracy(generate_labeled_pairs(pairs, gen), params_from_json(params_json));
      },
      py::arg("params_json"), py::arg("pairs") = 200, py::arg("seed") = 1,
      "Sign accuracy on freshly generated pairs.");
}
