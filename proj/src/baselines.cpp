#include "maadvisor/baselines.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "maadvisor/candidates.hpp"
#include "maadvisor/io.hpp"

namespace maadvisor {

using nlohmann::json;

double benefit_to_cost(double cost_before, double cost_after, double storage_mb) {
  if (!(storage_mb > 0.0)) throw ValidationError("benefit_to_cost needs positive storage");
  return (cost_before - cost_after) / storage_mb;
}

double relative_improvement(double cost_before, double cost_after) {
  if (!(cost_before > 0.0)) throw ValidationError("relative_improvement needs a positive baseline");
  return 100.0 * (cost_before - cost_after) / cost_before;
}

namespace {

std::vector<ColumnCandidate> singles(const Workload& workload, const CostOracle& oracle) {
  return merge_candidates(build_query_infos(workload, oracle));
}

IndexConfiguration finish(IndexConfiguration config, const CostOracle& oracle) {
  config.est_storage_mb = oracle.estimate_configuration_storage(config);
  return config;
}

void check_budget(double budget_mb) {
  if (!(budget_mb >= 0.0)) throw ValidationError("storage budget must be non-negative");
}

}  // namespace

IndexConfiguration extend_advisor(const Workload& workload, const CostOracle& oracle,
                                  double budget_mb, std::size_t max_width,
                                  std::vector<double>* cost_history) {
  check_budget(budget_mb);
  if (max_width < 1) throw ValidationError("max_width must be at least 1");
  const auto candidates = singles(workload, oracle);

  IndexConfiguration config;
  double cost = oracle.estimate_workload_cost(workload, config);
  double used = 0.0;

  struct Move {
    IndexConfiguration next;
    double storage = 0.0;
    double cost = 0.0;
    double ratio = 0.0;
    std::string key;
  };

  for (;;) {
    std::optional<Move> best;
    auto consider = [&](IndexConfiguration next, const std::string& key) {
      const double storage = oracle.estimate_configuration_storage(next);
      const double added = storage - used;
      if (storage > budget_mb || !(added > 0.0)) return;
      const double next_cost = oracle.estimate_workload_cost(workload, next);
      const double reduction = cost - next_cost;
      if (!(reduction > 0.0)) return;
      const double ratio = reduction / added;
      if (!best || ratio > best->ratio || (ratio == best->ratio && key < best->key)) {
        best = Move{std::move(next), storage, next_cost, ratio, key};
      }
    };

    for (const auto& c : candidates) {
      const auto index = c.as_index();
      if (config.contains(index)) continue;
      auto next = config;
      next.indexes.push_back(index);
      consider(std::move(next), canonical_key(index));
    }
    for (std::size_t i = 0; i < config.indexes.size(); ++i) {
      const auto& base = config.indexes[i];
      if (base.columns.size() >= max_width) continue;
      for (const auto& c : candidates) {
        if (c.table != base.table) continue;
        if (std::find(base.columns.begin(), base.columns.end(), c.column) != base.columns.end()) {
          continue;
        }
        Index widened = base;
        widened.columns.push_back(c.column);
        if (config.contains(widened)) continue;
        auto next = config;
        next.indexes[i] = widened;
        consider(std::move(next), canonical_key(widened));
      }
    }
    if (!best) break;
    config = std::move(best->next);
    used = best->storage;
    cost = best->cost;
    if (cost_history) cost_history->push_back(cost);
  }
  return finish(std::move(config), oracle);
}

IndexConfiguration drop_advisor(const Workload& workload, const CostOracle& oracle,
                                double budget_mb) {
  check_budget(budget_mb);
  const auto candidates = singles(workload, oracle);
  IndexConfiguration config;
  std::vector<double> utility;
  std::vector<std::string> names;
  for (const auto& c : candidates) {
    config.indexes.push_back(c.as_index());
    utility.push_back(c.est_utility);
    names.push_back(c.name);
  }

  while (!config.indexes.empty() && oracle.estimate_configuration_storage(config) > budget_mb) {
    const double cost = oracle.estimate_workload_cost(workload, config);
    std::size_t victim = 0;
    double victim_increase = 0.0;
    for (std::size_t i = 0; i < config.indexes.size(); ++i) {
      auto without = config;
      without.indexes.erase(without.indexes.begin() + static_cast<std::ptrdiff_t>(i));
      const double increase = oracle.estimate_workload_cost(workload, without) - cost;
      const bool better =
          i == 0 || increase < victim_increase ||
          (increase == victim_increase &&
           (utility[i] < utility[victim] || (utility[i] == utility[victim] && names[i] < names[victim])));
      if (better) {
        victim = i;
        victim_increase = increase;
      }
    }
    const auto at = static_cast<std::ptrdiff_t>(victim);
    config.indexes.erase(config.indexes.begin() + at);
    utility.erase(utility.begin() + at);
    names.erase(names.begin() + at);
  }
  return finish(std::move(config), oracle);
}

std::vector<Index> candidate_universe(const Workload& workload, const CostOracle& oracle,
                                      bool composites, const CombinationRule& rule) {
  const auto candidates = singles(workload, oracle);
  std::vector<Index> out;
  for (const auto& c : candidates) out.push_back(c.as_index());
  if (!composites) return out;

  std::vector<std::string> tables;
  for (const auto& c : candidates) {
    if (std::find(tables.begin(), tables.end(), c.table) == tables.end()) tables.push_back(c.table);
  }
  for (const auto& table : tables) {
    std::vector<const ColumnCandidate*> group;
    for (const auto& c : candidates) {
      if (c.table == table) group.push_back(&c);
    }
    std::stable_sort(group.begin(), group.end(), [&](const auto* a, const auto* b) {
      const int ra = rule.rank(a->operators);
      const int rb = rule.rank(b->operators);
      if (ra != rb) return ra < rb;
      if (a->est_utility != b->est_utility) return a->est_utility > b->est_utility;
      return a->name < b->name;
    });
    for (std::size_t width = 2; width <= std::min(rule.max_width, group.size()); ++width) {
      Index index{table, {}};
      for (std::size_t i = 0; i < width; ++i) index.columns.push_back(group[i]->column);
      out.push_back(std::move(index));
    }
  }
  return out;
}

IndexConfiguration brute_force_optimal(const Workload& workload, const CostOracle& oracle,
                                       double budget_mb, const std::vector<Index>& candidates) {
  check_budget(budget_mb);
  if (candidates.size() > kBruteForceCap) {
    throw ValidationError(fmt::format("brute force is capped at {} candidates, got {}",
                                      kBruteForceCap, candidates.size()));
  }
  std::vector<double> storage;
  for (const auto& index : candidates) storage.push_back(oracle.estimate_index_storage(index));

  IndexConfiguration best;
  double best_cost = oracle.estimate_workload_cost(workload, best);
  double best_used = 0.0;
  std::vector<std::string> best_keys;

  const std::uint32_t subsets = 1U << candidates.size();
  for (std::uint32_t mask = 1; mask < subsets; ++mask) {
    double used = 0.0;
    IndexConfiguration config;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if ((mask >> i) & 1U) {
        used += storage[i];
        config.indexes.push_back(candidates[i]);
      }
    }
    if (used > budget_mb) continue;
    const double cost = oracle.estimate_workload_cost(workload, config);
    if (cost > best_cost) continue;
    auto keys = config.keys();
    std::sort(keys.begin(), keys.end());
    if (cost == best_cost) {
      // Equal cost: less storage, then the smaller key list.
      if (used > best_used || (used == best_used && !(keys < best_keys))) continue;
    }
    best = std::move(config);
    best_cost = cost;
    best_used = used;
    best_keys = std::move(keys);
  }
  return finish(std::move(best), oracle);
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

const std::set<std::string> kMethods{"maadvisor", "extend", "drop", "optimal"};

}  // namespace

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ValidationError("experiment: no methods");
  for (const auto& m : methods) {
    if (kMethods.count(m) == 0) throw ValidationError(fmt::format("experiment: unknown method '{}'", m));
  }
  if (seeds.empty()) throw ValidationError("experiment: no seeds");
  if (budget_fractions.empty() && budgets_mb.empty()) throw ValidationError("experiment: no budgets");
  for (double b : budget_fractions) {
    if (!(b > 0.0)) throw ValidationError("experiment: budget fractions must be positive");
  }
  for (double b : budgets_mb) {
    if (!(b > 0.0)) throw ValidationError("experiment: budgets must be positive");
  }
  if (oracle != "synthetic" && oracle != "synthetic-perturbed") {
    throw ValidationError(fmt::format("experiment: unsupported oracle '{}'", oracle));
  }
  if (schema_path.has_value() != workload_path.has_value()) {
    throw ValidationError("experiment: schema and workload must be given together");
  }
  if (jobs < 1) throw ValidationError("experiment: jobs must be at least 1");
  perturbation.validate();
  instance.validate();
  pipeline.validate();
}

ExperimentSpec parse_experiment_spec(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("experiment spec: {}", e.what()));
  }
  if (!doc.is_object()) throw ValidationError("experiment spec must be a JSON object");

  ExperimentSpec spec;
  if (doc.contains("budget_fractions") || doc.contains("budgets_mb")) spec.budget_fractions.clear();
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "methods") {
        spec.methods = value.get<std::vector<std::string>>();
      } else if (key == "seeds") {
        if (value.is_object()) {
          const auto from = value.at("from").get<std::uint64_t>();
          const auto count = value.at("count").get<std::uint64_t>();
          spec.seeds.clear();
          for (std::uint64_t s = 0; s < count; ++s) spec.seeds.push_back(from + s);
        } else {
          spec.seeds = value.get<std::vector<std::uint64_t>>();
        }
      } else if (key == "budget_fractions") {
        spec.budget_fractions = value.get<std::vector<double>>();
      } else if (key == "budgets_mb") {
        spec.budgets_mb = value.get<std::vector<double>>();
      } else if (key == "oracle") {
        spec.oracle = value.get<std::string>();
      } else if (key == "perturbation") {
        for (const auto& [k, v] : value.items()) {
          if (k == "seed") spec.perturbation.seed = v.get<std::uint64_t>();
          else if (k == "fraction") spec.perturbation.fraction_columns = v.get<double>();
          else if (k == "factor") spec.perturbation.error_factor = v.get<double>();
          else throw ValidationError(fmt::format("experiment spec: unknown perturbation field '{}'", k));
        }
      } else if (key == "instance") {
        spec.instance = instance_spec_from_json(value);
      } else if (key == "schema") {
        spec.schema_path = value.get<std::string>();
      } else if (key == "workload") {
        spec.workload_path = value.get<std::string>();
      } else if (key == "policy") {
        spec.policy = value.get<std::string>();
      } else if (key == "pipeline") {
        spec.pipeline = pipeline_config_from_json(value);
      } else if (key == "timing") {
        spec.timing = value.get<bool>();
      } else if (key == "jobs") {
        spec.jobs = value.get<unsigned>();
      } else {
        throw ValidationError(fmt::format("experiment spec: unknown field '{}'", key));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("experiment spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

namespace {

struct Instance {
  std::shared_ptr<const DatabaseSchema> schema;
  Workload workload;
};

/// Highest-utility single-column candidates, capped for exhaustive search.
std::vector<Index> optimal_universe(const Workload& workload, const CostOracle& oracle) {
  auto candidates = sorted_by_utility(singles(workload, oracle));
  if (candidates.size() > kBruteForceCap) candidates.resize(kBruteForceCap);
  std::vector<Index> out;
  for (const auto& c : candidates) out.push_back(c.as_index());
  return out;
}

std::vector<MetricReport> run_cell(const ExperimentSpec& spec, const Instance& instance,
                                   std::uint64_t seed, double budget_mb) {
  const SyntheticOracle truth(instance.schema);
  std::optional<SyntheticOracle> perturbed;
  if (spec.oracle == "synthetic-perturbed") {
    auto p = spec.perturbation;
    p.seed += seed;
    perturbed = truth.perturbed(p);
  }
  const CostOracle& oracle = perturbed ? static_cast<const CostOracle&>(*perturbed) : truth;
  const auto& workload = instance.workload;
  const IndexConfiguration empty;
  const double est_before = oracle.estimate_workload_cost(workload, empty);
  const double true_before = truth.true_cost(workload, empty);

  std::vector<MetricReport> rows;
  for (const auto& method : spec.methods) {
    const auto start = std::chrono::steady_clock::now();
    IndexConfiguration config;
    if (method == "maadvisor") {
      auto policy = make_policy(spec.policy);
      config = run_pipeline(workload, oracle, budget_mb, *policy, spec.pipeline).config;
    } else if (method == "extend") {
      config = extend_advisor(workload, oracle, budget_mb, spec.pipeline.combination.max_width);
    } else if (method == "drop") {
      config = drop_advisor(workload, oracle, budget_mb);
    } else {
      config = brute_force_optimal(workload, oracle, budget_mb, optimal_universe(workload, oracle));
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    MetricReport row;
    row.method = method;
    row.seed = seed;
    row.budget_mb = budget_mb;
    row.used_mb = config.est_storage_mb;
    row.est_before = est_before;
    row.est_after = oracle.estimate_workload_cost(workload, config);
    row.true_before = true_before;
    row.true_after = truth.true_cost(workload, config);
    row.btc = row.used_mb > 0.0 ? benefit_to_cost(row.true_before, row.true_after, row.used_mb) : 0.0;
    row.rel_impr_pct = relative_improvement(row.true_before, row.true_after);
    row.runtime_s = spec.timing ? elapsed.count() : 0.0;
    row.config_keys = config.keys();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<MetricReport> run_experiment(const ExperimentSpec& spec) {
  spec.validate();

  std::optional<Instance> fixed;
  if (spec.schema_path) {
    auto schema = std::make_shared<const DatabaseSchema>(load_schema(read_text_file(*spec.schema_path)));
    auto workload = load_workload(parse_workload_document(read_text_file(*spec.workload_path)), *schema);
    fixed = Instance{schema, std::move(workload)};
  }

  struct Cell {
    std::size_t instance;
    std::uint64_t seed;
    double budget_mb;
  };
  std::vector<Instance> instances;
  std::vector<Cell> cells;
  for (auto seed : spec.seeds) {
    if (fixed) {
      if (instances.empty()) instances.push_back(*fixed);
    } else {
      auto instance_spec = spec.instance;
      instance_spec.seed = seed;
      auto generated = generate_instance(instance_spec);
      instances.push_back({generated.schema, std::move(generated.workload)});
    }
    const std::size_t at = instances.size() - 1;
    const double table_mb = total_table_storage_mb(*instances[at].schema);
    for (double f : spec.budget_fractions) cells.push_back({at, seed, f * table_mb});
    for (double b : spec.budgets_mb) cells.push_back({at, seed, b});
  }

  std::vector<std::vector<MetricReport>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_cell(spec, instances[cells[i].instance], cells[i].seed, cells[i].budget_mb);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const auto threads = std::min<std::size_t>(spec.jobs, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<MetricReport> out;
  for (auto& rows : results) {
    for (auto& row : rows) out.push_back(std::move(row));
  }
  return out;
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
  std::string out =
      "method,seed,budget_mb,used_mb,est_before,est_after,true_before,true_after,btc,rel_impr_pct,"
      "runtime_s\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.method, r.seed, r.budget_mb, r.used_mb,
                       r.est_before, r.est_after, r.true_before, r.true_after, r.btc, r.rel_impr_pct,
                       r.runtime_s);
  }
  return out;
}

std::string reports_to_json(const std::vector<MetricReport>& reports) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    out.push_back({{"method", r.method},
                   {"seed", r.seed},
                   {"budget_mb", r.budget_mb},
                   {"used_mb", r.used_mb},
                   {"est_before", r.est_before},
                   {"est_after", r.est_after},
                   {"true_before", r.true_before},
                   {"true_after", r.true_after},
                   {"btc", r.btc},
                   {"rel_impr_pct", r.rel_impr_pct},
                   {"runtime_s", r.runtime_s},
                   {"indexes", r.config_keys}});
  }
  return out.dump(2) + "\n";
}

}  // namespace maadvisor
