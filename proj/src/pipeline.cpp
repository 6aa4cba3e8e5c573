#include "maadvisor/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>

#include "maadvisor/io.hpp"

namespace maadvisor {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Rules

int CombinationRule::rank(OperatorClass op) const {
  for (std::size_t i = 0; i < precedence.size(); ++i) {
    if (precedence[i] == op) return static_cast<int>(i);
  }
  return static_cast<int>(precedence.size());
}

int CombinationRule::rank(OperatorSet ops) const {
  int best = static_cast<int>(precedence.size());
  for (auto op : ops.members()) best = std::min(best, rank(op));
  return best;
}

void CombinationRule::validate() const {
  OperatorSet seen;
  for (auto op : precedence) {
    if (seen.contains(op)) throw ValidationError("combination precedence repeats an operator");
    seen.insert(op);
  }
  if (max_width < 2) throw ValidationError("max composite width must be at least 2");
}

bool ExperienceRule::matches(const Subject& s) const {
  if (only_operators) {
    if (s.operators.empty()) return false;
    for (auto op : s.operators.members()) {
      if (!only_operators->contains(op)) return false;
    }
  }
  if (max_cardinality_ratio) {
    if (!(s.rows > 0.0) || s.cardinality / s.rows > *max_cardinality_ratio) return false;
  }
  if (max_table_rows && s.rows > *max_table_rows) return false;
  if (max_marginal_utility && s.marginal_utility > *max_marginal_utility) return false;
  return true;
}

std::vector<ExperienceRule> parse_experience_rules(const std::string& document) {
  auto doc = json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
    throw ValidationError("experience rules: expected {\"rules\": [...]}");
  }
  std::vector<ExperienceRule> out;
  for (const auto& item : doc["rules"]) {
    try {
      ExperienceRule rule;
      rule.id = item.at("id").get<std::string>();
      rule.description = item.value("description", "");
      const auto verdict = item.at("verdict").get<std::string>();
      if (verdict == "discourage") {
        rule.verdict = ExperienceVerdict::Discourage;
      } else if (verdict == "remove") {
        rule.verdict = ExperienceVerdict::Remove;
      } else {
        throw ValidationError(fmt::format("experience rule '{}': unknown verdict '{}'", rule.id,
                                          verdict));
      }
      const auto& when = item.at("when");
      std::size_t conditions = 0;
      for (const auto& [key, value] : when.items()) {
        ++conditions;
        if (key == "only_operators") {
          OperatorSet ops;
          for (const auto& name : value) {
            auto op = operator_from_string(name.get<std::string>());
            if (!op) throw ValidationError(fmt::format("unknown operator {}", name.dump()));
            ops.insert(*op);
          }
          rule.only_operators = ops;
        } else if (key == "max_cardinality_ratio") {
          rule.max_cardinality_ratio = value.get<double>();
        } else if (key == "max_table_rows") {
          rule.max_table_rows = value.get<double>();
        } else if (key == "max_marginal_utility") {
          rule.max_marginal_utility = value.get<double>();
        } else {
          throw ValidationError(fmt::format("experience rule '{}': unknown condition '{}'",
                                            rule.id, key));
        }
      }
      if (conditions == 0) {
        throw ValidationError(fmt::format("experience rule '{}' has no conditions", rule.id));
      }
      out.push_back(std::move(rule));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("experience rules: {}", e.what()));
    }
  }
  return out;
}

const std::vector<ExperienceRule>& default_experience_rules() {
  static const std::vector<ExperienceRule> rules = parse_experience_rules(R"({"rules":[
    {"id": "low-cardinality-only-sort",
     "description": "Columns with few distinct values used only for sorting or grouping rarely pay for an index.",
     "verdict": "discourage",
     "when": {"only_operators": ["SortGroup"], "max_cardinality_ratio": 0.001}},
    {"id": "tiny-table",
     "description": "Tables this small are scanned faster than an index is maintained.",
     "verdict": "discourage",
     "when": {"max_table_rows": 1000}},
    {"id": "non-positive-utility",
     "description": "An index that no longer lowers the estimated workload cost only adds maintenance.",
     "verdict": "remove",
     "when": {"max_marginal_utility": 0}}
  ]})");
  return rules;
}

void PipelineConfig::validate() const {
  if (max_substeps < 1) throw ValidationError("alpha (max_substeps) must be at least 1");
  combination.validate();
  if (!(discrepancy_factor > 1.0)) throw ValidationError("discrepancy_factor must exceed 1");
  if (!(indicator_threshold >= -1.0 && indicator_threshold <= 1.0)) {
    throw ValidationError("indicator_threshold must lie in [-1,1]");
  }
}

PipelineConfig pipeline_config_from_json(const json& object) {
  if (!object.is_object()) throw ValidationError("pipeline config must be a JSON object");
  PipelineConfig config;
  try {
    for (const auto& [key, value] : object.items()) {
      if (key == "alpha") {
        config.max_substeps = value.get<int>();
      } else if (key == "enable_revision") {
        config.enable_revision = value.get<bool>();
      } else if (key == "enable_indicator") {
        config.enable_indicator = value.get<bool>();
      } else if (key == "indicator_threshold") {
        config.indicator_threshold = value.get<double>();
      } else if (key == "discrepancy_factor") {
        config.discrepancy_factor = value.get<double>();
      } else if (key == "max_composite_width") {
        config.combination.max_width = value.get<std::size_t>();
        config.refresh.max_composite_width = config.combination.max_width;
      } else if (key == "precedence") {
        const auto names = value.get<std::vector<std::string>>();
        if (names.size() != kOperatorClassCount) {
          throw ValidationError("precedence must list every operator class once");
        }
        for (std::size_t i = 0; i < names.size(); ++i) {
          const auto op = operator_from_string(names[i]);
          if (!op) throw ValidationError(fmt::format("unknown operator '{}'", names[i]));
          config.combination.precedence[i] = *op;
        }
      } else if (key == "experience_rules") {
        config.experience = parse_experience_rules(read_text_file(value.get<std::string>()));
      } else {
        throw ValidationError(fmt::format("pipeline config: unknown field '{}'", key));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("pipeline config: {}", e.what()));
  }
  config.validate();
  return config;
}

std::string trace_to_jsonl(const std::vector<TraceEntry>& trace) {
  std::string out;
  for (const auto& entry : trace) {
    nlohmann::ordered_json record{{"step", entry.step},
                {"action", format_action(entry.action)},
                {"used_mb", entry.used_mb},
                {"config_keys", entry.config_keys}};
    if (entry.fallback) record["fallback"] = true;
    out += record.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// State

namespace {

double storage_of(const IndexConfiguration& config, const CostOracle& oracle) {
  return oracle.estimate_configuration_storage(config);
}

const ColumnCandidate* find_candidate(const std::vector<ColumnCandidate>& cs, std::string_view table,
                                      std::string_view column) {
  for (const auto& c : cs) {
    if (c.table == table && c.column == column) return &c;
  }
  return nullptr;
}

IndexConfiguration without(const IndexConfiguration& config, std::size_t skip) {
  IndexConfiguration out;
  for (std::size_t i = 0; i < config.indexes.size(); ++i) {
    if (i != skip) out.indexes.push_back(config.indexes[i]);
  }
  return out;
}

/// (cost without index i - cost with it) / storage(i).
double marginal(const IndexConfiguration& config, std::size_t i, const Workload& workload,
                const CostOracle& oracle) {
  const double storage = oracle.estimate_index_storage(config.indexes[i]);
  if (!(storage > 0.0)) return 0.0;
  return (oracle.estimate_workload_cost(workload, without(config, i)) -
          oracle.estimate_workload_cost(workload, config)) /
         storage;
}

struct CardinalityBounds {
  double lower = 1.0;
  double upper = 1.0;
};

/// Distinct-value range implied by the column's value range, histogram and rows.
CardinalityBounds implied_cardinality_bounds(const TableMeta& table, const ColumnMeta& column) {
  CardinalityBounds b;
  b.upper = std::max(1.0, static_cast<double>(table.row_count));
  if (column.min_value && column.max_value) {
    const auto* lo = std::get_if<double>(&*column.min_value);
    const auto* hi = std::get_if<double>(&*column.max_value);
    if (lo != nullptr && hi != nullptr && *hi >= *lo) {
      // Integral ranges bound the distinct count; fractional ones do not.
      if (std::floor(*lo) == *lo && std::floor(*hi) == *hi) {
        b.upper = std::min(b.upper, *hi - *lo + 1.0);
      }
    }
    if (*column.min_value != *column.max_value) b.lower = 2.0;
  }
  const auto occupied = std::count_if(column.histogram.begin(), column.histogram.end(),
                                      [](const HistogramBucket& h) { return h.frequency > 0; });
  b.lower = std::max(b.lower, static_cast<double>(occupied));
  // A value histogram covering every row enumerates the distinct values.
  double covered = 0.0;
  for (const auto& h : column.histogram) covered += h.frequency;
  if (occupied > 0 && covered >= static_cast<double>(table.row_count)) b.upper = b.lower;
  b.upper = std::max(b.upper, b.lower);
  return b;
}

}  // namespace

PipelineState::PipelineState(const Workload& w, const CostOracle& o, const PipelineConfig& c,
                             double budget_mb)
    : workload(&w), oracle(&o), config(&c) {
  if (!(budget_mb > 0.0)) throw ValidationError("storage budget must be positive");
  budget = Budget{budget_mb, 0.0};
  merged = merge_candidates(build_query_infos(w, o));
  candidates = merged;
}

void PipelineState::refresh() {
  indexes.est_storage_mb = storage_of(indexes, *oracle);
  candidates = refresh_candidates(merged, indexes, *workload, *oracle, config->refresh);
}

std::vector<CombinationOption> PipelineState::combination_options() const {
  std::vector<CombinationOption> out;
  std::vector<std::string> tables;
  for (const auto& index : indexes.indexes) {
    if (std::find(tables.begin(), tables.end(), index.table) == tables.end()) {
      tables.push_back(index.table);
    }
  }
  const auto& rule = config->combination;
  const double current = oracle->estimate_workload_cost(*workload, indexes);
  for (const auto& table : tables) {
    std::vector<const ColumnCandidate*> singles;
    for (const auto& index : indexes.indexes) {
      if (index.table != table || index.columns.size() != 1) continue;
      const auto* c = find_candidate(merged, table, index.columns[0]);
      if (c != nullptr &&
          std::find(singles.begin(), singles.end(), c) == singles.end()) {
        singles.push_back(c);
      }
    }
    if (singles.size() < 2) continue;
    std::sort(singles.begin(), singles.end(), [&](const ColumnCandidate* a, const ColumnCandidate* b) {
      const int ra = rule.rank(a->operators);
      const int rb = rule.rank(b->operators);
      if (ra != rb) return ra < rb;
      if (a->est_utility != b->est_utility) return a->est_utility > b->est_utility;
      return a->name < b->name;
    });
    // Best prefix of the precedence order.
    std::optional<CombinationOption> best;
    const auto widest = std::min(rule.max_width, singles.size());
    for (std::size_t width = 2; width <= widest; ++width) {
      CombinationOption option;
      option.composite.table = table;
      for (std::size_t k = 0; k < width; ++k) {
        option.composite.columns.push_back(singles[k]->column);
        option.merged_keys.push_back(canonical_key(singles[k]->as_index()));
      }
      IndexConfiguration next;
      for (const auto& index : indexes.indexes) {
        const bool merged_single =
            index.table == table && index.columns.size() == 1 &&
            std::find(option.composite.columns.begin(), option.composite.columns.end(),
                      index.columns[0]) != option.composite.columns.end();
        if (!merged_single) next.indexes.push_back(index);
      }
      if (!next.contains(option.composite)) next.indexes.push_back(option.composite);
      option.est_cost_delta = oracle->estimate_workload_cost(*workload, next) - current;
      if (!best || option.est_cost_delta < best->est_cost_delta) best = std::move(option);
    }
    out.push_back(std::move(*best));
  }
  return out;
}

std::vector<IndexView> PipelineState::index_views() const {
  std::vector<IndexView> views(indexes.indexes.size());
  const auto& schema = oracle->schema();
  const auto n = indexes.indexes.size();

  // Sequential leave-one-out: the weakest index is set aside first so that two
  // indexes covering each other are not both reported as useless.
  std::vector<double> plain(n);
  for (std::size_t i = 0; i < n; ++i) plain[i] = marginal(indexes, i, *workload, *oracle);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> storage(n);
  for (std::size_t i = 0; i < n; ++i) storage[i] = oracle->estimate_index_storage(indexes.indexes[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (plain[a] != plain[b]) return plain[a] < plain[b];
    return storage[a] > storage[b];
  });
  std::vector<bool> aside(n, false);
  auto reduced = [&](std::size_t keep_out) {
    IndexConfiguration out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!aside[i] && i != keep_out) out.indexes.push_back(indexes.indexes[i]);
    }
    return out;
  };
  for (auto i : order) {
    auto without_i = reduced(i);
    auto with_i = without_i;
    with_i.indexes.push_back(indexes.indexes[i]);
    const double m = storage[i] > 0.0
                         ? (oracle->estimate_workload_cost(*workload, without_i) -
                            oracle->estimate_workload_cost(*workload, with_i)) /
                               storage[i]
                         : 0.0;
    views[i].marginal_utility = m;
    if (m <= 0.0) aside[i] = true;
  }

  // Cardinality estimates that exceed what the value distribution allows.
  std::map<std::string, double> corrected;
  for (const auto& index : indexes.indexes) {
    const auto* table = schema.find_table(index.table);
    if (table == nullptr) continue;
    for (const auto& column : index.columns) {
      const auto* meta = table->find_column(column);
      if (meta == nullptr) continue;
      const double estimate = oracle->estimated_cardinality(index.table, column);
      const auto bounds = implied_cardinality_bounds(*table, *meta);
      // Too many distinct values for the range, or fewer than the data shows.
      // Either way the distribution's upper bound is the corrected figure.
      if (estimate > config->discrepancy_factor * bounds.upper || estimate < bounds.lower) {
        corrected[column_name(index.table, column)] = bounds.upper;
      }
    }
  }
  std::unique_ptr<CostOracle> corrected_oracle;
  if (!corrected.empty()) corrected_oracle = oracle->with_cardinalities(corrected);

  std::vector<double> scores;
  if (config->enable_indicator && scorer) {
    scores = scorer(indexes.indexes);
    if (scores.size() != n) throw ValidationError("indicator returned a wrong number of scores");
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& v = views[i];
    const auto& index = indexes.indexes[i];
    v.index = index;
    v.key = canonical_key(index);
    v.est_storage_mb = storage[i];
    if (!scores.empty()) v.indicator_score = scores[i];
    for (const auto& column : index.columns) {
      if (corrected.count(column_name(index.table, column)) != 0) v.cardinality_discrepancy = true;
    }
    if (v.cardinality_discrepancy && corrected_oracle) {
      v.corrected_marginal_utility = marginal(indexes, i, *workload, *corrected_oracle);
    }
    const auto* table = schema.find_table(index.table);
    ExperienceRule::Subject subject;
    if (const auto* c = find_candidate(merged, index.table, index.columns.front())) {
      subject.operators = c->operators;
    }
    subject.cardinality = oracle->estimated_cardinality(index.table, index.columns.front());
    subject.rows = table != nullptr ? static_cast<double>(table->row_count) : 0.0;
    subject.marginal_utility = v.corrected_marginal_utility.value_or(v.marginal_utility);
    for (const auto& rule : config->experience) {
      if (!rule.matches(subject)) continue;
      (rule.verdict == ExperienceVerdict::Remove ? v.remove_rules : v.discourage_rules)
          .push_back(rule.id);
    }
  }
  return views;
}

PolicyRequest PipelineState::request(AgentRole role) const {
  PolicyRequest r;
  r.role = role;
  r.context_text = render_candidates(candidates, budget, indexes);
  auto& aux = r.auxiliary;
  aux.budget = budget;
  for (const auto& c : sorted_by_utility(candidates)) {
    CandidateView v;
    v.name = c.name;
    v.table = c.table;
    v.column = c.column;
    v.operators = c.operators;
    v.est_storage_mb = c.est_storage_mb;
    v.est_utility = c.est_utility;
    if (const auto* m = find_candidate(merged, c.table, c.column)) v.base_utility = m->est_utility;
    v.rejected = rejected.count(c.name) != 0;
    aux.candidates.push_back(std::move(v));
  }
  aux.history = history;
  aux.combined_since_change = combined_since_change;
  aux.revised_since_change = revised_since_change;
  aux.suggestion = suggestion;
  aux.indicator_threshold = config->indicator_threshold;
  if (!config->enable_revision) {
    aux.available_actions = {ActionKind::Selection, ActionKind::Combination, ActionKind::Stop};
  }
  // The heavier views are only built for the agents that use them.
  if (role == AgentRole::Planning || role == AgentRole::Combination) {
    aux.combinations = combination_options();
  }
  if (role == AgentRole::Planning || role == AgentRole::Revision) {
    if (role == AgentRole::Revision) {
      aux.indexes = index_views();
    } else {
      for (const auto& index : indexes.indexes) {
        IndexView v;
        v.index = index;
        v.key = canonical_key(index);
        v.est_storage_mb = oracle->estimate_index_storage(index);
        aux.indexes.push_back(std::move(v));
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Local agents

StepOutcome select_index(PipelineState& state, PolicyBackend& policy) {
  const auto response = policy.decide(state.request(AgentRole::Selection));
  StepOutcome out{{ActionKind::Selection, {}}, false, response.fallback, {}};
  const auto& name = response.decision.selected;
  const auto* candidate = [&]() -> const ColumnCandidate* {
    for (const auto& c : state.candidates) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }();
  auto reject = [&](std::string why) {
    out.action = AgentAction::exception(response.raw_text.empty() ? name : response.raw_text);
    out.detail = std::move(why);
    return out;
  };
  if (candidate == nullptr) return reject(fmt::format("selection '{}' is not a candidate", name));
  const auto index = candidate->as_index();
  if (state.indexes.contains(index)) {
    return reject(fmt::format("{} is already recommended", canonical_key(index)));
  }
  if (state.budget.used_mb + candidate->est_storage_mb > state.budget.total_mb) {
    return reject(fmt::format("{} needs {:.3f} MB but only {:.3f} MB remain", name,
                              candidate->est_storage_mb, state.budget.remaining_mb()));
  }
  state.indexes.indexes.push_back(index);
  state.budget.used_mb += candidate->est_storage_mb;
  state.refresh();
  out.changed = true;
  out.detail = canonical_key(index);
  return out;
}

StepOutcome combine_indexes(PipelineState& state, PolicyBackend& policy) {
  const auto response = policy.decide(state.request(AgentRole::Combination));
  StepOutcome out{{ActionKind::Combination, {}}, false, response.fallback, {}};
  const auto& rule = state.config->combination;
  auto next = state.indexes;
  for (auto composite : response.decision.indexes) {
    std::string why;
    std::set<std::string> seen;
    for (const auto& column : composite.columns) {
      const bool present = std::any_of(next.indexes.begin(), next.indexes.end(), [&](const Index& i) {
        return i.table == composite.table &&
               std::find(i.columns.begin(), i.columns.end(), column) != i.columns.end();
      });
      if (!present) why = fmt::format("{} is not in the configuration", column_name(composite.table, column));
      if (!seen.insert(column).second) why = "repeated column";
    }
    if (composite.columns.size() < 2) why = "a composite needs at least two columns";
    if (composite.columns.size() > rule.max_width) {
      why = fmt::format("width {} exceeds {}", composite.columns.size(), rule.max_width);
    }
    if (!why.empty()) {
      out.action = AgentAction::exception(response.raw_text);
      out.detail = why;
      return out;
    }
    // Column order follows operator precedence, then utility, then name.
    std::stable_sort(composite.columns.begin(), composite.columns.end(),
                     [&](const std::string& a, const std::string& b) {
                       const auto* ca = find_candidate(state.merged, composite.table, a);
                       const auto* cb = find_candidate(state.merged, composite.table, b);
                       const int ra = ca ? rule.rank(ca->operators) : kOperatorClassCount;
                       const int rb = cb ? rule.rank(cb->operators) : kOperatorClassCount;
                       if (ra != rb) return ra < rb;
                       const double ua = ca ? ca->est_utility : 0.0;
                       const double ub = cb ? cb->est_utility : 0.0;
                       if (ua != ub) return ua > ub;
                       return a < b;
                     });
    IndexConfiguration merged;
    for (const auto& index : next.indexes) {
      const bool absorbed =
          index.table == composite.table && index.columns.size() == 1 &&
          std::find(composite.columns.begin(), composite.columns.end(), index.columns[0]) !=
              composite.columns.end();
      if (!absorbed) merged.indexes.push_back(index);
    }
    if (!merged.contains(composite)) merged.indexes.push_back(composite);
    next = std::move(merged);
  }
  const double used = storage_of(next, *state.oracle);
  if (used > state.budget.total_mb) {
    out.action = AgentAction::exception(response.raw_text);
    out.detail = fmt::format("combined configuration needs {:.3f} MB", used);
    return out;
  }
  if (next.keys() != state.indexes.keys()) {
    state.indexes = std::move(next);
    state.budget.used_mb = used;
    state.refresh();
    out.changed = true;
  }
  return out;
}

StepOutcome revise_indexes(PipelineState& state, PolicyBackend& policy) {
  StepOutcome out{{ActionKind::Revision, {}}, false, false, {}};
  // Duplicates first, by canonical key.
  IndexConfiguration unique;
  for (const auto& index : state.indexes.indexes) {
    if (!unique.contains(index)) unique.indexes.push_back(index);
  }
  if (unique.indexes.size() != state.indexes.indexes.size()) {
    state.indexes.indexes = std::move(unique.indexes);
    out.changed = true;
  }

  const auto response = policy.decide(state.request(AgentRole::Revision));
  out.fallback = response.fallback;
  std::vector<std::string> removed;
  for (const auto& drop : response.decision.indexes) {
    auto it = std::find(state.indexes.indexes.begin(), state.indexes.indexes.end(), drop);
    if (it == state.indexes.indexes.end()) continue;
    removed.push_back(canonical_key(*it));
    state.indexes.indexes.erase(it);
    out.changed = true;
    for (const auto& column : drop.columns) {
      const bool still_used =
          std::any_of(state.indexes.indexes.begin(), state.indexes.indexes.end(), [&](const Index& i) {
            return i.table == drop.table &&
                   std::find(i.columns.begin(), i.columns.end(), column) != i.columns.end();
          });
      if (!still_used) state.rejected.insert(column_name(drop.table, column));
    }
  }
  if (out.changed) {
    state.refresh();
    state.budget.used_mb = state.indexes.est_storage_mb;
  }
  if (!removed.empty()) out.detail = fmt::format("removed {}", fmt::join(removed, " "));
  return out;
}

Suggestion reflect(const PipelineState& state, PolicyBackend& policy) {
  return policy.decide(state.request(AgentRole::Reflection)).decision.suggestion;
}

// ---------------------------------------------------------------------------
// Orchestrator

RecommendationResult run_pipeline(const Workload& workload, const CostOracle& oracle,
                                  double budget_mb, PolicyBackend& policy,
                                  const PipelineConfig& config, IndexScorer scorer) {
  config.validate();
  PipelineState state(workload, oracle, config, budget_mb);
  state.scorer = std::move(scorer);

  RecommendationResult result;
  auto finish = [&] {
    result.config = state.indexes;
    result.budget = state.budget;
  };
  try {
    result.est_cost_before = oracle.estimate_workload_cost(workload, {});
    state.refresh();
    for (int a = 0; a <= config.max_substeps; ++a) {
      const auto plan = policy.decide(state.request(AgentRole::Planning));
      StepOutcome outcome{plan.decision.action, false, plan.fallback, {}};
      const auto kind = plan.decision.action.kind;
      const bool allowed =
          kind == ActionKind::Stop || kind == ActionKind::Exception ||
          (kind != ActionKind::Revision || config.enable_revision);
      if (!allowed) {
        outcome.action = AgentAction::exception(plan.raw_text.empty() ? std::string(to_string(kind))
                                                                      : plan.raw_text);
        outcome.detail = "action is disabled";
      } else if (kind == ActionKind::Selection) {
        outcome = select_index(state, policy);
      } else if (kind == ActionKind::Combination) {
        outcome = combine_indexes(state, policy);
      } else if (kind == ActionKind::Revision) {
        outcome = revise_indexes(state, policy);
      }
      outcome.fallback = outcome.fallback || plan.fallback;

      result.trace.push_back(TraceEntry{result.trace.size(), outcome.action, state.budget.used_mb,
                                        state.indexes.keys(), outcome.fallback, outcome.detail});
      if (outcome.action.kind == ActionKind::Exception) ++result.exceptions;
      if (kind == ActionKind::Stop) break;

      state.history.push_back(HistoryEntry{outcome.action, outcome.changed});
      if (outcome.changed) {
        state.combined_since_change = false;
        state.revised_since_change = false;
      }
      if (outcome.action.kind == ActionKind::Combination) state.combined_since_change = true;
      if (outcome.action.kind == ActionKind::Revision) state.revised_since_change = true;
      state.suggestion = reflect(state, policy);
    }
    result.est_cost_after = oracle.estimate_workload_cost(workload, state.indexes);
  } catch (const OracleError& e) {
    finish();
    throw PipelineAborted(e.what(), std::move(result));
  }
  finish();
  return result;
}

}  // namespace maadvisor
