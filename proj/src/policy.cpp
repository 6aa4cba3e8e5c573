#include "maadvisor/policy.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <semaphore>

namespace maadvisor {

using nlohmann::json;

std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::Planning: return "Planning";
    case AgentRole::Selection: return "Selection";
    case AgentRole::Combination: return "Combination";
    case AgentRole::Revision: return "Revision";
    case AgentRole::Reflection: return "Reflection";
  }
  return "?";
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Selection: return "Selection";
    case ActionKind::Combination: return "Combination";
    case ActionKind::Revision: return "Revision";
    case ActionKind::Stop: return "Stop";
    case ActionKind::Exception: return "Exception";
  }
  return "?";
}

std::optional<ActionKind> action_from_string(std::string_view text) {
  for (auto kind : {ActionKind::Selection, ActionKind::Combination, ActionKind::Revision,
                    ActionKind::Stop}) {
    if (text == to_string(kind)) return kind;
  }
  return std::nullopt;
}

std::string format_action(const AgentAction& action) {
  if (action.kind == ActionKind::Exception) return fmt::format("Exception({})", action.raw);
  return std::string(to_string(action.kind));
}

bool Suggestion::discourages(ActionKind kind) const {
  return std::find(discouraged.begin(), discouraged.end(), kind) != discouraged.end();
}

bool PolicyAuxiliary::available(ActionKind kind) const {
  return std::find(available_actions.begin(), available_actions.end(), kind) !=
         available_actions.end();
}

json to_json(const PolicyAuxiliary& aux) {
  json out;
  out["budget"] = {{"total_mb", aux.budget.total_mb},
                   {"used_mb", aux.budget.used_mb},
                   {"remaining_mb", aux.budget.remaining_mb()}};
  out["candidates"] = json::array();
  for (const auto& c : aux.candidates) {
    out["candidates"].push_back({{"name", c.name},
                                 {"operators", format_operators(c.operators)},
                                 {"storage_mb", c.est_storage_mb},
                                 {"utility", c.est_utility},
                                 {"rejected", c.rejected}});
  }
  out["indexes"] = json::array();
  for (const auto& v : aux.indexes) {
    json item{{"key", v.key},
              {"storage_mb", v.est_storage_mb},
              {"marginal_utility", v.marginal_utility},
              {"experience_remove", v.remove_rules},
              {"experience_discourage", v.discourage_rules},
              {"cardinality_discrepancy", v.cardinality_discrepancy}};
    if (v.indicator_score) item["indicator_score"] = *v.indicator_score;
    if (v.corrected_marginal_utility) {
      item["corrected_marginal_utility"] = *v.corrected_marginal_utility;
    }
    out["indexes"].push_back(std::move(item));
  }
  out["combination_options"] = json::array();
  for (const auto& o : aux.combinations) {
    out["combination_options"].push_back({{"merge", o.merged_keys},
                                          {"composite", canonical_key(o.composite)},
                                          {"est_cost_delta", o.est_cost_delta}});
  }
  out["history"] = json::array();
  for (const auto& h : aux.history) out["history"].push_back(format_action(h.action));
  out["combined_since_change"] = aux.combined_since_change;
  out["revised_since_change"] = aux.revised_since_change;
  json discouraged = json::array();
  for (auto kind : aux.suggestion.discouraged) discouraged.push_back(to_string(kind));
  out["suggestion"] = {{"text", aux.suggestion.text}, {"discourage", discouraged}};
  out["indicator_threshold"] = aux.indicator_threshold;
  out["actions"] = json::array();
  for (auto kind : aux.available_actions) out["actions"].push_back(to_string(kind));
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

std::optional<json> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}') {
        if (--depth == 0) {
          auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

using Kind = ResponseParseError::Kind;

[[noreturn]] void schema_error(const std::string& what) { throw ResponseParseError(Kind::Schema, what); }

void expect_keys(const json& object, std::initializer_list<std::string_view> required,
                 std::initializer_list<std::string_view> optional = {}) {
  for (auto key : required) {
    if (!object.contains(key)) schema_error(fmt::format("missing field \"{}\"", key));
  }
  for (const auto& [key, value] : object.items()) {
    const bool known =
        std::find(required.begin(), required.end(), key) != required.end() ||
        std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) schema_error(fmt::format("unexpected field \"{}\"", key));
  }
}

Index parse_index_item(const json& item) {
  if (item.is_string()) {
    auto index = parse_canonical_key(item.get<std::string>());
    if (!index) schema_error(fmt::format("malformed index key {}", item.dump()));
    return *index;
  }
  if (item.is_array() && !item.empty()) {
    Index index;
    for (const auto& part : item) {
      if (!part.is_string()) schema_error("index column must be a \"Table.Column\" string");
      const auto name = part.get<std::string>();
      const auto dot = name.find('.');
      if (dot == std::string::npos || dot == 0 || dot + 1 == name.size()) {
        schema_error(fmt::format("malformed column name \"{}\"", name));
      }
      const auto table = name.substr(0, dot);
      if (index.table.empty()) {
        index.table = table;
      } else if (index.table != table) {
        schema_error("index columns span several tables");
      }
      index.columns.push_back(name.substr(dot + 1));
    }
    return index;
  }
  schema_error("index must be a canonical key or a list of column names");
}

ActionKind parse_discouraged(const json& item) {
  if (!item.is_string()) schema_error("discourage entries must be strings");
  auto kind = action_from_string(item.get<std::string>());
  if (!kind || *kind == ActionKind::Stop) {
    schema_error(fmt::format("cannot discourage {}", item.dump()));
  }
  return *kind;
}

}  // namespace

Decision parse_agent_response(std::string_view raw_text, const PolicyRequest& request) {
  auto object = extract_first_json_object(raw_text);
  if (!object) throw ResponseParseError(Kind::NoJson, "no JSON object found in the reply");
  Decision decision;
  switch (request.role) {
    case AgentRole::Planning: {
      expect_keys(*object, {"action"});
      const auto& value = (*object)["action"];
      if (!value.is_string()) schema_error("\"action\" must be a string");
      const auto text = value.get<std::string>();
      auto kind = action_from_string(text);
      if (!kind) {
        throw ResponseParseError(Kind::UndefinedAction,
                                 fmt::format("undefined agent call \"{}\"", text));
      }
      decision.action = AgentAction{*kind, {}};
      break;
    }
    case AgentRole::Selection: {
      expect_keys(*object, {"select"});
      const auto& value = (*object)["select"];
      if (!value.is_string()) schema_error("\"select\" must be a string");
      const auto name = value.get<std::string>();
      const auto& offered = request.auxiliary.candidates;
      if (std::none_of(offered.begin(), offered.end(),
                       [&](const CandidateView& c) { return c.name == name; })) {
        throw ResponseParseError(Kind::NotOffered,
                                 fmt::format("\"{}\" is not an offered candidate", name));
      }
      decision.selected = name;
      break;
    }
    case AgentRole::Combination:
    case AgentRole::Revision: {
      expect_keys(*object, {"indexes"});
      const auto& value = (*object)["indexes"];
      if (!value.is_array()) schema_error("\"indexes\" must be a list");
      for (const auto& item : value) decision.indexes.push_back(parse_index_item(item));
      break;
    }
    case AgentRole::Reflection: {
      expect_keys(*object, {"suggestion"}, {"discourage"});
      const auto& text = (*object)["suggestion"];
      if (!text.is_string()) schema_error("\"suggestion\" must be a string");
      decision.suggestion.text = text.get<std::string>();
      if (object->contains("discourage")) {
        const auto& list = (*object)["discourage"];
        if (!list.is_array()) schema_error("\"discourage\" must be a list");
        for (const auto& item : list) {
          const auto kind = parse_discouraged(item);
          if (!decision.suggestion.discourages(kind)) decision.suggestion.discouraged.push_back(kind);
        }
      }
      break;
    }
  }
  return decision;
}

// ---------------------------------------------------------------------------
// Rule backend

namespace {

bool affordable(const CandidateView& c, const Budget& budget) {
  return budget.used_mb + c.est_storage_mb <= budget.total_mb;
}

bool combination_applicable(const PolicyAuxiliary& aux) {
  return std::any_of(aux.combinations.begin(), aux.combinations.end(),
                     [](const CombinationOption& o) { return o.est_cost_delta < 0.0; });
}

AgentAction plan(const PolicyAuxiliary& aux) {
  const auto& s = aux.suggestion;
  const bool can_select =
      std::any_of(aux.candidates.begin(), aux.candidates.end(), [&](const CandidateView& c) {
        return !c.rejected && c.est_utility > 0.0 && affordable(c, aux.budget);
      });
  auto open = [&](ActionKind kind) { return aux.available(kind) && !s.discourages(kind); };
  if (can_select && open(ActionKind::Selection)) return {ActionKind::Selection, {}};
  if (combination_applicable(aux) && !aux.combined_since_change && open(ActionKind::Combination)) {
    return {ActionKind::Combination, {}};
  }
  if (!aux.indexes.empty() && !aux.revised_since_change && open(ActionKind::Revision)) {
    return {ActionKind::Revision, {}};
  }
  return {ActionKind::Stop, {}};
}

std::string select(const PolicyAuxiliary& aux) {
  const CandidateView* best = nullptr;
  for (const auto& c : aux.candidates) {
    if (c.rejected || !affordable(c, aux.budget)) continue;
    if (best == nullptr || c.est_utility > best->est_utility ||
        (c.est_utility == best->est_utility && c.name < best->name)) {
      best = &c;
    }
  }
  return best ? best->name : std::string();
}

bool flagged_for_removal(const IndexView& v, double threshold) {
  if (v.indicator_score && *v.indicator_score < threshold) return true;
  if (!v.remove_rules.empty()) return true;
  // A contradicted cardinality estimate makes the plain marginal untrustworthy.
  const bool corrected = v.cardinality_discrepancy && v.corrected_marginal_utility.has_value();
  return (corrected ? *v.corrected_marginal_utility : v.marginal_utility) <= 0.0;
}

Suggestion reflect_rule(const std::vector<HistoryEntry>& history) {
  Suggestion out;
  const auto n = history.size();
  if (n >= 2) {
    const auto& last = history[n - 1];
    const auto& prev = history[n - 2];
    const auto kind = last.action.kind;
    if (kind == prev.action.kind && !last.config_changed &&
        (kind == ActionKind::Selection || kind == ActionKind::Combination ||
         kind == ActionKind::Revision)) {
      out.discouraged.push_back(kind);
      out.text = fmt::format("{} repeated without changing the configuration; try another action.",
                             to_string(kind));
    }
  }
  if (std::any_of(history.begin(), history.end(), [](const HistoryEntry& h) {
        return h.action.kind == ActionKind::Exception;
      })) {
    if (!out.text.empty()) out.text += " ";
    out.text += "Valid actions are Selection, Combination, Revision and Stop.";
  }
  return out;
}

}  // namespace

PolicyResponse rule_decide(const PolicyRequest& request) {
  PolicyResponse response;
  response.role = request.role;
  response.attempts = 1;
  const auto& aux = request.auxiliary;
  auto& d = response.decision;
  switch (request.role) {
    case AgentRole::Planning:
      d.action = plan(aux);
      response.raw_text = json{{"action", to_string(d.action.kind)}}.dump();
      break;
    case AgentRole::Selection:
      d.selected = select(aux);
      response.raw_text = json{{"select", d.selected}}.dump();
      break;
    case AgentRole::Combination:
      for (const auto& option : aux.combinations) {
        if (option.est_cost_delta < 0.0) d.indexes.push_back(option.composite);
      }
      break;
    case AgentRole::Revision:
      for (const auto& v : aux.indexes) {
        if (flagged_for_removal(v, aux.indicator_threshold)) d.indexes.push_back(v.index);
      }
      break;
    case AgentRole::Reflection:
      d.suggestion = reflect_rule(aux.history);
      break;
  }
  if (request.role == AgentRole::Combination || request.role == AgentRole::Revision) {
    json keys = json::array();
    for (const auto& index : d.indexes) keys.push_back(canonical_key(index));
    response.raw_text = json{{"indexes", keys}}.dump();
  } else if (request.role == AgentRole::Reflection) {
    json discouraged = json::array();
    for (auto kind : d.suggestion.discouraged) discouraged.push_back(to_string(kind));
    response.raw_text = json{{"suggestion", d.suggestion.text}, {"discourage", discouraged}}.dump();
  }
  return response;
}

// ---------------------------------------------------------------------------
// LLM backend

std::string_view system_instruction(AgentRole role) {
  switch (role) {
    case AgentRole::Planning:
      return "You are the planning agent of an index advisor. Given the column candidates, the "
             "current indexes, the storage budget, the action history and a reflection "
             "suggestion, first decide whether to stop (no affordable beneficial candidate and "
             "nothing left to combine or revise), otherwise choose the next action. Reply with "
             "exactly one JSON object: {\"action\": \"Selection\" | \"Combination\" | "
             "\"Revision\" | \"Stop\"}.";
    case AgentRole::Selection:
      return "You are the selection agent of an index advisor. Choose one column candidate to "
             "add as a new single-column index. Prefer high utility per MB and never exceed the "
             "remaining storage budget. Reply with exactly one JSON object: "
             "{\"select\": \"Table.Column\"} using a name from the candidate list.";
    case AgentRole::Combination:
      return "You are the combination agent of an index advisor. Decide which current "
             "single-column indexes on the same table should be merged into composite indexes. "
             "Order columns equality first, then join, range, and sort/group columns; at most "
             "three columns. Use the combination options and their estimated cost change. Reply "
             "with exactly one JSON object: {\"indexes\": [\"I(C t.a,C t.b)\", ...]} listing the "
             "composites to build (an empty list keeps the configuration).";
    case AgentRole::Revision:
      return "You are the revision agent of an index advisor. Identify indexes likely to "
             "regress: negative indicator score, no remaining marginal utility, matched "
             "experience rules, or cardinality estimates that contradict the value distribution. "
             "Reply with exactly one JSON object: {\"indexes\": [\"I(C t.a)\", ...]} listing the "
             "indexes to remove (an empty list keeps them all).";
    case AgentRole::Reflection:
      return "You are the reflection agent of an index advisor. Review the action history and "
             "point out repeated or invalid steps. Reply with exactly one JSON object: "
             "{\"suggestion\": \"...\", \"discourage\": [\"Selection\" | \"Combination\" | "
             "\"Revision\", ...]}.";
  }
  return {};
}

LlmConfig LlmConfig::from_environment() {
  LlmConfig config;
  if (const char* v = std::getenv("MAADVISOR_LLM_ENDPOINT")) config.endpoint = v;
  if (const char* v = std::getenv("MAADVISOR_LLM_API_KEY")) config.api_key = v;
  if (const char* v = std::getenv("MAADVISOR_LLM_MODEL"); v != nullptr && *v != '\0') {
    config.model = v;
  }
  return config;
}

json build_chat_request(const LlmConfig& config, const PolicyRequest& request,
                        const std::vector<std::pair<std::string, std::string>>& retries) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", system_instruction(request.role)}});
  std::string user = request.context_text;
  if (!user.empty()) user += "\n";
  user += "State:\n" + to_json(request.auxiliary).dump();
  messages.push_back({{"role", "user"}, {"content", user}});
  for (const auto& [reply, error] : retries) {
    messages.push_back({{"role", "assistant"}, {"content", reply}});
    messages.push_back(
        {{"role", "user"},
         {"content", fmt::format("Your previous reply was rejected: {}. Reply again with a single "
                                 "JSON object that follows the required format.",
                                 error)}});
  }
  return json{{"model", config.model}, {"messages", messages}, {"temperature", 0}};
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  Endpoint out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

struct LlmPolicy::Impl {
  explicit Impl(LlmConfig c)
      : config(std::move(c)), slots(std::max(1, std::min(config.max_in_flight, 1024))) {}

  LlmConfig config;
  std::counting_semaphore<1024> slots;
  std::atomic<std::size_t> sent{0};

  /// Returns the reply content; throws std::runtime_error on transport failure.
  std::string post(const json& body) {
    const auto endpoint = split_endpoint(config.endpoint);
    httplib::Client client(endpoint.origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

    slots.acquire();
    ++sent;
    auto result = client.Post(endpoint.path + "/chat/completions", headers, body.dump(),
                              "application/json");
    slots.release();

    if (!result) throw std::runtime_error("transport: " + httplib::to_string(result.error()));
    if (result->status != 200) {
      throw std::runtime_error(fmt::format("transport: HTTP {}", result->status));
    }
    auto reply = json::parse(result->body, nullptr, false);
    if (reply.is_discarded()) throw std::runtime_error("transport: response is not JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw std::runtime_error("transport: response lacks choices[0].message.content");
    }
  }
};

LlmPolicy::LlmPolicy(LlmConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  if (impl_->config.endpoint.empty()) throw ValidationError("LLM endpoint is not configured");
  if (impl_->config.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
}

LlmPolicy::~LlmPolicy() = default;

std::size_t LlmPolicy::requests_sent() const { return impl_->sent.load(); }

PolicyResponse LlmPolicy::decide(const PolicyRequest& request) {
  PolicyResponse response;
  response.role = request.role;
  std::vector<std::pair<std::string, std::string>> retries;
  for (int attempt = 1; attempt <= impl_->config.max_attempts; ++attempt) {
    response.attempts = attempt;
    std::string raw;
    try {
      raw = impl_->post(build_chat_request(impl_->config, request, retries));
    } catch (const std::exception& e) {
      response.errors.emplace_back(e.what());
      break;
    }
    response.raw_text = raw;
    try {
      response.decision = parse_agent_response(raw, request);
      return response;
    } catch (const ResponseParseError& e) {
      if (e.kind() == Kind::UndefinedAction) {
        response.decision.action = AgentAction::exception(raw);
        response.errors.emplace_back(e.what());
        return response;
      }
      response.errors.emplace_back(e.what());
      retries.emplace_back(raw, e.what());
    }
  }
  auto fallback = rule_decide(request);
  fallback.attempts = response.attempts;
  fallback.fallback = true;
  fallback.errors = std::move(response.errors);
  if (!response.raw_text.empty()) fallback.raw_text = response.raw_text;
  return fallback;
}

std::unique_ptr<PolicyBackend> make_policy(const std::string& id) {
  if (id == "rules") return std::make_unique<RulePolicy>();
  if (id == "llm") return std::make_unique<LlmPolicy>(LlmConfig::from_environment());
  throw ValidationError(fmt::format("unknown policy '{}' (expected rules or llm)", id));
}

}  // namespace maadvisor
