#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maadvisor/core.hpp"

namespace maadvisor {

enum class AgentRole { Planning, Selection, Combination, Revision, Reflection };

std::string_view to_string(AgentRole role);

enum class ActionKind { Selection, Combination, Revision, Stop, Exception };

std::string_view to_string(ActionKind kind);
/// Parses one of the four planning actions; Exception is never parsed.
std::optional<ActionKind> action_from_string(std::string_view text);

struct AgentAction {
  ActionKind kind = ActionKind::Stop;
  std::string raw;  // offending text for Exception, empty otherwise

  static AgentAction exception(std::string raw_text) {
    return AgentAction{ActionKind::Exception, std::move(raw_text)};
  }
  friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

/// "Selection", ..., "Exception(<raw>)".
std::string format_action(const AgentAction& action);

struct Suggestion {
  std::string text;
  /// Subset of {Selection, Combination, Revision}.
  std::vector<ActionKind> discouraged;

  [[nodiscard]] bool discourages(ActionKind kind) const;
  [[nodiscard]] bool empty() const { return text.empty() && discouraged.empty(); }
  friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

// ---------------------------------------------------------------------------
// Structured state handed to every agent alongside the rendered text block.

struct CandidateView {
  std::string name;
  std::string table;
  std::string column;
  OperatorSet operators;
  double est_storage_mb = 0.0;
  double est_utility = 0.0;   // marginal, relative to the current configuration
  double base_utility = 0.0;  // against the empty configuration
  bool rejected = false;      // removed by an earlier Revision
};

struct IndexView {
  Index index;
  std::string key;
  double est_storage_mb = 0.0;
  /// Estimated cost reduction per MB this index still contributes, evaluated
  /// after earlier non-contributing indexes have been set aside.
  double marginal_utility = 0.0;
  std::optional<double> indicator_score;
  std::vector<std::string> remove_rules;      // experience rules with verdict "remove"
  std::vector<std::string> discourage_rules;  // experience rules with verdict "discourage"
  /// Some column's cardinality estimate disagrees with its value distribution.
  bool cardinality_discrepancy = false;
  /// Marginal utility re-evaluated with distribution-implied cardinalities.
  std::optional<double> corrected_marginal_utility;
};

struct CombinationOption {
  std::vector<std::string> merged_keys;
  Index composite;
  /// Estimated workload cost change if applied; the rules merge only when < 0.
  double est_cost_delta = 0.0;
};

struct HistoryEntry {
  AgentAction action;
  bool config_changed = false;
};

struct PolicyAuxiliary {
  Budget budget;
  std::vector<CandidateView> candidates;
  std::vector<IndexView> indexes;
  std::vector<CombinationOption> combinations;
  std::vector<HistoryEntry> history;
  bool combined_since_change = false;
  bool revised_since_change = false;
  Suggestion suggestion;
  double indicator_threshold = -0.5;
  std::vector<ActionKind> available_actions = {ActionKind::Selection, ActionKind::Combination,
                                               ActionKind::Revision, ActionKind::Stop};

  [[nodiscard]] bool available(ActionKind kind) const;
};

nlohmann::json to_json(const PolicyAuxiliary& aux);

struct PolicyRequest {
  AgentRole role = AgentRole::Planning;
  std::string context_text;
  PolicyAuxiliary auxiliary;
};

/// Role-specific decision. Exactly the field matching the role is meaningful.
struct Decision {
  AgentAction action;                // Planning
  std::string selected;              // Selection: "Table.Column"
  std::vector<Index> indexes;        // Combination: composites to build; Revision: indexes to drop
  Suggestion suggestion;             // Reflection
};

struct PolicyResponse {
  AgentRole role = AgentRole::Planning;
  Decision decision;
  std::string raw_text;
  int attempts = 0;
  bool fallback = false;
  /// Parse or transport errors encountered before the final decision.
  std::vector<std::string> errors;
};

class ResponseParseError : public std::runtime_error {
 public:
  enum class Kind { NoJson, Schema, UndefinedAction, NotOffered };
  ResponseParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// First balanced JSON object inside `text`, or nullopt.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

/// Validates `raw_text` against the role schema. Selection names must be
/// offered in `request.auxiliary.candidates`. Throws ResponseParseError.
Decision parse_agent_response(std::string_view raw_text, const PolicyRequest& request);

/// Deterministic decision procedure; a pure function of the request.
PolicyResponse rule_decide(const PolicyRequest& request);

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual PolicyResponse decide(const PolicyRequest& request) = 0;
  [[nodiscard]] virtual std::string id() const = 0;
};

inline PolicyResponse decide(PolicyBackend& backend, const PolicyRequest& request) {
  return backend.decide(request);
}

class RulePolicy final : public PolicyBackend {
 public:
  PolicyResponse decide(const PolicyRequest& request) override { return rule_decide(request); }
  [[nodiscard]] std::string id() const override { return "rules"; }
};

struct LlmConfig {
  std::string endpoint;  // base URL; "/chat/completions" is appended
  std::string api_key;
  std::string model = "gpt-4o";
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  int max_in_flight = 4;

  /// MAADVISOR_LLM_ENDPOINT / _API_KEY / _MODEL.
  static LlmConfig from_environment();
};

/// Fixed system instruction for a role.
std::string_view system_instruction(AgentRole role);

/// Body of one chat-completions request.
nlohmann::json build_chat_request(const LlmConfig& config, const PolicyRequest& request,
                                  const std::vector<std::pair<std::string, std::string>>& retries);

/// Chat-completions backend. Parse failures are retried with the error
/// appended to the conversation; after max_attempts, or on any transport
/// failure, the rule backend decides and the response is marked fallback.
/// An undefined planning action is returned as an Exception action without
/// retrying so the orchestrator can record it.
class LlmPolicy final : public PolicyBackend {
 public:
  explicit LlmPolicy(LlmConfig config);
  ~LlmPolicy() override;

  PolicyResponse decide(const PolicyRequest& request) override;
  [[nodiscard]] std::string id() const override { return "llm"; }

  /// Upstream requests issued so far.
  [[nodiscard]] std::size_t requests_sent() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<PolicyBackend> make_policy(const std::string& id);

}  // namespace maadvisor
