#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maadvisor/core.hpp"
#include "maadvisor/generator.hpp"
#include "maadvisor/oracle.hpp"
#include "maadvisor/pipeline.hpp"

namespace maadvisor {

enum class PlanOperator {
  SeqScan,
  IndexScan,
  IndexOnlyScan,
  BitmapScan,
  NestLoop,
  HashJoin,
  MergeJoin,
  Sort,
  Aggregate,
  Hash,
  Materialize,
  Other
};
inline constexpr int kPlanOperatorCount = 12;

std::string_view to_string(PlanOperator op);
std::optional<PlanOperator> plan_operator_from_string(std::string_view text);

struct PlanNode {
  PlanOperator op = PlanOperator::Other;
  std::optional<std::string> table;
  std::optional<std::string> column;
  double est_cost = 0.0;
  double est_cardinality = 0.0;
  std::vector<PlanNode> children;

  /// Throws ValidationError on negative estimates or more than two children.
  void validate() const;
  [[nodiscard]] std::size_t size() const;
};

inline constexpr int kNameDim = 16;
inline constexpr int kFeatureDim = kPlanOperatorCount + 2 + 2 * kNameDim;  // 46

/// Maps an identifier to a fixed-size vector. Swappable for a text-embedding
/// service.
class NameEmbedder {
 public:
  virtual ~NameEmbedder() = default;
  [[nodiscard]] virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

/// Signed feature hashing of boundary-marked character trigrams into 16 dims,
/// scaled to unit norm. Empty text maps to zero.
class HashingNameEmbedder final : public NameEmbedder {
 public:
  [[nodiscard]] Eigen::VectorXd embed(std::string_view text) const override;
};

Eigen::VectorXd embed_name(std::string_view text);

/// log(1 + x) / log(1 + 1e12), clamped to [0, 1].
double normalize_log(double x);

struct FeaturizedPlan {
  Eigen::MatrixXd features;  // nodes in pre-order x kFeatureDim
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // mask(i, j): j in subtree(i)
};

FeaturizedPlan featurize_plan(const PlanNode& root, const NameEmbedder& embedder);
FeaturizedPlan featurize_plan(const PlanNode& root);

enum class WorkloadPooling { Mean, Concat };

struct IndicatorDims {
  int model = 64;
  int heads = 4;
  int layers = 2;
  int ffn = 128;
  int hidden = 64;
  WorkloadPooling pooling = WorkloadPooling::Mean;
  int slots = 128;  // query slots for Concat

  [[nodiscard]] int pooled() const { return pooling == WorkloadPooling::Mean ? model : model * slots; }
  void validate() const;
};

/// Dense weights of the encoder and difference head. Vectors are stored as
/// single-column matrices so that all tensors share one type.
struct IndicatorParams {
  struct Layer {
    Eigen::MatrixXd wq, bq, wk, bk, wv, bv, wo, bo;
    Eigen::MatrixXd ln1_gain, ln1_bias;
    Eigen::MatrixXd w1, b1, w2, b2;
    Eigen::MatrixXd ln2_gain, ln2_bias;
  };

  IndicatorDims dims;
  std::uint64_t seed = 0;
  Eigen::MatrixXd w_in, b_in;
  std::vector<Layer> layers;
  Eigen::MatrixXd head_w1, head_b1, head_w2, head_b2;

  /// Xavier-uniform weights, zero biases, unit layer-norm gains.
  static IndicatorParams initialize(const IndicatorDims& dims, std::uint64_t seed);
  /// Same shapes, all zeros.
  [[nodiscard]] IndicatorParams zeros_like() const;

  /// Calls f(name, matrix) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    f("in.w", w_in);
    f("in.b", b_in);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      f(p + "wq", L.wq), f(p + "bq", L.bq), f(p + "wk", L.wk), f(p + "bk", L.bk);
      f(p + "wv", L.wv), f(p + "bv", L.bv), f(p + "wo", L.wo), f(p + "bo", L.bo);
      f(p + "ln1.gain", L.ln1_gain), f(p + "ln1.bias", L.ln1_bias);
      f(p + "w1", L.w1), f(p + "b1", L.b1), f(p + "w2", L.w2), f(p + "b2", L.b2);
      f(p + "ln2.gain", L.ln2_gain), f(p + "ln2.bias", L.ln2_bias);
    }
    f("head.w1", head_w1);
    f("head.b1", head_b1);
    f("head.w2", head_w2);
    f("head.b2", head_b2);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<IndicatorParams*>(this)->visit(
        [&](const std::string& name, Eigen::MatrixXd& m) { f(name, static_cast<const Eigen::MatrixXd&>(m)); });
  }

  [[nodiscard]] std::size_t parameter_count() const;
  void validate() const;  // shapes and finiteness
};

/// {"version":1,"dims":{...},"matrices":{name: [[...]]},"seed"}.
std::string params_to_json(const IndicatorParams& params);
IndicatorParams params_from_json(const std::string& document);

/// Final-layer vectors of every node (rows in pre-order).
Eigen::MatrixXd encode_nodes(const FeaturizedPlan& plan, const IndicatorParams& params);
/// Root row of encode_nodes.
Eigen::VectorXd encode_query(const FeaturizedPlan& plan, const IndicatorParams& params);

Eigen::VectorXd workload_vector(const std::vector<FeaturizedPlan>& plans, const IndicatorParams& params);

/// tanh(MLP(v_after - v_before)).
double score_workload(const std::vector<FeaturizedPlan>& before, const std::vector<FeaturizedPlan>& after,
                      const IndicatorParams& params);
double score_workload(const std::vector<PlanNode>& before, const std::vector<PlanNode>& after,
                      const IndicatorParams& params);

struct LabeledPair {
  std::vector<PlanNode> plans_before;
  std::vector<PlanNode> plans_after;
  int label = 1;  // -1 regression, +1 improvement
};

struct FeaturizedPair {
  std::vector<FeaturizedPlan> before;
  std::vector<FeaturizedPlan> after;
  double label = 1.0;
};

FeaturizedPair featurize_pair(const LabeledPair& pair);

/// Squared error of one pair and, when `grad` is non-null, its gradient
/// accumulated (scaled by `weight`) into `grad`.
double pair_loss(const FeaturizedPair& pair, const IndicatorParams& params, IndicatorParams* grad,
                 double weight = 1.0);

struct TrainOptions {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  IndicatorDims dims;
};

struct TrainResult {
  IndicatorParams params;
  std::vector<double> loss_history;  // mean loss over the training set after each epoch
};

TrainResult train_indicator(const std::vector<LabeledPair>& pairs, const TrainOptions& options);

/// Fraction of pairs whose score sign matches the label (score 0 counts as wrong).
double sign_accuracy(const std::vector<LabeledPair>& pairs, const IndicatorParams& params);

/// Stylized plan of `query` under `config`: one scan per referenced table
/// (IndexScan on the chosen index's leading column when one helps, else
/// SeqScan), joined left-deep (NestLoop when the inner side is an index scan,
/// else HashJoin over a Hash), topped by a Sort for ORDER BY / GROUP BY
/// columns. The root carries the oracle's query cost.
PlanNode synthetic_plan(const Query& query, const IndexConfiguration& config, const CostOracle& oracle);
std::vector<PlanNode> synthetic_plans(const Workload& workload, const IndexConfiguration& config,
                                      const CostOracle& oracle);

struct PairGenerationOptions {
  std::uint64_t seed = 0;
  SyntheticInstanceSpec instance = [] {
    SyntheticInstanceSpec s;
    s.query_count = 5;
    return s;
  }();                             // seed is overridden per pair
  int max_existing = 3;            // indexes already in the configuration
  bool balance = true;             // alternate the requested label
};

/// Pairs over seeded instances: a random existing configuration and one added
/// index; label is the sign of the ground-truth workload cost change.
std::vector<LabeledPair> generate_labeled_pairs(std::size_t count, const PairGenerationOptions& options);

std::string pairs_to_json(const std::vector<LabeledPair>& pairs);
std::vector<LabeledPair> pairs_from_json(const std::string& document);

/// Scores every index of a configuration by comparing plans without it to
/// plans with it. Holds references to `workload` and `oracle`.
IndexScorer make_indicator_scorer(std::shared_ptr<const IndicatorParams> params, const Workload& workload,
                                  const CostOracle& oracle);

}  // namespace maadvisor
