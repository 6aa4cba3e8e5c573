#pragma once

#include <algorithm>
#include <cmath>

#include "maadvisor/indicator.hpp"
#include "maadvisor/random.hpp"

namespace maadvisor::testing {

/// Sort over HashJoin(SeqScan orders, Hash(IndexScan lineitem)): five nodes.
inline PlanNode five_node_plan() {
  PlanNode left{PlanOperator::SeqScan, "orders", std::nullopt, 40.0, 1000.0, {}};
  PlanNode right{PlanOperator::IndexScan, "lineitem", "l_id", 20.0, 50.0, {}};
  PlanNode hash{PlanOperator::Hash, std::nullopt, std::nullopt, 20.0, 50.0, {right}};
  PlanNode join{PlanOperator::HashJoin, std::nullopt, std::nullopt, 60.0, 1000.0, {left, hash}};
  return PlanNode{PlanOperator::Sort, "orders", "o_date", 70.0, 1000.0, {join}};
}

/// The same plan after an index on orders.o_id replaced the sequential scan.
inline LabeledPair five_node_pair() {
  auto before = five_node_plan();
  auto after = before;
  after.est_cost = 30.0;
  after.children[0].children[0].op = PlanOperator::IndexScan;
  after.children[0].children[0].column = "o_id";
  after.children[0].children[0].est_cost = 5.0;
  return LabeledPair{{before}, {after}, -1};
}

/// Relative error between analytic and central-difference gradients over a
/// deterministic sample of entries of every tensor. Key biases are skipped:
/// softmax is invariant to them, so their exact gradient is zero.
struct GradientCheck {
  double worst = 0.0;
  double largest_key_bias_grad = 0.0;
  std::size_t checked = 0;
};

inline GradientCheck gradient_check(const LabeledPair& pair, IndicatorParams params, int samples_per_tensor) {
  const auto featurized = featurize_pair(pair);
  auto grad = params.zeros_like();
  pair_loss(featurized, params, &grad);

  std::vector<std::pair<std::string, Eigen::MatrixXd*>> values, grads;
  params.visit([&](const std::string& n, Eigen::MatrixXd& m) { values.emplace_back(n, &m); });
  grad.visit([&](const std::string& n, Eigen::MatrixXd& m) { grads.emplace_back(n, &m); });

  GradientCheck out;
  SplitMix64 rng(17);
  const double h = 1e-5;
  for (std::size_t t = 0; t < values.size(); ++t) {
    auto& m = *values[t].second;
    const auto& g = *grads[t].second;
    const bool key_bias = values[t].first.size() > 3 &&
                          values[t].first.compare(values[t].first.size() - 3, 3, ".bk") == 0;
    if (key_bias) {
      out.largest_key_bias_grad = std::max(out.largest_key_bias_grad, g.cwiseAbs().maxCoeff());
      continue;
    }
    const auto n = static_cast<std::uint64_t>(m.size());
    for (int s = 0; s < samples_per_tensor && s < static_cast<int>(n); ++s) {
      const auto i = static_cast<Eigen::Index>(static_cast<int>(n) <= samples_per_tensor ? s : rng.below(n));
      const double original = m.data()[i];
      m.data()[i] = original + h;
      const double up = pair_loss(featurized, params, nullptr);
      m.data()[i] = original - h;
      const double down = pair_loss(featurized, params, nullptr);
      m.data()[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.data()[i];
      const double rel = std::abs(numeric - analytic) / std::max(1e-8, std::abs(numeric) + std::abs(analytic));
      out.worst = std::max(out.worst, rel);
      ++out.checked;
    }
  }
  return out;
}

inline PlanNode random_plan_tree(SplitMix64& rng, int depth) {
  PlanNode node;
  node.op = static_cast<PlanOperator>(rng.below(kPlanOperatorCount));
  if (rng.uniform() < 0.5) node.table = "t" + std::to_string(rng.below(5));
  if (rng.uniform() < 0.5) node.column = "c" + std::to_string(rng.below(9));
  node.est_cost = rng.uniform(0.0, 1e6);
  node.est_cardinality = rng.uniform(0.0, 1e7);
  if (depth > 0) {
    const auto children = rng.below(3);
    for (std::uint64_t c = 0; c < children; ++c) node.children.push_back(random_plan_tree(rng, depth - 1));
  }
  return node;
}

/// Pre-order [begin, end) row range of every subtree.
inline void subtree_ranges(const PlanNode& node, std::size_t& counter,
                           std::vector<std::pair<std::size_t, std::size_t>>& out) {
  const std::size_t at = counter++;
  out.emplace_back(at, 0);
  for (const auto& c : node.children) subtree_ranges(c, counter, out);
  out[at].second = counter;
}

struct LocalityCheck {
  int checked = 0;
  int violations = 0;
};

/// Rewrites every feature outside a random non-root node's subtree and
/// requires that node's encoding to stay bit-identical. Single-node trees
/// are redrawn so every trial checks something.
inline LocalityCheck mask_locality(const IndicatorParams& params, std::uint64_t seed, int trials) {
  SplitMix64 rng(seed);
  LocalityCheck out;
  while (out.checked < trials) {
    const auto tree = random_plan_tree(rng, 4);
    const auto f = featurize_plan(tree);
    const auto n = static_cast<std::size_t>(f.features.rows());
    if (n < 2) continue;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t counter = 0;
    subtree_ranges(tree, counter, ranges);
    const std::size_t i = 1 + static_cast<std::size_t>(rng.below(n - 1));
    auto g = f;
    for (std::size_t j = 0; j < n; ++j) {
      if (j >= ranges[i].first && j < ranges[i].second) continue;
      for (int k = 0; k < kFeatureDim; ++k) g.features(static_cast<Eigen::Index>(j), k) = rng.uniform(-3.0, 3.0);
    }
    const auto row = static_cast<Eigen::Index>(i);
    if (encode_nodes(g, params).row(row) != encode_nodes(f, params).row(row)) ++out.violations;
    ++out.checked;
  }
  return out;
}

}  // namespace maadvisor::testing
