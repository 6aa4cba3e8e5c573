#include "maadvisor/indicator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "maadvisor/candidates.hpp"
#include "maadvisor/random.hpp"

namespace maadvisor {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kPlanOperatorCount> kOperatorNames = {
    "SeqScan", "IndexScan", "IndexOnlyScan", "BitmapScan", "NestLoop", "HashJoin",
    "MergeJoin", "Sort", "Aggregate", "Hash", "Materialize", "Other"};

constexpr double kLayerNormEps = 1e-5;

}  // namespace

std::string_view to_string(PlanOperator op) { return kOperatorNames[static_cast<int>(op)]; }

std::optional<PlanOperator> plan_operator_from_string(std::string_view text) {
  for (int i = 0; i < kPlanOperatorCount; ++i) {
    if (kOperatorNames[i] == text) return static_cast<PlanOperator>(i);
  }
  return std::nullopt;
}

void PlanNode::validate() const {
  if (!(est_cost >= 0.0) || !(est_cardinality >= 0.0)) {
    throw ValidationError("plan node estimates must be non-negative");
  }
  if (children.size() > 2) throw ValidationError("plan nodes have at most two children");
  for (const auto& c : children) c.validate();
}

std::size_t PlanNode::size() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.size();
  return n;
}

// ---------------------------------------------------------------------------
// Featurization

namespace {

std::uint64_t fnv1a(std::string_view text, std::uint64_t salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (salt * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

VectorXd HashingNameEmbedder::embed(std::string_view text) const {
  VectorXd v = VectorXd::Zero(kNameDim);
  if (text.empty()) return v;
  const std::string marked = "^" + std::string(text) + "$";
  for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
    const auto gram = std::string_view(marked).substr(i, 3);
    for (int k = 0; k < kNameDim; ++k) {
      v[k] += (fnv1a(gram, static_cast<std::uint64_t>(k)) >> 63) != 0U ? 1.0 : -1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

VectorXd embed_name(std::string_view text) { return HashingNameEmbedder{}.embed(text); }

double normalize_log(double x) {
  static const double denom = std::log1p(1e12);
  if (!(x > 0.0)) return 0.0;
  return std::clamp(std::log1p(x) / denom, 0.0, 1.0);
}

FeaturizedPlan featurize_plan(const PlanNode& root, const NameEmbedder& embedder) {
  root.validate();
  std::vector<const PlanNode*> order;
  std::vector<std::size_t> subtree_end;  // one past the last pre-order index of each subtree
  auto walk = [&](auto&& self, const PlanNode& node) -> void {
    const std::size_t at = order.size();
    order.push_back(&node);
    subtree_end.push_back(0);
    for (const auto& c : node.children) self(self, c);
    subtree_end[at] = order.size();
  };
  walk(walk, root);

  const auto n = static_cast<Eigen::Index>(order.size());
  FeaturizedPlan out;
  out.features = MatrixXd::Zero(n, kFeatureDim);
  out.mask.setConstant(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& node = *order[static_cast<std::size_t>(i)];
    out.features(i, static_cast<int>(node.op)) = 1.0;
    out.features(i, kPlanOperatorCount) = normalize_log(node.est_cost);
    out.features(i, kPlanOperatorCount + 1) = normalize_log(node.est_cardinality);
    if (node.table) {
      out.features.block(i, kPlanOperatorCount + 2, 1, kNameDim) = embedder.embed(*node.table).transpose();
    }
    if (node.column) {
      out.features.block(i, kPlanOperatorCount + 2 + kNameDim, 1, kNameDim) =
          embedder.embed(*node.column).transpose();
    }
    for (auto j = static_cast<std::size_t>(i); j < subtree_end[static_cast<std::size_t>(i)]; ++j) {
      out.mask(i, static_cast<Eigen::Index>(j)) = true;
    }
  }
  return out;
}

FeaturizedPlan featurize_plan(const PlanNode& root) { return featurize_plan(root, HashingNameEmbedder{}); }

// ---------------------------------------------------------------------------
// Parameters

void IndicatorDims::validate() const {
  if (model < 1 || heads < 1 || model % heads != 0) {
    throw ValidationError("model dim must be a positive multiple of the head count");
  }
  if (layers < 0 || ffn < 1 || hidden < 1) throw ValidationError("invalid indicator dims");
  if (pooling == WorkloadPooling::Concat && slots < 1) throw ValidationError("concat pooling needs slots");
}

IndicatorParams IndicatorParams::initialize(const IndicatorDims& dims, std::uint64_t seed) {
  dims.validate();
  SplitMix64 rng(derive_seed(seed, 0x1d1c));
  auto xavier = [&](int rows, int cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
    }
    return m;
  };
  auto zero = [](int rows) -> MatrixXd { return MatrixXd::Zero(rows, 1); };
  auto one = [](int rows) -> MatrixXd { return MatrixXd::Ones(rows, 1); };

  IndicatorParams p;
  p.dims = dims;
  p.seed = seed;
  const int d = dims.model;
  p.w_in = xavier(d, kFeatureDim);
  p.b_in = zero(d);
  for (int l = 0; l < dims.layers; ++l) {
    Layer L;
    L.wq = xavier(d, d), L.bq = zero(d);
    L.wk = xavier(d, d), L.bk = zero(d);
    L.wv = xavier(d, d), L.bv = zero(d);
    L.wo = xavier(d, d), L.bo = zero(d);
    L.ln1_gain = one(d), L.ln1_bias = zero(d);
    L.w1 = xavier(dims.ffn, d), L.b1 = zero(dims.ffn);
    L.w2 = xavier(d, dims.ffn), L.b2 = zero(d);
    L.ln2_gain = one(d), L.ln2_bias = zero(d);
    p.layers.push_back(std::move(L));
  }
  p.head_w1 = xavier(dims.hidden, dims.pooled());
  p.head_b1 = zero(dims.hidden);
  p.head_w2 = xavier(1, dims.hidden);
  p.head_b2 = zero(1);
  return p;
}

IndicatorParams IndicatorParams::zeros_like() const {
  IndicatorParams z = *this;
  z.visit([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

std::size_t IndicatorParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void IndicatorParams::validate() const {
  dims.validate();
  const auto expected = initialize(dims, 0);
  if (static_cast<int>(layers.size()) != dims.layers) throw ValidationError("layer count mismatch");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  expected.visit([&](const std::string&, const MatrixXd& m) { shapes.emplace_back(m.rows(), m.cols()); });
  std::size_t i = 0;
  visit([&](const std::string& name, const MatrixXd& m) {
    if (m.rows() != shapes[i].first || m.cols() != shapes[i].second) {
      throw ValidationError(fmt::format("tensor {} has shape {}x{}, expected {}x{}", name, m.rows(),
                                        m.cols(), shapes[i].first, shapes[i].second));
    }
    if (!m.allFinite()) throw ValidationError(fmt::format("tensor {} has non-finite values", name));
    ++i;
  });
}

std::string params_to_json(const IndicatorParams& params) {
  nlohmann::ordered_json matrices = nlohmann::ordered_json::object();
  params.visit([&](const std::string& name, const MatrixXd& m) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
      rows.push_back(row);
    }
    matrices[name] = std::move(rows);
  });
  const auto& d = params.dims;
  nlohmann::ordered_json doc{
      {"version", 1},
      {"dims",
       {{"input", kFeatureDim},
        {"model", d.model},
        {"heads", d.heads},
        {"layers", d.layers},
        {"ffn", d.ffn},
        {"hidden", d.hidden},
        {"pooling", d.pooling == WorkloadPooling::Mean ? "mean" : "concat"},
        {"slots", d.slots}}},
      {"seed", params.seed},
      {"matrices", std::move(matrices)}};
  return doc.dump() + "\n";
}

IndicatorParams params_from_json(const std::string& document) {
  try {
    const auto doc = json::parse(document);
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported params version");
    const auto& jd = doc.at("dims");
    if (jd.at("input").get<int>() != kFeatureDim) throw ValidationError("params expect another feature size");
    IndicatorDims dims;
    dims.model = jd.at("model").get<int>();
    dims.heads = jd.at("heads").get<int>();
    dims.layers = jd.at("layers").get<int>();
    dims.ffn = jd.at("ffn").get<int>();
    dims.hidden = jd.at("hidden").get<int>();
    const auto pooling = jd.at("pooling").get<std::string>();
    if (pooling != "mean" && pooling != "concat") throw ValidationError("unknown pooling " + pooling);
    dims.pooling = pooling == "mean" ? WorkloadPooling::Mean : WorkloadPooling::Concat;
    dims.slots = jd.at("slots").get<int>();

    auto params = IndicatorParams::initialize(dims, doc.at("seed").get<std::uint64_t>());
    const auto& matrices = doc.at("matrices");
    params.visit([&](const std::string& name, MatrixXd& m) {
      const auto& rows = matrices.at(name);
      if (static_cast<Eigen::Index>(rows.size()) != m.rows()) {
        throw ValidationError(fmt::format("tensor {}: wrong row count", name));
      }
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
          throw ValidationError(fmt::format("tensor {}: wrong column count", name));
        }
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    });
    if (matrices.size() != [&] {
          std::size_t n = 0;
          params.visit([&](const std::string&, const MatrixXd&) { ++n; });
          return n;
        }()) {
      throw ValidationError("params file has unexpected tensors");
    }
    params.validate();
    return params;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("indicator params: {}", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

MatrixXd affine(const MatrixXd& x, const MatrixXd& w, const MatrixXd& b) {
  MatrixXd y = x * w.transpose();
  y.rowwise() += b.col(0).transpose();
  return y;
}

struct LayerNormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

MatrixXd layer_norm(const MatrixXd& r, const MatrixXd& gain, const MatrixXd& bias, LayerNormCache& cache) {
  const VectorXd mean = r.rowwise().mean();
  MatrixXd centered = r.colwise() - mean;
  const VectorXd var = centered.array().square().rowwise().mean();
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = centered.array().colwise() * cache.inv_std.array();
  MatrixXd y = cache.xhat.array().rowwise() * gain.col(0).transpose().array();
  y.rowwise() += bias.col(0).transpose();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LayerNormCache& cache, const MatrixXd& gain,
                             MatrixXd& dgain, MatrixXd& dbias) {
  dgain.col(0) += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  dbias.col(0) += dy.colwise().sum().transpose();
  const MatrixXd dxhat = dy.array().rowwise() * gain.col(0).transpose().array();
  const VectorXd mean_d = dxhat.rowwise().mean();
  const VectorXd mean_dx = (dxhat.array() * cache.xhat.array()).rowwise().mean();
  MatrixXd dr = dxhat;
  dr.colwise() -= mean_d;
  dr -= (cache.xhat.array().colwise() * mean_dx.array()).matrix();
  return dr.array().colwise() * cache.inv_std.array();
}

struct LayerCache {
  MatrixXd in, q, k, v, o, h1, u, g;
  std::vector<MatrixXd> attn;
  LayerNormCache ln1, ln2;
};

struct EncodeCache {
  std::vector<LayerCache> layers;
};

MatrixXd encode_forward(const FeaturizedPlan& plan, const IndicatorParams& p, EncodeCache* cache) {
  const auto n = plan.features.rows();
  if (plan.features.cols() != kFeatureDim || plan.mask.rows() != n || plan.mask.cols() != n || n == 0) {
    throw ValidationError("featurized plan has inconsistent dimensions");
  }
  const int d = p.dims.model;
  const int heads = p.dims.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd h = affine(plan.features, p.w_in, p.b_in);
  if (cache) cache->layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    c.in = h;
    c.q = affine(h, L.wq, L.bq);
    c.k = affine(h, L.wk, L.bk);
    c.v = affine(h, L.wv, L.bv);
    c.o.resize(n, d);
    c.attn.assign(static_cast<std::size_t>(heads), MatrixXd());
    for (int hd = 0; hd < heads; ++hd) {
      const auto qh = c.q.middleCols(hd * dh, dh);
      const auto kh = c.k.middleCols(hd * dh, dh);
      MatrixXd s = (qh * kh.transpose()) * scale;
      MatrixXd a = MatrixXd::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
          if (plan.mask(i, j)) mx = std::max(mx, s(i, j));
        }
        double sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (plan.mask(i, j)) {
            a(i, j) = std::exp(s(i, j) - mx);
            sum += a(i, j);
          }
        }
        a.row(i) /= sum;
      }
      c.o.middleCols(hd * dh, dh) = a * c.v.middleCols(hd * dh, dh);
      c.attn[static_cast<std::size_t>(hd)] = std::move(a);
    }
    const MatrixXd r1 = h + affine(c.o, L.wo, L.bo);
    c.h1 = layer_norm(r1, L.ln1_gain, L.ln1_bias, c.ln1);
    c.u = affine(c.h1, L.w1, L.b1);
    c.g = c.u.unaryExpr([](double x) { return gelu(x); });
    const MatrixXd r2 = c.h1 + affine(c.g, L.w2, L.b2);
    h = layer_norm(r2, L.ln2_gain, L.ln2_bias, c.ln2);
  }
  return h;
}

void encode_backward(const FeaturizedPlan& plan, const IndicatorParams& p, const EncodeCache& cache,
                     MatrixXd dh, IndicatorParams& grad) {
  const int d = p.dims.model;
  const int heads = p.dims.heads;
  const int dh_size = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_size));
  const auto n = plan.features.rows();

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    auto& G = grad.layers[li];
    const auto& c = cache.layers[li];

    const MatrixXd dr2 = layer_norm_backward(dh, c.ln2, L.ln2_gain, G.ln2_gain, G.ln2_bias);
    G.w2 += dr2.transpose() * c.g;
    G.b2.col(0) += dr2.colwise().sum().transpose();
    const MatrixXd dg = dr2 * L.w2;
    const MatrixXd du = dg.array() * c.u.unaryExpr([](double x) { return gelu_grad(x); }).array();
    G.w1 += du.transpose() * c.h1;
    G.b1.col(0) += du.colwise().sum().transpose();
    const MatrixXd dh1 = dr2 + du * L.w1;

    const MatrixXd dr1 = layer_norm_backward(dh1, c.ln1, L.ln1_gain, G.ln1_gain, G.ln1_bias);
    G.wo += dr1.transpose() * c.o;
    G.bo.col(0) += dr1.colwise().sum().transpose();
    const MatrixXd d_o = dr1 * L.wo;

    MatrixXd dq(n, d), dk(n, d), dv(n, d);
    for (int hd = 0; hd < heads; ++hd) {
      const auto& a = c.attn[static_cast<std::size_t>(hd)];
      const auto cols = [&](const MatrixXd& m) { return m.middleCols(hd * dh_size, dh_size); };
      const MatrixXd doh = cols(d_o);
      const MatrixXd da = doh * cols(c.v).transpose();
      dv.middleCols(hd * dh_size, dh_size) = a.transpose() * doh;
      const VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
      const MatrixXd ds = a.array() * (da.colwise() - row_dot).array();
      dq.middleCols(hd * dh_size, dh_size) = ds * cols(c.k) * scale;
      dk.middleCols(hd * dh_size, dh_size) = ds.transpose() * cols(c.q) * scale;
    }
    G.wq += dq.transpose() * c.in;
    G.bq.col(0) += dq.colwise().sum().transpose();
    G.wk += dk.transpose() * c.in;
    G.bk.col(0) += dk.colwise().sum().transpose();
    G.wv += dv.transpose() * c.in;
    G.bv.col(0) += dv.colwise().sum().transpose();
    dh = dr1 + dq * L.wq + dk * L.wk + dv * L.wv;
  }
  grad.w_in += dh.transpose() * plan.features;
  grad.b_in.col(0) += dh.colwise().sum().transpose();
}

void check_plans(const std::vector<FeaturizedPlan>& plans, const IndicatorParams& params) {
  if (plans.empty()) throw ValidationError("workload has no plans");
  if (params.dims.pooling == WorkloadPooling::Concat &&
      static_cast<int>(plans.size()) > params.dims.slots) {
    throw ValidationError(fmt::format("{} queries exceed {} concat slots", plans.size(), params.dims.slots));
  }
}

VectorXd pool(const std::vector<VectorXd>& roots, const IndicatorParams& params) {
  const int d = params.dims.model;
  if (params.dims.pooling == WorkloadPooling::Mean) {
    VectorXd v = VectorXd::Zero(d);
    for (const auto& r : roots) v += r;
    return v / static_cast<double>(roots.size());
  }
  VectorXd v = VectorXd::Zero(params.dims.pooled());
  for (std::size_t q = 0; q < roots.size(); ++q) v.segment(static_cast<Eigen::Index>(q) * d, d) = roots[q];
  return v;
}

/// Gradient reaching query q's root vector from d(loss)/d(pooled).
VectorXd unpool(const VectorXd& dpooled, std::size_t q, std::size_t count, const IndicatorParams& params) {
  const int d = params.dims.model;
  if (params.dims.pooling == WorkloadPooling::Mean) return dpooled / static_cast<double>(count);
  return dpooled.segment(static_cast<Eigen::Index>(q) * d, d);
}

}  // namespace

MatrixXd encode_nodes(const FeaturizedPlan& plan, const IndicatorParams& params) {
  return encode_forward(plan, params, nullptr);
}

VectorXd encode_query(const FeaturizedPlan& plan, const IndicatorParams& params) {
  return encode_nodes(plan, params).row(0).transpose();
}

VectorXd workload_vector(const std::vector<FeaturizedPlan>& plans, const IndicatorParams& params) {
  check_plans(plans, params);
  std::vector<VectorXd> roots;
  for (const auto& p : plans) roots.push_back(encode_query(p, params));
  return pool(roots, params);
}

namespace {

double head_forward(const VectorXd& diff, const IndicatorParams& p, VectorXd* hidden) {
  VectorXd hdn = (p.head_w1 * diff + p.head_b1.col(0)).array().tanh();
  const double out = std::tanh((p.head_w2 * hdn)(0, 0) + p.head_b2(0, 0));
  if (hidden) *hidden = std::move(hdn);
  return out;
}

}  // namespace

double score_workload(const std::vector<FeaturizedPlan>& before, const std::vector<FeaturizedPlan>& after,
                      const IndicatorParams& params) {
  if (before.size() != after.size()) throw ValidationError("before and after query counts differ");
  return head_forward(workload_vector(after, params) - workload_vector(before, params), params, nullptr);
}

double score_workload(const std::vector<PlanNode>& before, const std::vector<PlanNode>& after,
                      const IndicatorParams& params) {
  std::vector<FeaturizedPlan> b, a;
  for (const auto& p : before) b.push_back(featurize_plan(p));
  for (const auto& p : after) a.push_back(featurize_plan(p));
  return score_workload(b, a, params);
}

FeaturizedPair featurize_pair(const LabeledPair& pair) {
  if (pair.plans_before.size() != pair.plans_after.size()) {
    throw ValidationError("before and after query counts differ");
  }
  if (pair.label != 1 && pair.label != -1) throw ValidationError("labels must be -1 or +1");
  FeaturizedPair out;
  for (const auto& p : pair.plans_before) out.before.push_back(featurize_plan(p));
  for (const auto& p : pair.plans_after) out.after.push_back(featurize_plan(p));
  out.label = pair.label;
  return out;
}

double pair_loss(const FeaturizedPair& pair, const IndicatorParams& params, IndicatorParams* grad,
                 double weight) {
  if (pair.before.size() != pair.after.size()) throw ValidationError("before and after query counts differ");
  check_plans(pair.before, params);

  const std::size_t count = pair.before.size();
  std::vector<EncodeCache> caches(grad ? 2 * count : 0);
  std::vector<VectorXd> roots_before, roots_after;
  for (std::size_t q = 0; q < count; ++q) {
    roots_before.push_back(
        encode_forward(pair.before[q], params, grad ? &caches[q] : nullptr).row(0).transpose());
    roots_after.push_back(
        encode_forward(pair.after[q], params, grad ? &caches[count + q] : nullptr).row(0).transpose());
  }
  const VectorXd diff = pool(roots_after, params) - pool(roots_before, params);
  VectorXd hidden;
  const double s = head_forward(diff, params, &hidden);
  const double loss = (s - pair.label) * (s - pair.label);
  if (!grad) return loss;

  const double d_out = weight * 2.0 * (s - pair.label) * (1.0 - s * s);
  grad->head_w2 += d_out * hidden.transpose();
  grad->head_b2(0, 0) += d_out;
  const VectorXd d_hidden = params.head_w2.row(0).transpose() * d_out;
  const VectorXd d_pre = d_hidden.array() * (1.0 - hidden.array().square());
  grad->head_w1 += d_pre * diff.transpose();
  grad->head_b1.col(0) += d_pre;
  const VectorXd d_diff = params.head_w1.transpose() * d_pre;

  const int d = params.dims.model;
  for (std::size_t q = 0; q < count; ++q) {
    const VectorXd d_root = unpool(d_diff, q, count, params);
    for (int side = 0; side < 2; ++side) {
      const auto& plan = side == 0 ? pair.after[q] : pair.before[q];
      MatrixXd dh = MatrixXd::Zero(plan.features.rows(), d);
      dh.row(0) = (side == 0 ? d_root : VectorXd(-d_root)).transpose();
      encode_backward(plan, params, caches[side == 0 ? count + q : q], std::move(dh), *grad);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<MatrixXd*> tensors(IndicatorParams& p) {
  std::vector<MatrixXd*> out;
  p.visit([&](const std::string&, MatrixXd& m) { out.push_back(&m); });
  return out;
}

}  // namespace

TrainResult train_indicator(const std::vector<LabeledPair>& pairs, const TrainOptions& options) {
  if (pairs.empty()) throw ValidationError("training set is empty");
  if (options.epochs < 0 || options.batch_size < 1 || !(options.learning_rate > 0.0)) {
    throw ValidationError("invalid training hyperparameters");
  }
  bool has_pos = false, has_neg = false;
  std::vector<FeaturizedPair> data;
  data.reserve(pairs.size());
  for (const auto& p : pairs) {
    data.push_back(featurize_pair(p));
    (p.label > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw ValidationError("training needs both labels");

  TrainResult result;
  result.params = IndicatorParams::initialize(options.dims, options.seed);
  auto& params = result.params;
  auto m = params.zeros_like();
  auto v = params.zeros_like();
  const auto p_t = tensors(params);
  const auto m_t = tensors(m);
  const auto v_t = tensors(v);

  SplitMix64 rng(derive_seed(options.seed, 0x7a1));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  auto grad = params.zeros_like();
  const auto g_t = tensors(grad);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      for (auto* g : g_t) g->setZero();
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) pair_loss(data[order[i]], params, &grad, w);
      ++step;
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < p_t.size(); ++t) {
        auto& mt = *m_t[t];
        auto& vt = *v_t[t];
        const auto& gt = *g_t[t];
        mt = options.beta1 * mt + (1.0 - options.beta1) * gt;
        vt = options.beta2 * vt + (1.0 - options.beta2) * gt.cwiseAbs2();
        p_t[t]->array() -= options.learning_rate * (mt.array() / c1) /
                           ((vt.array() / c2).sqrt() + options.epsilon);
      }
    }
    double total = 0.0;
    for (const auto& pair : data) total += pair_loss(pair, params, nullptr);
    result.loss_history.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

double sign_accuracy(const std::vector<LabeledPair>& pairs, const IndicatorParams& params) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    const double s = score_workload(p.plans_before, p.plans_after, params);
    if ((s > 0.0 && p.label > 0) || (s < 0.0 && p.label < 0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Stylized plans

PlanNode synthetic_plan(const Query& query, const IndexConfiguration& config, const CostOracle& oracle) {
  const IndexConfiguration empty;
  const double base = oracle.estimate_query_cost(query, empty);
  std::vector<std::string> tables;
  for (const auto& u : query.usages) {
    if (std::find(tables.begin(), tables.end(), u.table) == tables.end()) tables.push_back(u.table);
  }
  if (tables.empty()) {
    PlanNode only;
    only.op = PlanOperator::Other;
    only.est_cost = base;
    return only;
  }

  std::vector<PlanNode> scans;
  for (const auto& table : tables) {
    const auto* meta = oracle.schema().find_table(table);
    const double rows = meta ? static_cast<double>(meta->row_count) : 1.0;
    const Index* chosen = nullptr;
    double best = base;
    for (const auto& index : config.indexes) {
      if (index.table != table || index.columns.empty()) continue;
      const bool leads = std::any_of(query.usages.begin(), query.usages.end(), [&](const ColumnUsage& u) {
        return u.table == table && u.column == index.columns[0];
      });
      if (!leads) continue;
      IndexConfiguration alone;
      alone.indexes.push_back(index);
      const double cost = oracle.estimate_query_cost(query, alone);
      if (cost < best) {
        best = cost;
        chosen = &index;
      }
    }
    const double factor = base > 0.0 ? best / base : 1.0;
    PlanNode scan;
    scan.op = chosen ? PlanOperator::IndexScan : PlanOperator::SeqScan;
    scan.table = table;
    if (chosen) scan.column = chosen->columns[0];
    scan.est_cost = base / static_cast<double>(tables.size()) * factor;
    scan.est_cardinality = std::max(1.0, rows * factor);
    scans.push_back(std::move(scan));
  }

  PlanNode top = std::move(scans[0]);
  for (std::size_t i = 1; i < scans.size(); ++i) {
    PlanNode join;
    const bool index_inner = scans[i].op == PlanOperator::IndexScan;
    join.op = index_inner ? PlanOperator::NestLoop : PlanOperator::HashJoin;
    join.est_cost = top.est_cost + scans[i].est_cost;
    join.est_cardinality = std::max(top.est_cardinality, scans[i].est_cardinality);
    PlanNode inner = std::move(scans[i]);
    if (!index_inner) {
      PlanNode hash;
      hash.op = PlanOperator::Hash;
      hash.est_cost = inner.est_cost;
      hash.est_cardinality = inner.est_cardinality;
      hash.children.push_back(std::move(inner));
      inner = std::move(hash);
    }
    join.children.push_back(std::move(top));
    join.children.push_back(std::move(inner));
    top = std::move(join);
  }
  const auto sort = std::find_if(query.usages.begin(), query.usages.end(),
                                 [](const ColumnUsage& u) { return u.op == OperatorClass::SortGroup; });
  if (sort != query.usages.end()) {
    PlanNode node;
    node.op = PlanOperator::Sort;
    node.table = sort->table;
    node.column = sort->column;
    node.est_cardinality = top.est_cardinality;
    node.children.push_back(std::move(top));
    top = std::move(node);
  }
  top.est_cost = oracle.estimate_query_cost(query, config);
  return top;
}

std::vector<PlanNode> synthetic_plans(const Workload& workload, const IndexConfiguration& config,
                                      const CostOracle& oracle) {
  std::vector<PlanNode> out;
  for (const auto& q : workload.queries) out.push_back(synthetic_plan(q, config, oracle));
  return out;
}

std::vector<LabeledPair> generate_labeled_pairs(std::size_t count, const PairGenerationOptions& options) {
  options.instance.validate();
  SplitMix64 rng(derive_seed(options.seed, 0x9a17));
  std::vector<LabeledPair> out;
  int wanted = 1;
  const std::size_t max_attempts = 200 * count + 1000;
  for (std::size_t attempt = 0; out.size() < count && attempt < max_attempts; ++attempt) {
    auto spec = options.instance;
    spec.seed = derive_seed(options.seed, attempt + 1);
    const auto instance = generate_instance(spec);
    const SyntheticOracle oracle(instance.schema);
    const auto candidates = merge_candidates(build_query_infos(instance.workload, oracle));
    if (candidates.empty()) continue;

    IndexConfiguration before;
    const auto existing = rng.range(0, options.max_existing);
    for (std::int64_t i = 0; i < existing; ++i) {
      const auto idx = candidates[rng.below(candidates.size())].as_index();
      if (!before.contains(idx)) before.indexes.push_back(idx);
    }
    // The added index: a single column, or a same-table pair.
    const auto& first = candidates[rng.below(candidates.size())];
    Index added = first.as_index();
    if (rng.uniform() < 0.3) {
      const auto& second = candidates[rng.below(candidates.size())];
      if (second.table == first.table && second.column != first.column) added.columns.push_back(second.column);
    }
    if (before.contains(added)) continue;
    IndexConfiguration after = before;
    after.indexes.push_back(added);

    const double delta = oracle.true_cost(instance.workload, after) - oracle.true_cost(instance.workload, before);
    if (std::abs(delta) < 1e-9) continue;
    const int label = delta < 0.0 ? 1 : -1;
    if (options.balance && label != wanted) continue;
    wanted = -wanted;
    out.push_back({synthetic_plans(instance.workload, before, oracle),
                   synthetic_plans(instance.workload, after, oracle), label});
  }
  if (out.size() < count) throw ValidationError("could not generate the requested number of pairs");
  return out;
}

namespace {

json plan_to_json(const PlanNode& node) {
  json j{{"op", to_string(node.op)}, {"cost", node.est_cost}, {"card", node.est_cardinality}};
  if (node.table) j["table"] = *node.table;
  if (node.column) j["column"] = *node.column;
  if (!node.children.empty()) {
    j["children"] = json::array();
    for (const auto& c : node.children) j["children"].push_back(plan_to_json(c));
  }
  return j;
}

PlanNode plan_from_json(const json& j) {
  PlanNode node;
  const auto op = plan_operator_from_string(j.at("op").get<std::string>());
  if (!op) throw ValidationError("unknown plan operator " + j.at("op").dump());
  node.op = *op;
  node.est_cost = j.at("cost").get<double>();
  node.est_cardinality = j.at("card").get<double>();
  if (j.contains("table")) node.table = j["table"].get<std::string>();
  if (j.contains("column")) node.column = j["column"].get<std::string>();
  if (j.contains("children")) {
    for (const auto& c : j["children"]) node.children.push_back(plan_from_json(c));
  }
  node.validate();
  return node;
}

}  // namespace

std::string pairs_to_json(const std::vector<LabeledPair>& pairs) {
  json doc{{"pairs", json::array()}};
  for (const auto& p : pairs) {
    json item{{"label", p.label}, {"before", json::array()}, {"after", json::array()}};
    for (const auto& n : p.plans_before) item["before"].push_back(plan_to_json(n));
    for (const auto& n : p.plans_after) item["after"].push_back(plan_to_json(n));
    doc["pairs"].push_back(std::move(item));
  }
  return doc.dump() + "\n";
}

std::vector<LabeledPair> pairs_from_json(const std::string& document) {
  try {
    const auto doc = json::parse(document);
    std::vector<LabeledPair> out;
    for (const auto& item : doc.at("pairs")) {
      LabeledPair p;
      p.label = item.at("label").get<int>();
      for (const auto& n : item.at("before")) p.plans_before.push_back(plan_from_json(n));
      for (const auto& n : item.at("after")) p.plans_after.push_back(plan_from_json(n));
      if (p.label != 1 && p.label != -1) throw ValidationError("labels must be -1 or +1");
      if (p.plans_before.size() != p.plans_after.size()) {
        throw ValidationError("before and after query counts differ");
      }
      out.push_back(std::move(p));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("labeled pairs: {}", e.what()));
  }
}

IndexScorer make_indicator_scorer(std::shared_ptr<const IndicatorParams> params, const Workload& workload,
                                  const CostOracle& oracle) {
  return [params = std::move(params), &workload, &oracle](const std::vector<Index>& indexes) {
    IndexConfiguration all;
    all.indexes = indexes;
    const auto after = synthetic_plans(workload, all, oracle);
    std::vector<double> scores;
    for (std::size_t i = 0; i < indexes.size(); ++i) {
      IndexConfiguration without = all;
      without.indexes.erase(without.indexes.begin() + static_cast<std::ptrdiff_t>(i));
      scores.push_back(score_workload(synthetic_plans(workload, without, oracle), after, *params));
    }
    return scores;
  };
}

}  // namespace maadvisor
