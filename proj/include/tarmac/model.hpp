#pragma once

// Four regressor families behind one fit/predict contract:
//   linear      ridge regression, closed form, unpenalized intercept
//   svr_linear  linear epsilon-SVR, seeded SGD on the primal
//   mlp         one tanh hidden layer, full-batch gradient descent
//   gbdt        histogram gradient-boosted regression trees, squared loss

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tarmac/error.hpp"
#include "tarmac/random.hpp"

namespace tarmac {

enum class ModelFamily { linear, svr_linear, mlp, gbdt };

inline constexpr std::array<ModelFamily, 4> kModelFamilies = {ModelFamily::linear, ModelFamily::svr_linear,
                                                              ModelFamily::mlp, ModelFamily::gbdt};

inline std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::linear: return "linear";
    case ModelFamily::svr_linear: return "svr_linear";
    case ModelFamily::mlp: return "mlp";
    case ModelFamily::gbdt: return "gbdt";
  }
  return "";
}

inline ModelFamily model_family_from_string(std::string_view text) {
  for (ModelFamily f : kModelFamilies) {
    if (to_string(f) == text) return f;
  }
  throw ConfigError("unknown model family '" + std::string(text) + "'");
}

struct LinearSpec {
  double lambda = 1e-6;
};

struct SvrSpec {
  double epsilon = 1.0;  // minutes
  double c = 1.0;
  int epochs = 200;
  double learning_rate = 0.1;  // initial step, decays as 1/sqrt(epoch + 1)
};

struct MlpSpec {
  int hidden = 32;
  double learning_rate = 0.01;
  int epochs = 500;
  double init_scale = 0.5;  // weights start uniform in [-init_scale, init_scale]
};

struct GbdtSpec {
  int n_trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  int min_leaf = 20;
  int n_bins = 64;
};

struct ModelSpec {
  ModelFamily family = ModelFamily::gbdt;
  LinearSpec linear;
  SvrSpec svr;
  MlpSpec mlp;
  GbdtSpec gbdt;
  std::uint64_t seed = 0;

  void validate() const {
    switch (family) {
      case ModelFamily::linear:
        if (!(linear.lambda >= 0.0)) throw ConfigError("linear: lambda must be >= 0");
        break;
      case ModelFamily::svr_linear:
        if (!(svr.epsilon >= 0.0)) throw ConfigError("svr_linear: epsilon must be >= 0");
        if (!(svr.c > 0.0)) throw ConfigError("svr_linear: C must be > 0");
        if (svr.epochs < 0) throw ConfigError("svr_linear: epochs must be >= 0");
        if (!(svr.learning_rate > 0.0)) throw ConfigError("svr_linear: learning_rate must be > 0");
        break;
      case ModelFamily::mlp:
        if (mlp.hidden < 1) throw ConfigError("mlp: hidden must be >= 1");
        if (mlp.epochs < 0) throw ConfigError("mlp: epochs must be >= 0");
        if (!(mlp.learning_rate > 0.0)) throw ConfigError("mlp: learning_rate must be > 0");
        if (!(mlp.init_scale >= 0.0)) throw ConfigError("mlp: init_scale must be >= 0");
        break;
      case ModelFamily::gbdt:
        if (gbdt.n_trees < 1) throw ConfigError("gbdt: n_trees must be >= 1");
        if (gbdt.max_depth < 1) throw ConfigError("gbdt: max_depth must be >= 1");
        if (!(gbdt.learning_rate >= 0.0 && gbdt.learning_rate <= 1.0)) {
          throw ConfigError("gbdt: learning_rate must be in [0, 1]");
        }
        if (gbdt.min_leaf < 1) throw ConfigError("gbdt: min_leaf must be >= 1");
        if (gbdt.n_bins < 2 || gbdt.n_bins > 65535) throw ConfigError("gbdt: n_bins must be in [2, 65535]");
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// Learned parameters

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean();
    s.scale = Eigen::VectorXd::Ones(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt((x.col(j).array() - s.mean(j)).square().sum() / n);
      if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) s.scale(j) = sd;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

struct LinearParams {
  Eigen::VectorXd weights;
  double intercept = 0.0;
};

/// Weights act on standardized inputs.
struct SvrParams {
  Standardizer inputs;
  Eigen::VectorXd weights;
  double intercept = 0.0;
};

struct MlpParams {
  Standardizer inputs;
  double target_mean = 0.0;
  double target_scale = 1.0;
  Eigen::MatrixXd w1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by the learning rate

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  template <typename Row>
  double predict(const Row& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const TreeNode& n = nodes[static_cast<std::size_t>(i)];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct GbdtParams {
  double base = 0.0;
  std::vector<RegressionTree> trees;
  std::vector<double> train_rmse_by_round;  // entry 0 is the mean-only model
};

struct ModelArtifact {
  ModelSpec spec;
  std::variant<LinearParams, SvrParams, MlpParams, GbdtParams> params;
  std::vector<std::string> columns;
  std::size_t n_rows = 0;
  double train_rmse = 0.0;

  ModelFamily family() const { return spec.family; }
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> default_columns(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

inline void check_training_input(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const std::vector<std::string>& columns, Eigen::Index min_rows) {
  if (x.rows() != y.size()) throw ContractViolation("fit: X has " + std::to_string(x.rows()) + " rows, y has " +
                                                    std::to_string(y.size()));
  if (x.rows() < min_rows) throw ContractViolation("fit: need at least " + std::to_string(min_rows) + " rows");
  if (static_cast<Eigen::Index>(columns.size()) != x.cols()) throw ContractViolation("fit: column name count mismatch");
  if (!x.allFinite() || !y.allFinite()) throw ContractViolation("fit: missing or non-finite values");
}

inline double rmse_of(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  if (y.size() == 0) return 0.0;
  return std::sqrt((y - pred).squaredNorm() / static_cast<double>(y.size()));
}

inline Eigen::VectorXd predict_raw(const ModelArtifact& m, const Eigen::MatrixXd& x);

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear (ridge)

/// Minimizes ||y - Xw - b||^2 + lambda ||w||^2 via the normal equations on
/// centered data.
inline ModelArtifact fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda = 1e-6,
                                std::vector<std::string> columns = {}) {
  if (columns.empty()) columns = detail::default_columns(x.cols());
  ModelSpec spec;
  spec.family = ModelFamily::linear;
  spec.linear.lambda = lambda;
  spec.validate();
  detail::check_training_input(x, y, columns, 2);

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (lambda == 0.0 && (llt.info() != Eigen::Success || (x.cols() > 0 && llt.rcond() < 1e-13))) {
    throw ConfigError("linear: singular normal equations with lambda = 0; use lambda > 0");
  }
  if (llt.info() != Eigen::Success) throw Error("linear: normal equations are not positive definite");
  LinearParams p;
  p.weights = llt.solve(xc.transpose() * yc);
  p.intercept = y_mean - x_mean.dot(p.weights);

  ModelArtifact m{spec, std::move(p), std::move(columns), static_cast<std::size_t>(x.rows()), 0.0};
  m.train_rmse = detail::rmse_of(y, detail::predict_raw(m, x));
  return m;
}

// ---------------------------------------------------------------------------
// Linear epsilon-SVR

/// Minimizes sum_i max(0, |y_i - w.x_i - b| - epsilon) + ||w||^2 / (2C) on
/// standardized inputs. Internally the target is centered on its median and
/// divided by its standard deviation s; epsilon and C are rescaled (epsilon/s,
/// C/s) so the minimizer is unchanged. Per-sample subgradient steps in a seeded
/// order, with the regularizer applied as an implicit (proximal) shrink.
inline ModelArtifact fit_svr_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SvrSpec& svr = {},
                                    std::uint64_t seed = 0, std::vector<std::string> columns = {}) {
  if (columns.empty()) columns = detail::default_columns(x.cols());
  ModelSpec spec;
  spec.family = ModelFamily::svr_linear;
  spec.svr = svr;
  spec.seed = seed;
  spec.validate();
  detail::check_training_input(x, y, columns, 1);

  const auto n = x.rows();
  SvrParams p;
  p.inputs = Standardizer::fit(x);
  const Eigen::MatrixXd xs = p.inputs.apply(x);

  std::vector<double> sorted(y.data(), y.data() + y.size());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.size() % 2 == 1 ? sorted[sorted.size() / 2]
                                                : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  double scale = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(n));
  if (!(scale > 1e-12)) scale = 1.0;
  const Eigen::VectorXd ys = (y.array() - median) / scale;
  const double eps = svr.epsilon / scale;
  const double c = svr.c / scale;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed, {0x5652});
  for (int epoch = 0; epoch < svr.epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(order));
    const double eta = svr.learning_rate / std::sqrt(1.0 + epoch);
    const double shrink = 1.0 / (1.0 + eta / (c * static_cast<double>(n)));
    for (Eigen::Index i : order) {
      const double r = ys(i) - xs.row(i).dot(w) - b;
      double g = 0.0;
      if (r > eps) {
        g = -1.0;
      } else if (r < -eps) {
        g = 1.0;
      }
      if (g != 0.0) {
        w -= eta * g * xs.row(i).transpose();
        b -= eta * g;
      }
      w *= shrink;
    }
  }
  p.weights = w * scale;
  p.intercept = median + b * scale;

  ModelArtifact m{spec, std::move(p), std::move(columns), static_cast<std::size_t>(n), 0.0};
  m.train_rmse = detail::rmse_of(y, detail::predict_raw(m, x));
  return m;
}

// ---------------------------------------------------------------------------
// MLP

namespace detail {

struct MlpGradient {
  double loss = 0.0;  // (1/2n) sum (yhat - y)^2 on standardized target
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

inline Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& xs, Eigen::MatrixXd* hidden = nullptr) {
  Eigen::MatrixXd h = ((xs * p.w1.transpose()).rowwise() + p.b1.transpose()).array().tanh();
  Eigen::VectorXd out = (h * p.w2).array() + p.b2;
  if (hidden != nullptr) *hidden = std::move(h);
  return out;
}

/// Loss and analytic gradient on standardized inputs/targets.
inline MlpGradient mlp_loss_gradient(const MlpParams& p, const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys) {
  const auto n = static_cast<double>(xs.rows());
  Eigen::MatrixXd h;
  const Eigen::VectorXd yhat = mlp_forward(p, xs, &h);
  const Eigen::VectorXd err = yhat - ys;
  MlpGradient g;
  g.loss = 0.5 * err.squaredNorm() / n;
  const Eigen::VectorXd e = err / n;
  g.w2 = h.transpose() * e;
  g.b2 = e.sum();
  const Eigen::MatrixXd dz = (e * p.w2.transpose()).array() * (1.0 - h.array().square());
  g.w1 = dz.transpose() * xs;
  g.b1 = dz.colwise().sum().transpose();
  return g;
}

}  // namespace detail

inline ModelArtifact fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpSpec& mlp = {},
                             std::uint64_t seed = 0, std::vector<std::string> columns = {}) {
  if (columns.empty()) columns = detail::default_columns(x.cols());
  ModelSpec spec;
  spec.family = ModelFamily::mlp;
  spec.mlp = mlp;
  spec.seed = seed;
  spec.validate();
  detail::check_training_input(x, y, columns, 1);

  MlpParams p;
  p.inputs = Standardizer::fit(x);
  const Eigen::MatrixXd xs = p.inputs.apply(x);
  p.target_mean = y.mean();
  const double sd = std::sqrt((y.array() - p.target_mean).square().sum() / static_cast<double>(y.size()));
  p.target_scale = sd > 1e-12 ? sd : 1.0;
  const Eigen::VectorXd ys = (y.array() - p.target_mean) / p.target_scale;

  Rng rng(seed, {0x4D4C50});
  auto draw = [&] { return rng.uniform(-mlp.init_scale, mlp.init_scale); };
  const auto h = static_cast<Eigen::Index>(mlp.hidden);
  p.w1.resize(h, x.cols());
  p.b1.resize(h);
  p.w2.resize(h);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) p.w1(i, j) = draw();
  }
  for (Eigen::Index i = 0; i < h; ++i) p.b1(i) = draw();
  for (Eigen::Index i = 0; i < h; ++i) p.w2(i) = draw();
  p.b2 = draw();

  for (int epoch = 0; epoch < mlp.epochs; ++epoch) {
    const detail::MlpGradient g = detail::mlp_loss_gradient(p, xs, ys);
    p.w1 -= mlp.learning_rate * g.w1;
    p.b1 -= mlp.learning_rate * g.b1;
    p.w2 -= mlp.learning_rate * g.w2;
    p.b2 -= mlp.learning_rate * g.b2;
  }

  ModelArtifact m{spec, std::move(p), std::move(columns), static_cast<std::size_t>(x.rows()), 0.0};
  m.train_rmse = detail::rmse_of(y, detail::predict_raw(m, x));
  return m;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees

namespace detail {

/// Equal-frequency split thresholds for one feature. With at most `n_bins`
/// distinct values every gap between consecutive values is a candidate.
inline std::vector<double> bin_thresholds(std::vector<double> values, int n_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> thresholds;
  auto midpoint = [&](std::size_t k) { return distinct[k - 1] + 0.5 * (distinct[k] - distinct[k - 1]); };
  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    for (std::size_t k = 1; k < distinct.size(); ++k) thresholds.push_back(midpoint(k));
    return thresholds;
  }
  const std::size_t n = values.size();
  for (int j = 1; j < n_bins; ++j) {
    const double v = values[static_cast<std::size_t>(j) * n / static_cast<std::size_t>(n_bins)];
    // boundary just below v, i.e. between v and its predecessor among distinct values
    const auto k = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
    if (k == 0) continue;
    const double t = midpoint(k);
    if (thresholds.empty() || t > thresholds.back()) thresholds.push_back(t);
  }
  return thresholds;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& thresholds, const std::vector<std::vector<std::uint16_t>>& bins,
              const GbdtSpec& spec)
      : thresholds_(thresholds), bins_(bins), spec_(spec) {}

  RegressionTree build(const Eigen::VectorXd& residual) {
    residual_ = &residual;
    RegressionTree tree;
    std::vector<std::size_t> all(static_cast<std::size_t>(residual.size()));
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(tree, std::move(all), 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    std::size_t bin = 0;
    double gain = 0.0;
  };

  int grow(RegressionTree& tree, std::vector<std::size_t> samples, int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i : samples) {
      const double r = (*residual_)(static_cast<Eigen::Index>(i));
      sum += r;
      sum_sq += r * r;
    }
    const auto count = static_cast<double>(samples.size());
    Split best;
    if (depth < spec_.max_depth && samples.size() >= 2 * static_cast<std::size_t>(spec_.min_leaf)) {
      best = find_split(samples, sum);
    }
    if (best.feature < 0 || !(best.gain > 1e-12 * sum_sq)) {
      tree.nodes[static_cast<std::size_t>(index)].value = spec_.learning_rate * sum / count;
      return index;
    }
    std::vector<std::size_t> left, right;
    const auto& column = bins_[static_cast<std::size_t>(best.feature)];
    for (std::size_t i : samples) (column[i] <= best.bin ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = best.feature;
    node.threshold = thresholds_[static_cast<std::size_t>(best.feature)][best.bin];
    node.left = l;
    node.right = r;
    return index;
  }

  // Scans features in index order and boundaries in increasing order; a later
  // candidate must be strictly better, so ties keep the lowest feature, then bin.
  Split find_split(const std::vector<std::size_t>& samples, double total) const {
    Split best;
    const auto n = static_cast<double>(samples.size());
    const double parent = total * total / n;
    std::vector<double> hist_sum;
    std::vector<std::size_t> hist_count;
    for (std::size_t f = 0; f < bins_.size(); ++f) {
      const std::size_t n_bounds = thresholds_[f].size();
      if (n_bounds == 0) continue;
      hist_sum.assign(n_bounds + 1, 0.0);
      hist_count.assign(n_bounds + 1, 0);
      const auto& column = bins_[f];
      for (std::size_t i : samples) {
        hist_sum[column[i]] += (*residual_)(static_cast<Eigen::Index>(i));
        ++hist_count[column[i]];
      }
      double left_sum = 0.0;
      std::size_t left_count = 0;
      for (std::size_t b = 0; b < n_bounds; ++b) {
        left_sum += hist_sum[b];
        left_count += hist_count[b];
        const std::size_t right_count = samples.size() - left_count;
        if (left_count < static_cast<std::size_t>(spec_.min_leaf)) continue;
        if (right_count < static_cast<std::size_t>(spec_.min_leaf)) break;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(left_count) +
                            right_sum * right_sum / static_cast<double>(right_count) - parent;
        if (gain > best.gain) best = {static_cast<int>(f), b, gain};
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& thresholds_;
  const std::vector<std::vector<std::uint16_t>>& bins_;
  const GbdtSpec& spec_;
  const Eigen::VectorXd* residual_ = nullptr;
};

}  // namespace detail

inline ModelArtifact fit_gbdt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbdtSpec& gbdt = {},
                              std::vector<std::string> columns = {}) {
  if (columns.empty()) columns = detail::default_columns(x.cols());
  ModelSpec spec;
  spec.family = ModelFamily::gbdt;
  spec.gbdt = gbdt;
  spec.validate();
  detail::check_training_input(x, y, columns, std::max<Eigen::Index>(1, gbdt.min_leaf));

  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<std::vector<double>> thresholds(p);
  std::vector<std::vector<std::uint16_t>> bins(p, std::vector<std::uint16_t>(n));
  for (std::size_t f = 0; f < p; ++f) {
    const auto col = x.col(static_cast<Eigen::Index>(f));
    thresholds[f] = detail::bin_thresholds(std::vector<double>(col.data(), col.data() + col.size()), gbdt.n_bins);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = col(static_cast<Eigen::Index>(i));
      // bin b means thresholds[b-1] < v <= thresholds[b]
      bins[f][i] = static_cast<std::uint16_t>(std::lower_bound(thresholds[f].begin(), thresholds[f].end(), v) -
                                              thresholds[f].begin());
    }
  }

  GbdtParams params;
  params.base = y.mean();
  Eigen::VectorXd prediction = Eigen::VectorXd::Constant(y.size(), params.base);
  params.train_rmse_by_round.push_back(detail::rmse_of(y, prediction));
  detail::TreeBuilder builder(thresholds, bins, gbdt);
  for (int round = 0; round < gbdt.n_trees; ++round) {
    const Eigen::VectorXd residual = y - prediction;
    RegressionTree tree = builder.build(residual);
    for (Eigen::Index i = 0; i < x.rows(); ++i) prediction(i) += tree.predict(x.row(i));
    params.trees.push_back(std::move(tree));
    params.train_rmse_by_round.push_back(detail::rmse_of(y, prediction));
  }
  const double final_rmse = params.train_rmse_by_round.back();
  return ModelArtifact{spec, std::move(params), std::move(columns), n, final_rmse};
}

// ---------------------------------------------------------------------------
// Dispatch and prediction

inline ModelArtifact fit(const ModelSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         std::vector<std::string> columns = {}) {
  spec.validate();
  switch (spec.family) {
    case ModelFamily::linear: {
      ModelArtifact m = fit_linear(x, y, spec.linear.lambda, std::move(columns));
      m.spec.seed = spec.seed;
      return m;
    }
    case ModelFamily::svr_linear: return fit_svr_linear(x, y, spec.svr, spec.seed, std::move(columns));
    case ModelFamily::mlp: return fit_mlp(x, y, spec.mlp, spec.seed, std::move(columns));
    case ModelFamily::gbdt: {
      ModelArtifact m = fit_gbdt(x, y, spec.gbdt, std::move(columns));
      m.spec.seed = spec.seed;
      return m;
    }
  }
  throw ConfigError("unknown model family");
}

namespace detail {

inline Eigen::VectorXd predict_raw(const ModelArtifact& m, const Eigen::MatrixXd& x) {
  return std::visit(
      [&](const auto& p) -> Eigen::VectorXd {
        using P = std::decay_t<decltype(p)>;
        if (x.rows() == 0) return Eigen::VectorXd(0);
        if constexpr (std::is_same_v<P, LinearParams>) {
          return (x * p.weights).array() + p.intercept;
        } else if constexpr (std::is_same_v<P, SvrParams>) {
          return (p.inputs.apply(x) * p.weights).array() + p.intercept;
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          return (mlp_forward(p, p.inputs.apply(x)).array() * p.target_scale) + p.target_mean;
        } else {
          Eigen::VectorXd out(x.rows());
          for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double v = p.base;
            for (const auto& tree : p.trees) v += tree.predict(x.row(i));
            out(i) = v;
          }
          return out;
        }
      },
      m.params);
}

}  // namespace detail

/// Aligns `x` to the training columns by name. Any missing or extra column is an error.
inline Eigen::VectorXd predict(const ModelArtifact& m, const Eigen::MatrixXd& x, std::span<const std::string> columns) {
  if (static_cast<Eigen::Index>(columns.size()) != x.cols()) {
    throw ContractViolation("predict: column name count does not match matrix width");
  }
  std::unordered_map<std::string_view, Eigen::Index> given;
  for (std::size_t j = 0; j < columns.size(); ++j) given.emplace(columns[j], static_cast<Eigen::Index>(j));
  std::string missing, extra;
  std::vector<Eigen::Index> order;
  for (const auto& name : m.columns) {
    auto it = given.find(name);
    if (it == given.end()) {
      missing += (missing.empty() ? "" : ", ") + name;
    } else {
      order.push_back(it->second);
    }
  }
  std::unordered_map<std::string_view, bool> trained;
  for (const auto& name : m.columns) trained.emplace(name, true);
  for (const auto& name : columns) {
    if (!trained.count(name)) extra += (extra.empty() ? "" : ", ") + name;
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "predict: column mismatch;";
    if (!missing.empty()) msg += " missing [" + missing + "]";
    if (!extra.empty()) msg += " extra [" + extra + "]";
    throw ContractViolation(msg);
  }
  bool identity = true;
  for (std::size_t j = 0; j < order.size(); ++j) identity = identity && order[j] == static_cast<Eigen::Index>(j);
  if (identity) return detail::predict_raw(m, x);
  Eigen::MatrixXd aligned(x.rows(), static_cast<Eigen::Index>(order.size()));
  for (std::size_t j = 0; j < order.size(); ++j) aligned.col(static_cast<Eigen::Index>(j)) = x.col(order[j]);
  return detail::predict_raw(m, aligned);
}

/// Positional prediction: `x` columns are in training order.
inline Eigen::VectorXd predict(const ModelArtifact& m, const Eigen::MatrixXd& x) {
  if (x.cols() != static_cast<Eigen::Index>(m.columns.size())) {
    throw ContractViolation("predict: expected " + std::to_string(m.columns.size()) + " columns, got " +
                            std::to_string(x.cols()));
  }
  return detail::predict_raw(m, x);
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

inline Eigen::MatrixXd json_mat(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd row = json_vec(j[i]);
    if (row.size() != cols) throw SchemaError("model artifact: ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

inline nlohmann::json standardizer_json(const Standardizer& s) {
  return {{"mean", vec_json(s.mean)}, {"scale", vec_json(s.scale)}};
}

inline Standardizer json_standardizer(const nlohmann::json& j) {
  return {json_vec(j.at("mean")), json_vec(j.at("scale"))};
}

}  // namespace detail

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json j{{"family", std::string(to_string(s.family))}, {"seed", s.seed}};
  switch (s.family) {
    case ModelFamily::linear: j["lambda"] = s.linear.lambda; break;
    case ModelFamily::svr_linear:
      j["epsilon"] = s.svr.epsilon;
      j["C"] = s.svr.c;
      j["epochs"] = s.svr.epochs;
      j["learning_rate"] = s.svr.learning_rate;
      break;
    case ModelFamily::mlp:
      j["hidden"] = s.mlp.hidden;
      j["learning_rate"] = s.mlp.learning_rate;
      j["epochs"] = s.mlp.epochs;
      j["init_scale"] = s.mlp.init_scale;
      break;
    case ModelFamily::gbdt:
      j["n_trees"] = s.gbdt.n_trees;
      j["max_depth"] = s.gbdt.max_depth;
      j["learning_rate"] = s.gbdt.learning_rate;
      j["min_leaf"] = s.gbdt.min_leaf;
      j["n_bins"] = s.gbdt.n_bins;
      break;
  }
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.family = model_family_from_string(j.at("family").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  switch (s.family) {
    case ModelFamily::linear: s.linear.lambda = j.at("lambda").get<double>(); break;
    case ModelFamily::svr_linear:
      s.svr.epsilon = j.at("epsilon").get<double>();
      s.svr.c = j.at("C").get<double>();
      s.svr.epochs = j.at("epochs").get<int>();
      s.svr.learning_rate = j.at("learning_rate").get<double>();
      break;
    case ModelFamily::mlp:
      s.mlp.hidden = j.at("hidden").get<int>();
      s.mlp.learning_rate = j.at("learning_rate").get<double>();
      s.mlp.epochs = j.at("epochs").get<int>();
      s.mlp.init_scale = j.at("init_scale").get<double>();
      break;
    case ModelFamily::gbdt:
      s.gbdt.n_trees = j.at("n_trees").get<int>();
      s.gbdt.max_depth = j.at("max_depth").get<int>();
      s.gbdt.learning_rate = j.at("learning_rate").get<double>();
      s.gbdt.min_leaf = j.at("min_leaf").get<int>();
      s.gbdt.n_bins = j.at("n_bins").get<int>();
      break;
  }
  return s;
}

inline nlohmann::json to_json(const ModelArtifact& m) {
  using detail::vec_json;
  nlohmann::json j{{"family", std::string(to_string(m.family()))},
                   {"spec", spec_to_json(m.spec)},
                   {"columns", m.columns},
                   {"n_rows", m.n_rows},
                   {"train_rmse", m.train_rmse}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        nlohmann::json params;
        if constexpr (std::is_same_v<P, LinearParams>) {
          params = {{"weights", vec_json(p.weights)}, {"intercept", p.intercept}};
        } else if constexpr (std::is_same_v<P, SvrParams>) {
          params = {{"inputs", detail::standardizer_json(p.inputs)},
                    {"weights", vec_json(p.weights)},
                    {"intercept", p.intercept}};
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          params = {{"inputs", detail::standardizer_json(p.inputs)},
                    {"target_mean", p.target_mean},
                    {"target_scale", p.target_scale},
                    {"w1", detail::mat_json(p.w1)},
                    {"b1", vec_json(p.b1)},
                    {"w2", vec_json(p.w2)},
                    {"b2", p.b2}};
        } else {
          nlohmann::json trees = nlohmann::json::array();
          for (const auto& t : p.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : t.nodes) {
              if (n.is_leaf()) {
                nodes.push_back({{"leaf", n.value}});
              } else {
                nodes.push_back(
                    {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
              }
            }
            trees.push_back(std::move(nodes));
          }
          params = {{"base", p.base}, {"trees", trees}, {"train_rmse_by_round", p.train_rmse_by_round}};
        }
        j["params"] = std::move(params);
      },
      m.params);
  return j;
}

inline ModelArtifact model_from_json(const nlohmann::json& j) {
  using detail::json_vec;
  ModelArtifact m;
  try {
    m.spec = spec_from_json(j.at("spec"));
    m.columns = j.at("columns").get<std::vector<std::string>>();
    m.n_rows = j.at("n_rows").get<std::size_t>();
    m.train_rmse = j.at("train_rmse").get<double>();
    const auto& p = j.at("params");
    const auto width = static_cast<Eigen::Index>(m.columns.size());
    switch (m.spec.family) {
      case ModelFamily::linear:
        m.params = LinearParams{json_vec(p.at("weights")), p.at("intercept").get<double>()};
        break;
      case ModelFamily::svr_linear:
        m.params = SvrParams{detail::json_standardizer(p.at("inputs")), json_vec(p.at("weights")),
                             p.at("intercept").get<double>()};
        break;
      case ModelFamily::mlp: {
        MlpParams mp;
        mp.inputs = detail::json_standardizer(p.at("inputs"));
        mp.target_mean = p.at("target_mean").get<double>();
        mp.target_scale = p.at("target_scale").get<double>();
        mp.w1 = detail::json_mat(p.at("w1"), width);
        mp.b1 = json_vec(p.at("b1"));
        mp.w2 = json_vec(p.at("w2"));
        mp.b2 = p.at("b2").get<double>();
        m.params = std::move(mp);
        break;
      }
      case ModelFamily::gbdt: {
        GbdtParams gp;
        gp.base = p.at("base").get<double>();
        gp.train_rmse_by_round = p.at("train_rmse_by_round").get<std::vector<double>>();
        for (const auto& t : p.at("trees")) {
          RegressionTree tree;
          for (const auto& n : t) {
            TreeNode node;
            if (n.contains("leaf")) {
              node.value = n.at("leaf").get<double>();
            } else {
              node.feature = n.at("feature").get<int>();
              node.threshold = n.at("threshold").get<double>();
              node.left = n.at("left").get<int>();
              node.right = n.at("right").get<int>();
              if (node.feature >= width || node.left < 0 || node.right < 0 ||
                  static_cast<std::size_t>(std::max(node.left, node.right)) >= t.size()) {
                throw SchemaError("model artifact: bad tree node");
              }
            }
            tree.nodes.push_back(node);
          }
          gp.trees.push_back(std::move(tree));
        }
        m.params = std::move(gp);
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model artifact: ") + e.what());
  }
  return m;
}

}  // namespace tarmac
