#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace tarmac;

namespace {

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

// y = 1.5 x0 - 2 x1 + 0.5 x2 + 4 + noise
Data linear_data(support::Gen& g, int n, double noise) {
  Data d{Eigen::MatrixXd(n, 3), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) d.x(i, j) = g.normal(j, 2.0);
    d.y(i) = 1.5 * d.x(i, 0) - 2.0 * d.x(i, 1) + 0.5 * d.x(i, 2) + 4.0 + g.normal(0.0, noise);
  }
  return d;
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> v(p.w1.data(), p.w1.data() + p.w1.size());
  v.insert(v.end(), p.b1.data(), p.b1.data() + p.b1.size());
  v.insert(v.end(), p.w2.data(), p.w2.data() + p.w2.size());
  v.push_back(p.b2);
  return v;
}

MlpParams unflatten(MlpParams p, const std::vector<double>& v) {
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = v[k++];
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = v[k++];
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2(i) = v[k++];
  p.b2 = v[k];
  return p;
}

ModelSpec small_spec(ModelFamily family) {
  ModelSpec s;
  s.family = family;
  s.seed = 5;
  s.svr.epochs = 30;
  s.mlp.epochs = 60;
  s.mlp.hidden = 8;
  s.gbdt.n_trees = 25;
  s.gbdt.max_depth = 3;
  s.gbdt.min_leaf = 5;
  return s;
}

}  // namespace

// --- Linear -----------------------------------------------------------------

TEST(Linear, ExactLine) {
  Eigen::MatrixXd x(5, 1);
  x << 0, 1, 2, 3, 4;
  const Eigen::VectorXd y = (2.0 * x.col(0)).array() + 1.0;
  const ModelArtifact m = fit_linear(x, y, 0.0);
  const auto& p = std::get<LinearParams>(m.params);
  EXPECT_NEAR(p.weights(0), 2.0, 1e-12);
  EXPECT_NEAR(p.intercept, 1.0, 1e-12);
  EXPECT_NEAR(m.train_rmse, 0.0, 1e-12);
}

TEST(Linear, ConstantTargetGivesZeroWeights) {
  support::Gen g(300);
  const Data d = linear_data(g, 40, 1.0);
  const ModelArtifact m = fit_linear(d.x, Eigen::VectorXd::Constant(40, 7.0));
  const auto& p = std::get<LinearParams>(m.params);
  EXPECT_LT(p.weights.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(p.intercept, 7.0, 1e-12);
}

TEST(Linear, DuplicateColumnSplitsWeightUnderRidge) {
  support::Gen g(301);
  Eigen::MatrixXd x(60, 2);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = x(i, 1) = g.normal();
    y(i) = 4.0 * x(i, 0);
  }
  const ModelArtifact m = fit_linear(x, y, 0.1);
  const auto& p = std::get<LinearParams>(m.params);
  EXPECT_NEAR(p.weights(0), p.weights(1), 1e-9);
  EXPECT_NEAR(p.weights(0) + p.weights(1), 4.0, 0.05);
}

// Property: noiseless data is recovered to 1e-8 for random designs.
TEST(Linear, NoiselessRecoveryProperty) {
  support::Gen g(302);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = g.integer(1, 6), n = g.integer(p + 5, 80);
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd w(p);
    for (int j = 0; j < p; ++j) w(j) = g.uniform(-5, 5);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = g.normal(0, g.uniform(0.5, 3));
    }
    const double b = g.uniform(-10, 10);
    const Eigen::VectorXd y = (x * w).array() + b;
    const ModelArtifact m = fit_linear(x, y, 0.0);
    const auto& fitted = std::get<LinearParams>(m.params);
    EXPECT_LT((fitted.weights - w).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(fitted.intercept, b, 1e-8);
  }
}

TEST(Linear, PredictionsEquivariantToColumnScaling) {
  support::Gen g(303);
  const Data d = linear_data(g, 50, 1.0);
  Eigen::MatrixXd scaled = d.x;
  scaled.col(1) *= 1000.0;
  const Eigen::VectorXd a = predict(fit_linear(d.x, d.y, 0.0), d.x);
  const Eigen::VectorXd b = predict(fit_linear(scaled, d.y, 0.0), scaled);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

// --- SVR --------------------------------------------------------------------

TEST(Svr, TargetsInsideTubeGiveFlatModel) {
  support::Gen g(304);
  Eigen::MatrixXd x(40, 2);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = g.normal();
    x(i, 1) = g.normal();
    y(i) = 10.0 + g.uniform(-0.4, 0.4);
  }
  SvrSpec spec;
  spec.epsilon = 1.0;
  const ModelArtifact m = fit_svr_linear(x, y, spec, 1);
  const Eigen::VectorXd pred = predict(m, x);
  EXPECT_LT((pred.array() - 10.0).abs().maxCoeff(), 1.0);
  EXPECT_LT(std::get<SvrParams>(m.params).weights.norm(), 0.05);
}

// The fitted slope matches a brute-force minimizer of the same objective.
TEST(Svr, SlopeMatchesDirectMinimization) {
  support::Gen g(305);
  const int n = 200;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = g.uniform(0, 10);
    y(i) = 3.0 * x(i, 0) + 2.0 + g.normal(0, 1.0);
  }
  SvrSpec spec;
  spec.epsilon = 0.5;
  spec.c = 1.0;
  spec.epochs = 400;
  const ModelArtifact m = fit_svr_linear(x, y, spec, 3);
  const auto& p = std::get<SvrParams>(m.params);
  const double slope = p.weights(0) / p.inputs.scale(0);
  EXPECT_GE(slope, 2.8);
  EXPECT_LE(slope, 3.2);

  const double mean = x.mean();
  const double sd = std::sqrt((x.array() - mean).square().sum() / n);
  auto objective = [&](double w, double b) {
    double s = w * w / (2.0 * spec.c);
    for (int i = 0; i < n; ++i) s += std::max(0.0, std::abs(y(i) - w * (x(i, 0) - mean) / sd - b) - spec.epsilon);
    return s;
  };
  auto best_b = [&](double w) { return oracle::ternary_min([&](double b) { return objective(w, b); }, -50, 100); };
  const double w_star = oracle::ternary_min([&](double w) { return objective(w, best_b(w)); }, 0, 40);
  EXPECT_NEAR(slope, w_star / sd, 0.05);
  const double b_star = best_b(w_star);
  EXPECT_LE(objective(p.weights(0), p.intercept), objective(w_star, b_star) * 1.01);
}

TEST(Svr, SmallerCShrinksWeights) {
  support::Gen g(306);
  const Data d = linear_data(g, 120, 1.0);
  SvrSpec loose, tight;
  tight.c = 0.001;
  const double wl = std::get<SvrParams>(fit_svr_linear(d.x, d.y, loose, 2).params).weights.norm();
  const double wt = std::get<SvrParams>(fit_svr_linear(d.x, d.y, tight, 2).params).weights.norm();
  EXPECT_LT(wt, wl);
}

// --- MLP --------------------------------------------------------------------

TEST(Mlp, GradientMatchesFiniteDifferences) {
  support::Gen g(307);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = g.integer(3, 20), d = g.integer(1, 4), h = g.integer(1, 6);
    MlpParams p;
    p.w1.resize(h, d);
    p.b1.resize(h);
    p.w2.resize(h);
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = g.uniform(-1, 1);
    for (int i = 0; i < h; ++i) p.b1(i) = g.uniform(-1, 1);
    for (int i = 0; i < h; ++i) p.w2(i) = g.uniform(-1, 1);
    p.b2 = g.uniform(-1, 1);
    Eigen::MatrixXd xs(n, d);
    Eigen::VectorXd ys(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) xs(i, j) = g.normal();
      ys(i) = g.normal();
    }
    const detail::MlpGradient analytic = detail::mlp_loss_gradient(p, xs, ys);
    MlpParams as_params = p;
    as_params.w1 = analytic.w1;
    as_params.b1 = analytic.b1;
    as_params.w2 = analytic.w2;
    as_params.b2 = analytic.b2;
    const std::vector<double> a = flatten(as_params);
    const std::vector<double> numeric = oracle::fd_gradient(
        [&](const std::vector<double>& v) { return detail::mlp_loss_gradient(unflatten(p, v), xs, ys).loss; },
        flatten(p));
    double diff = 0, norm = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      diff += (a[k] - numeric[k]) * (a[k] - numeric[k]);
      norm += numeric[k] * numeric[k];
    }
    EXPECT_LT(std::sqrt(diff) / std::max(1e-12, std::sqrt(norm)), 1e-4);
  }
}

TEST(Mlp, ZeroInitAndNoTrainingPredictsMean) {
  support::Gen g(308);
  const Data d = linear_data(g, 30, 1.0);
  MlpSpec spec;
  spec.epochs = 0;
  spec.init_scale = 0.0;
  const Eigen::VectorXd pred = predict(fit_mlp(d.x, d.y, spec), d.x);
  EXPECT_LT((pred.array() - d.y.mean()).abs().maxCoeff(), 1e-12);
}

TEST(Mlp, FitsNonlinearTargetBetterThanLinear) {
  support::Gen g(309);
  Eigen::MatrixXd x(200, 1);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = g.uniform(-2, 2);
    y(i) = std::abs(x(i, 0));
  }
  MlpSpec spec;
  spec.learning_rate = 0.1;
  spec.epochs = 3000;
  const double mlp = fit_mlp(x, y, spec, 4).train_rmse;
  const double lin = fit_linear(x, y).train_rmse;
  EXPECT_LT(mlp, 0.5 * lin);
}

// --- GBDT -------------------------------------------------------------------

TEST(Gbdt, ConstantTarget) {
  support::Gen g(310);
  const Data d = linear_data(g, 50, 1.0);
  const ModelArtifact m = fit_gbdt(d.x, Eigen::VectorXd::Constant(50, -3.0));
  EXPECT_LT((predict(m, d.x).array() + 3.0).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(m.train_rmse, 0.0, 1e-12);
}

// Property: one depth-1 tree at learning rate 1 equals the best stump.
TEST(Gbdt, SingleStumpMatchesExhaustiveSplit) {
  support::Gen g(311);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = g.integer(4, 50);
    const double cut = g.uniform(-1, 1), lo = g.uniform(-5, 5), hi = g.uniform(-5, 5);
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    std::vector<double> xv, yv;
    for (int i = 0; i < n; ++i) {
      x(i, 0) = g.uniform(-2, 2);
      y(i) = (x(i, 0) <= cut ? lo : hi) + (trial % 2 ? g.normal(0, 0.3) : 0.0);
      xv.push_back(x(i, 0));
      yv.push_back(y(i));
    }
    GbdtSpec spec{1, 1, 1.0, 1, 65535};
    const ModelArtifact m = fit_gbdt(x, y, spec);
    const oracle::Stump s = oracle::best_stump(xv, yv);
    const Eigen::VectorXd pred = predict(m, x);
    double sse = 0;
    for (int i = 0; i < n; ++i) {
      const double expected = xv[i] <= s.threshold ? s.left : s.right;
      EXPECT_NEAR(pred(i), expected, 1e-9);
      sse += (y(i) - pred(i)) * (y(i) - pred(i));
    }
    EXPECT_NEAR(sse, s.sse, 1e-8 * std::max(1.0, s.sse));
    if (trial % 2 == 0) {
      EXPECT_NEAR(m.train_rmse, 0.0, 1e-12);
    }
  }
}

TEST(Gbdt, TrainingRmseNeverIncreases) {
  support::Gen g(312);
  for (int trial = 0; trial < 5; ++trial) {
    Data d = linear_data(g, 300, 2.0);
    for (int i = 0; i < 300; ++i) d.y(i) += 5.0 * std::sin(d.x(i, 0)) * (d.x(i, 1) > 1.0);
    GbdtSpec spec;
    spec.n_trees = 200;
    spec.max_depth = g.integer(1, 6);
    spec.min_leaf = g.integer(1, 20);
    const ModelArtifact m = fit_gbdt(d.x, d.y, spec);
    const auto& p = std::get<GbdtParams>(m.params);
    ASSERT_EQ(p.train_rmse_by_round.size(), 201u);
    for (std::size_t r = 1; r < p.train_rmse_by_round.size(); ++r) {
      EXPECT_LE(p.train_rmse_by_round[r], p.train_rmse_by_round[r - 1] + 1e-12);
    }
  }
}

TEST(Gbdt, ZeroLearningRatePredictsMean) {
  support::Gen g(313);
  const Data d = linear_data(g, 60, 1.0);
  GbdtSpec spec;
  spec.learning_rate = 0.0;
  spec.n_trees = 10;
  const Eigen::VectorXd pred = predict(fit_gbdt(d.x, d.y, spec), d.x);
  EXPECT_LT((pred.array() - d.y.mean()).abs().maxCoeff(), 1e-12);
}

// --- Prediction contract and persistence ------------------------------------

TEST(Predict, EmptyMatrixGivesEmptyVector) {
  support::Gen g(314);
  const Data d = linear_data(g, 40, 1.0);
  for (ModelFamily f : kModelFamilies) {
    const ModelArtifact m = fit(small_spec(f), d.x, d.y);
    EXPECT_EQ(predict(m, Eigen::MatrixXd(0, 3)).size(), 0);
  }
}

TEST(Predict, AlignsColumnsByName) {
  support::Gen g(315);
  const Data d = linear_data(g, 40, 1.0);
  const std::vector<std::string> names = {"a", "b", "c"};
  const ModelArtifact m = fit(small_spec(ModelFamily::gbdt), d.x, d.y, names);
  Eigen::MatrixXd permuted(d.x.rows(), 3);
  permuted << d.x.col(2), d.x.col(0), d.x.col(1);
  const std::vector<std::string> order = {"c", "a", "b"};
  EXPECT_EQ(predict(m, permuted, order), predict(m, d.x, names));
  const std::vector<std::string> wrong = {"a", "b", "z"};
  EXPECT_THROW(predict(m, d.x, wrong), ContractViolation);
  EXPECT_THROW(predict(m, d.x.leftCols(2)), ContractViolation);
}

TEST(Predict, RejectsBadTrainingInput) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(30, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(29);
  EXPECT_THROW(fit_linear(x, y), ContractViolation);
  Eigen::VectorXd with_nan = Eigen::VectorXd::Ones(30);
  with_nan(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit_gbdt(x, with_nan), ContractViolation);
  ModelSpec bad;
  bad.gbdt.learning_rate = 1.5;
  EXPECT_THROW(fit(bad, x, Eigen::VectorXd::Ones(30)), ConfigError);
}

TEST(Predict, JsonRoundTripAndDeterminism) {
  support::Gen g(316);
  const Data d = linear_data(g, 80, 1.0);
  for (ModelFamily f : kModelFamilies) {
    const ModelArtifact a = fit(small_spec(f), d.x, d.y);
    const ModelArtifact b = fit(small_spec(f), d.x, d.y);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << to_string(f);
    const ModelArtifact back = model_from_json(nlohmann::json::parse(to_json(a).dump()));
    EXPECT_EQ(predict(back, d.x), predict(a, d.x)) << to_string(f);
    EXPECT_EQ(to_json(back).dump(), to_json(a).dump()) << to_string(f);
  }
}
