#pragma once

// Principal component analysis on (optionally) z-scored columns.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tarmac/error.hpp"

namespace tarmac {

inline constexpr int kDefaultPcaComponents = 18;

struct PcaModel {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;               // 1 for constant columns or when not standardizing
  Eigen::MatrixXd loadings;             // input_dim x components, orthonormal columns
  Eigen::VectorXd explained_variance;   // per component, non-increasing
  bool standardized = true;

  Eigen::Index input_dim() const { return loadings.rows(); }
  Eigen::Index components() const { return loadings.cols(); }
};

inline PcaModel fit_pca(const Eigen::MatrixXd& x, Eigen::Index k, bool standardize = true) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (k < 1) throw ConfigError("pca: component count must be >= 1");
  if (k > p) {
    throw ConfigError("pca: " + std::to_string(k) + " components requested but only " + std::to_string(p) +
                      " columns");
  }
  if (n < 2) throw ConfigError("pca: need at least 2 rows");

  PcaModel model;
  model.standardized = standardize;
  model.means = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - model.means.transpose();
  model.scales = Eigen::VectorXd::Ones(p);
  if (standardize) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 1e-12 * std::max(1.0, std::abs(model.means(j)))) model.scales(j) = sd;
    }
    centered = centered.array().rowwise() / model.scales.transpose().array();
  }
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
  // ascending -> take the top k in descending order
  model.loadings.resize(p, k);
  model.explained_variance.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = p - 1 - c;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < p; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < 0.0) v = -v;
    model.loadings.col(c) = v;
    model.explained_variance(c) = std::max(0.0, solver.eigenvalues()(src));
  }
  return model;
}

inline Eigen::MatrixXd standardize(const PcaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.input_dim()) {
    throw ContractViolation("pca: expected " + std::to_string(model.input_dim()) + " columns, got " +
                            std::to_string(x.cols()));
  }
  return (x.rowwise() - model.means.transpose()).array().rowwise() / model.scales.transpose().array();
}

/// scores = standardized(x) * loadings
inline Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& x) {
  return standardize(model, x) * model.loadings;
}

/// Maps scores back to the standardized input space.
inline Eigen::MatrixXd reconstruct(const PcaModel& model, const Eigen::MatrixXd& scores) {
  return scores * model.loadings.transpose();
}

inline nlohmann::json to_json(const PcaModel& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json loadings = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.components(); ++c) loadings.push_back(vec(m.loadings.col(c)));
  return {{"standardized", m.standardized},
          {"means", vec(m.means)},
          {"scales", vec(m.scales)},
          {"loadings", loadings},
          {"explained_variance", vec(m.explained_variance)}};
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  PcaModel m;
  m.standardized = j.at("standardized").get<bool>();
  m.means = vec(j.at("means"));
  m.scales = vec(j.at("scales"));
  m.explained_variance = vec(j.at("explained_variance"));
  const auto& l = j.at("loadings");
  m.loadings.resize(m.means.size(), static_cast<Eigen::Index>(l.size()));
  for (std::size_t c = 0; c < l.size(); ++c) m.loadings.col(static_cast<Eigen::Index>(c)) = vec(l[c]);
  return m;
}

}  // namespace tarmac
