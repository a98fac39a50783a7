// SPDX-License-Identifier: Apache-2.0

#include "scd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

namespace scd {

namespace {

nlohmann::json opt(const std::optional<double> &x) {
  return x ? nlohmann::json(*x) : nlohmann::json();
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = fractional_ranks(x), ry = fractional_ranks(y);
  return pearson(rx, ry);
}

RegressionMetrics regression_metrics(std::span<const double> prediction,
                                     std::span<const double> label) {
  if (prediction.size() != label.size() || label.empty()) {
    throw std::invalid_argument("regression_metrics: need equal, non-empty inputs");
  }
  RegressionMetrics m;
  m.n = label.size();
  double abs = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double e = prediction[i] - label[i];
    abs += std::abs(e);
    sq += e * e;
  }
  m.mae = abs / m.n;
  m.rmse = std::sqrt(sq / m.n);
  m.pearson = pearson(prediction, label);
  m.spearman = spearman(prediction, label);
  return m;
}

std::string RegressionMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["mae"] = mae;
  j["rmse"] = rmse;
  j["pearson"] = opt(pearson);
  j["spearman"] = opt(spearman);
  return j.dump();
}

ExtensivityReport extensivity_report(std::span<const double> counts,
                                     std::span<const double> emb, std::size_t dim) {
  const std::size_t n = counts.size();
  if (dim == 0 || emb.size() != n * dim) {
    throw std::invalid_argument("extensivity_report: embedding table shape mismatch");
  }
  ExtensivityReport r;
  r.n = n;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += emb[i * dim + k] * emb[i * dim + k];
    norms[i] = std::sqrt(s);
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (n < 2 || *lo == *hi) {
    r.notes.push_back("atom count has zero variance; correlations undefined");
    return r;
  }
  r.norm_vs_n = pearson(counts, norms);
  if (!r.norm_vs_n) r.notes.push_back("embedding norm has zero variance");

  Eigen::MatrixXd X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>>(emb.data(), n, dim);
  X.rowwise() -= X.colwise().mean();
  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double total = eig.eigenvalues().sum();
  if (total <= 0.0) {
    r.notes.push_back("embeddings have zero variance");
    return r;
  }
  const Eigen::VectorXd pc1 = eig.eigenvectors().col(dim - 1);
  r.explained_variance_pc1 = eig.eigenvalues()(dim - 1) / total;
  const Eigen::VectorXd proj = X * pc1;
  const std::vector<double> p(proj.data(), proj.data() + n);
  if (const auto c = pearson(counts, p)) r.pc1_vs_n = std::abs(*c);
  return r;
}

std::string ExtensivityReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["pearson_norm_vs_n"] = opt(norm_vs_n);
  j["pearson_pc1_vs_n"] = opt(pc1_vs_n);
  j["explained_variance_pc1"] = explained_variance_pc1;
  j["notes"] = notes;
  return j.dump();
}

}  // namespace scd
