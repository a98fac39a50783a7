// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scd {

// Undefined (nullopt) when either side has zero variance or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
// Pearson on fractional ranks (ties share their average rank).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> fractional_ranks(std::span<const double> x);

struct RegressionMetrics {
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> pearson;
  std::optional<double> spearman;

  std::string to_json() const;
};

RegressionMetrics regression_metrics(std::span<const double> prediction,
                                     std::span<const double> label);

// Correlation of atom count with the embedding norm and with the projection
// onto the first principal direction of the centred embeddings. The sign of
// a principal direction is arbitrary, so that one is reported as |r|.
struct ExtensivityReport {
  std::size_t n = 0;
  std::optional<double> norm_vs_n;
  std::optional<double> pc1_vs_n;
  double explained_variance_pc1 = 0.0;  // fraction
  std::vector<std::string> notes;

  std::string to_json() const;
};

// `embeddings` is row-major n x d.
ExtensivityReport extensivity_report(std::span<const double> atom_counts,
                                     std::span<const double> embeddings,
                                     std::size_t dim);

}  // namespace scd
