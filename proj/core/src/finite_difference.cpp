// SPDX-License-Identifier: Apache-2.0

#include "scd/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scd {

std::vector<std::vector<double>>
finite_difference_grad(const std::function<double()> &f,
                       std::span<Tensor> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (Tensor &p : params) {
    auto values = p.mutable_data();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double up = f();
      values[i] = original - h;
      const double down = f();
      values[i] = original;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(std::span<const double> autodiff,
                      std::span<const double> reference, double floor) {
  if (autodiff.size() != reference.size()) {
    throw std::invalid_argument("relative_error: size mismatch");
  }
  double worst = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    worst = std::max(worst, std::abs(autodiff[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return worst / scale;
}

}  // namespace scd
