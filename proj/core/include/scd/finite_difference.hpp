// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "scd/tensor.hpp"

namespace scd {

// Central differences (f(p+h) - f(p-h)) / 2h for every entry of every tensor
// in `params`. Entries are perturbed in place and restored bit-exactly, so
// `params` must be leaves. `f` may differentiate internally (gradient-based
// forces), so grad mode is left as the caller set it.
std::vector<std::vector<double>>
finite_difference_grad(const std::function<double()> &f,
                       std::span<Tensor> params, double h = 1e-5);

// Largest |autodiff - reference| over a tensor, scaled by the largest
// |reference| entry (floored at `floor`).
double relative_error(std::span<const double> autodiff,
                      std::span<const double> reference, double floor = 1e-8);

}  // namespace scd
