// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "scd/parameters.hpp"

namespace scd {

// Linear warm-up to base_lr, then half-cosine decay to 0 at `total`.
double lr_schedule(std::uint64_t step, std::uint64_t warmup,
                   std::uint64_t total, double base_lr);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // per parameter, store order
  std::vector<std::vector<double>> v;

  friend bool operator==(const OptimizerState &, const OptimizerState &) = default;
};

// One bias-corrected AdamW update of a single tensor at optimiser step
// `step` (1-based):
//   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v, std::uint64_t step,
                  const AdamWConfig &cfg);

// Updates every parameter not matched by `frozen`, using its accumulated
// .grad (zeros when none reached it).
void adamw_step(ParameterStore &params, OptimizerState &state,
                const AdamWConfig &cfg,
                const std::function<bool(std::string_view)> &frozen = {});

}  // namespace scd
