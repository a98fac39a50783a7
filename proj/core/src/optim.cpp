// SPDX-License-Identifier: Apache-2.0

#include "scd/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace scd {

double lr_schedule(std::uint64_t step, std::uint64_t warmup,
                   std::uint64_t total, double base_lr) {
  if (total <= warmup) {
    throw std::invalid_argument("lr_schedule: total steps must exceed warmup");
  }
  if (step > total) throw std::invalid_argument("lr_schedule: step beyond total");
  if (step < warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double t = static_cast<double>(step - warmup) /
                   static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v, std::uint64_t step,
                  const AdamWConfig &cfg) {
  if (grad.size() != param.size() || m.size() != param.size() ||
      v.size() != param.size()) {
    throw std::invalid_argument(
      "adamw: shape mismatch (param " + std::to_string(param.size()) +
      ", grad " + std::to_string(grad.size()) + ")");
  }
  if (step == 0) throw std::invalid_argument("adamw: step is 1-based");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    double dir = cfg.weight_decay * param[i];
    // 0/0 when a coordinate has never seen a gradient and eps is 0.
    if (m_hat != 0.0 || v_hat != 0.0) dir += m_hat / (std::sqrt(v_hat) + cfg.eps);
    param[i] -= cfg.lr * dir;
  }
}

void adamw_step(ParameterStore &params, OptimizerState &state,
                const AdamWConfig &cfg,
                const std::function<bool(std::string_view)> &frozen) {
  auto &entries = params.entries();
  if (state.m.empty()) {
    for (const auto &e : entries) {
      state.m.emplace_back(e.value.numel(), 0.0);
      state.v.emplace_back(e.value.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) {
    throw std::invalid_argument("adamw: optimizer state does not match parameters");
  }
  ++state.step;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto &e = entries[i];
    if (frozen && frozen(e.name)) continue;
    std::span<const double> g = e.value.grad();
    if (!e.value.has_grad()) {
      zeros.assign(e.value.numel(), 0.0);
      g = zeros;
    }
    adamw_update(e.value.mutable_data(), g, state.m[i], state.v[i], state.step, cfg);
  }
}

}  // namespace scd
