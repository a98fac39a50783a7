// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scd/backbone.hpp"
#include "scd/objectives.hpp"

namespace scd {

struct GradcheckEntry {
  std::string objective;
  double max_rel_error = 0.0;
  std::string worst_parameter;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  std::string to_json() const;
};

// A 5-atom Morse cluster with energy and force labels, atoms tagged A A B B B.
AtomicStructure gradcheck_structure(std::uint64_t seed);

// Autodiff against central differences for every parameter under coord,
// scd (dropout off), pair_conditional, force_energy in both modes and
// finetune. Corruption draws are replayed from `seed` for every evaluation.
// Each parameter tensor's error is scaled by its largest finite-difference
// entry, floored at 1e-3 of the largest entry across all tensors.
GradcheckReport run_gradcheck(const ModelConfig &model,
                              std::span<const AtomicStructure> data,
                              const ObjectiveConfig &base, double h,
                              std::uint64_t seed);

}  // namespace scd
