// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "scd/random.hpp"
#include "scd/structure.hpp"

namespace scd {

struct CorruptionSample {
  AtomicStructure clean;      // conditioning view
  AtomicStructure corrupted;  // denoising view
  std::vector<Vec3> noise;    // eps, the denoising target
  double sigma_corr = 0.0;
  double sigma_reg = 0.0;
};

enum class RegNoise {
  kCleanOnly,  // clean = x + eta, corrupted = x + eps
  kBoth,       // x' = x + eta, clean = x', corrupted = x' + eps
};

// Draw order: eps for every coordinate, then eta. eps never includes eta.
CorruptionSample corrupt(const AtomicStructure &s, double sigma_corr,
                         double sigma_reg, Rng &rng,
                         RegNoise reg = RegNoise::kCleanOnly);

// Tile a periodic structure once along lattice vector `axis`. Energy and
// forces are extensive and follow the copy; the scalar property is kept.
AtomicStructure repeat_cell(const AtomicStructure &s, int axis);

// Up to `max_repeats` rounds; each round continues with probability p and
// tiles along a uniformly chosen axis.
AtomicStructure cell_repeat_augment(const AtomicStructure &s, double p,
                                    int max_repeats, Rng &rng);

}  // namespace scd
