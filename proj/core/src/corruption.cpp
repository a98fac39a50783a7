// SPDX-License-Identifier: Apache-2.0

#include "scd/corruption.hpp"

#include <stdexcept>

namespace scd {

CorruptionSample corrupt(const AtomicStructure &s, double sigma_corr,
                         double sigma_reg, Rng &rng, RegNoise reg) {
  if (!(sigma_corr >= 0.0) || !(sigma_reg >= 0.0)) {
    throw std::invalid_argument("noise scales must be non-negative");
  }
  CorruptionSample out;
  out.sigma_corr = sigma_corr;
  out.sigma_reg = sigma_reg;
  out.noise.resize(s.size());
  for (Vec3 &e : out.noise) {
    for (double &x : e) x = sigma_corr * rng.normal();
  }
  std::vector<Vec3> eta(s.size());
  for (Vec3 &e : eta) {
    for (double &x : e) x = sigma_reg * rng.normal();
  }

  out.clean = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = 0; k < 3; ++k) out.clean.positions[i][k] += eta[i][k];
  }
  const AtomicStructure &base = reg == RegNoise::kBoth ? out.clean : s;
  out.corrupted = base;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      out.corrupted.positions[i][k] = base.positions[i][k] + out.noise[i][k];
    }
  }
  return out;
}

AtomicStructure repeat_cell(const AtomicStructure &s, int axis) {
  if (!s.periodic()) {
    throw StructureError("cell repeat needs a periodic structure");
  }
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis must be 0, 1 or 2");
  const Vec3 shift = s.cell->lattice[axis];
  AtomicStructure out = s;
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.species.push_back(s.species[i]);
    out.positions.push_back({s.positions[i][0] + shift[0],
                             s.positions[i][1] + shift[1],
                             s.positions[i][2] + shift[2]});
  }
  for (double &x : out.cell->lattice[axis]) x *= 2.0;
  if (out.labels.energy) *out.labels.energy *= 2.0;
  if (out.labels.forces) {
    auto &f = *out.labels.forces;
    f.insert(f.end(), s.labels.forces->begin(), s.labels.forces->end());
  }
  if (out.components) {
    auto &c = *out.components;
    c.insert(c.end(), s.components->begin(), s.components->end());
  }
  return out;
}

AtomicStructure cell_repeat_augment(const AtomicStructure &s, double p,
                                    int max_repeats, Rng &rng) {
  if (!s.periodic()) {
    throw StructureError("cell repeat needs a periodic structure");
  }
  AtomicStructure out = s;
  for (int k = 0; k < max_repeats && rng.bernoulli(p); ++k) {
    out = repeat_cell(out, static_cast<int>(rng.index(3)));
  }
  return out;
}

}  // namespace scd
