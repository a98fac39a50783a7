// SPDX-License-Identifier: Apache-2.0

#include "scd/structure.hpp"

#include <cmath>
#include <string>

#include "scd/elements.hpp"

namespace scd {

double determinant(const Mat3 &m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 inverse(const Mat3 &m) {
  const double det = determinant(m);
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw StructureError("cell matrix is not invertible");
  }
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

void AtomicStructure::validate() const {
  if (species.empty()) throw StructureError("structure has no atoms");
  if (positions.size() != species.size()) {
    throw StructureError("positions count " + std::to_string(positions.size()) +
                         " != atom count " + std::to_string(species.size()));
  }
  for (int z : species) {
    if (z < 1 || z > kMaxAtomicNumber) {
      throw StructureError("atomic number " + std::to_string(z) +
                           " outside [1, 118]");
    }
  }
  for (const Vec3 &p : positions) {
    for (double x : p) {
      if (!std::isfinite(x)) throw StructureError("non-finite coordinate");
    }
  }
  if (periodic()) (void)inverse(cell->lattice);
  if (labels.forces && labels.forces->size() != species.size()) {
    throw StructureError("forces must have shape Nx3");
  }
  if (components && components->size() != species.size()) {
    throw StructureError("component tags must cover every atom");
  }
}

bool operator==(const Cell &a, const Cell &b) {
  return a.periodic == b.periodic && a.lattice == b.lattice;
}

bool operator==(const AtomicStructure &a, const AtomicStructure &b) {
  return a.species == b.species && a.positions == b.positions &&
         a.cell == b.cell && a.labels == b.labels &&
         a.components == b.components;
}

ComponentView extract_component(const AtomicStructure &s, ComponentTag tag) {
  if (!s.components) {
    throw StructureError("structure carries no component tags");
  }
  ComponentView view;
  view.structure.cell = s.cell;
  std::vector<ComponentTag> tags;
  std::vector<Vec3> forces;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((*s.components)[i] != tag) continue;
    view.parent_index.push_back(i);
    view.structure.species.push_back(s.species[i]);
    view.structure.positions.push_back(s.positions[i]);
    tags.push_back(tag);
    if (s.labels.forces) forces.push_back((*s.labels.forces)[i]);
  }
  if (view.parent_index.empty()) {
    throw StructureError(std::string("component ") +
                         (tag == ComponentTag::kA ? "A" : "B") +
                         " is absent from the structure");
  }
  view.structure.components = std::move(tags);
  if (s.labels.forces) view.structure.labels.forces = std::move(forces);
  return view;
}

}  // namespace scd
