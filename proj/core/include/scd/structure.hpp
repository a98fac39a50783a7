// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace scd {

using Vec3 = std::array<double, 3>;
// Rows are lattice vectors, in Angstrom.
using Mat3 = std::array<Vec3, 3>;

class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ComponentTag : std::uint8_t { kA, kB };

struct Cell {
  Mat3 lattice{};
  bool periodic = true;
};

struct Labels {
  std::optional<double> energy;          // eV
  std::optional<double> property;        // task scalar
  std::optional<std::vector<Vec3>> forces;  // eV/Angstrom, one per atom

  friend bool operator==(const Labels &, const Labels &) = default;
};

struct AtomicStructure {
  std::vector<int> species;
  std::vector<Vec3> positions;
  std::optional<Cell> cell;
  Labels labels;
  std::optional<std::vector<ComponentTag>> components;

  std::size_t size() const { return species.size(); }
  bool periodic() const { return cell && cell->periodic; }

  // Throws StructureError when an invariant is broken: N >= 1, species in
  // [1, 118], matching array lengths, invertible periodic cell.
  void validate() const;
};

bool operator==(const Cell &a, const Cell &b);
bool operator==(const AtomicStructure &a, const AtomicStructure &b);

double determinant(const Mat3 &m);
Mat3 inverse(const Mat3 &m);  // throws StructureError when singular

// Atoms carrying one component tag, in original order, with the map back to
// parent indices.
struct ComponentView {
  AtomicStructure structure;
  std::vector<std::size_t> parent_index;
};

ComponentView extract_component(const AtomicStructure &s, ComponentTag tag);

}  // namespace scd
