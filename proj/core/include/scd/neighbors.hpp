// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "scd/structure.hpp"

namespace scd {

// Directed radius graph. Edge e points source -> target with
//   displacement = r_target - r_source + shift . lattice
// where shift counts whole lattice vectors (all zero for open boundaries).
// Periodic cells narrower than 2*cutoff yield several edges per atom pair,
// one per image in range, and self-image edges (i, i, shift != 0).
// Edges are sorted by (source, target, shift).
struct NeighborGraph {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
  std::vector<std::array<int, 3>> shift;
  std::vector<Vec3> displacement;
  std::vector<double> distance;
  double cutoff = 0.0;

  std::size_t num_edges() const { return source.size(); }
};

enum class NeighborMethod { kAuto, kBruteForce, kCellList };

NeighborGraph build_neighbor_graph(const AtomicStructure &s, double cutoff,
                                   NeighborMethod method = NeighborMethod::kAuto);

}  // namespace scd
