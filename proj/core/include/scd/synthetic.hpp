// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic datasets.
//   conformer_pairs  two conformers per molecule: a centre atom with four
//                    distinct ligands whose bond lengths differ between the
//                    conformers
//   morse_clusters   random clusters labelled with a pairwise Morse energy
//                    and its analytic forces
//   toy_crystals     small periodic cells with the same potential under a
//                    cutoff
//   pair_complexes   component A (four random atoms) and component B, a
//                    regular tetrahedron whose edge, orientation and
//                    placement are functions of A

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scd/structure.hpp"

namespace scd {

enum class Family { kConformerPairs, kMorseClusters, kToyCrystals, kPairComplexes };

Family parse_family(std::string_view name);  // throws std::invalid_argument
std::string family_name(Family f);

struct MorseParams {
  double depth = 1.0;  // eV, scaled per species pair
  double width = 1.5;  // 1/A
  double r0 = 1.2;     // A
  double cutoff = 0.0;  // 0: every pair (open structures only)
};

// Well depth of species pair (a, b) relative to MorseParams::depth.
double morse_depth_scale(int a, int b);

struct MorseLabels {
  double energy = 0.0;
  std::vector<Vec3> forces;
};
// Pair energy D (1 - exp(-w (r - r0)))^2 - D and its exact forces. Periodic
// structures need a positive cutoff; each directed neighbour edge carries
// half a pair term.
MorseLabels morse_energy_forces(const AtomicStructure &s, const MorseParams &p = {});

struct SyntheticOptions {
  std::size_t min_atoms = 3;  // morse_clusters
  std::size_t max_atoms = 12;
  double conformer_shift = 0.3;  // A, per-ligand bond change between conformers
  MorseParams morse;
  // morse_clusters only: steepest-descent steps on the Morse surface, then
  // Metropolis sweeps at temperature kT (eV) from the relaxed geometry.
  // Labels are taken at the final geometry.
  std::size_t relax_steps = 0;
  double temperature = 0.0;
  std::size_t mc_sweeps = 0;
};

// `n` counts frames, except conformer_pairs where it counts molecules and
// 2n frames come out (conformer 0 then 1 of each molecule).
std::vector<AtomicStructure> generate(Family family, std::size_t n,
                                      std::uint64_t seed,
                                      const SyntheticOptions &opts = {});

// Unaligned RMSD between equal-length position lists.
double rmsd(const std::vector<Vec3> &a, const std::vector<Vec3> &b);

// Edge length of the B tetrahedron for a given component A.
double pair_edge_length(const std::vector<Vec3> &a_positions);

}  // namespace scd
