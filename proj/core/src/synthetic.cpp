// SPDX-License-Identifier: Apache-2.0

#include "scd/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "scd/neighbors.hpp"
#include "scd/random.hpp"

namespace scd {

namespace {

Vec3 sub3(const Vec3 &a, const Vec3 &b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add3(const Vec3 &a, const Vec3 &b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 mul3(const Vec3 &a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot3(const Vec3 &a, const Vec3 &b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm3(const Vec3 &a) { return std::sqrt(dot3(a, a)); }
Vec3 cross3(const Vec3 &a, const Vec3 &b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 unit3(const Vec3 &a) { return mul3(a, 1.0 / norm3(a)); }

Vec3 random_direction(Rng &rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm3(v);
    if (n > 1e-6) return mul3(v, 1.0 / n);
  }
}

Mat3 random_rotation(Rng &rng) {
  const Vec3 a = random_direction(rng);
  Vec3 b = random_direction(rng);
  b = sub3(b, mul3(a, dot3(a, b)));
  while (norm3(b) < 1e-3) {
    b = random_direction(rng);
    b = sub3(b, mul3(a, dot3(a, b)));
  }
  b = unit3(b);
  return {a, b, cross3(a, b)};
}

// Rows of R are the images of the x, y, z axes.
Vec3 rotate(const Mat3 &R, const Vec3 &v) {
  return add3(add3(mul3(R[0], v[0]), mul3(R[1], v[1])), mul3(R[2], v[2]));
}

const std::array<Vec3, 4> kTetrahedron{{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}};

double morse_pair(double r, double d, double w, double r0, double *dphi) {
  const double e = std::exp(-w * (r - r0));
  *dphi = 2.0 * d * w * e * (1.0 - e);
  return d * (1.0 - e) * (1.0 - e) - d;
}

// Grow a connected cluster: each new atom bonds to a random earlier atom at
// a distance in [lo, hi] and keeps `min_sep` from all others.
std::vector<Vec3> grow_cluster(std::size_t n, double lo, double hi,
                               double min_sep, Rng &rng) {
  std::vector<Vec3> pos{{0, 0, 0}};
  while (pos.size() < n) {
    const Vec3 &anchor = pos[rng.index(pos.size())];
    const Vec3 cand = add3(anchor, mul3(random_direction(rng), lo + (hi - lo) * rng.uniform()));
    bool ok = true;
    for (const auto &p : pos) ok = ok && norm3(sub3(cand, p)) >= min_sep;
    if (ok) pos.push_back(cand);
  }
  return pos;
}

void label_morse(AtomicStructure &s, const MorseParams &p) {
  const MorseLabels m = morse_energy_forces(s, p);
  s.labels.energy = m.energy;
  s.labels.forces = m.forces;
  s.labels.property = m.energy / static_cast<double>(s.size());
}

AtomicStructure morse_cluster(Rng &rng, const SyntheticOptions &o) {
  AtomicStructure s;
  const std::size_t n = o.min_atoms + rng.index(o.max_atoms - o.min_atoms + 1);
  s.positions = grow_cluster(n, 1.0, 1.6, 0.95, rng);
  for (std::size_t i = 0; i < n; ++i) s.species.push_back(6 + static_cast<int>(rng.index(3)));
  // Steepest descent with backtracking; steps that raise the energy are
  // rejected and the step shrinks.
  double step = 0.02;
  MorseLabels m = morse_energy_forces(s, o.morse);
  for (std::size_t it = 0; it < o.relax_steps; ++it) {
    AtomicStructure trial = s;
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 dx = mul3(m.forces[i], step);
      const double len = norm3(dx);
      if (len > 0.1) dx = mul3(dx, 0.1 / len);
      trial.positions[i] = add3(s.positions[i], dx);
    }
    MorseLabels next = morse_energy_forces(trial, o.morse);
    if (next.energy <= m.energy) {
      s.positions = std::move(trial.positions);
      m = std::move(next);
      step = std::min(step * 1.2, 0.2);
    } else {
      step *= 0.5;
    }
  }
  if (o.temperature > 0.0) {
    // Single-atom Gaussian trial moves; only pairs touching the moved atom
    // change the energy.
    const double trial = 0.5 * std::sqrt(o.temperature / (o.morse.depth * o.morse.width *
                                                          o.morse.width));
    const auto local = [&](std::size_t i, const Vec3 &at) {
      double e = 0.0, unused = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double D = o.morse.depth * morse_depth_scale(s.species[i], s.species[j]);
        e += morse_pair(norm3(sub3(s.positions[j], at)), D, o.morse.width, o.morse.r0, &unused);
      }
      return e;
    };
    for (std::size_t sweep = 0; sweep < o.mc_sweeps; ++sweep) {
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 cand = s.positions[i];
        for (double &x : cand) x += trial * rng.normal();
        const double dE = local(i, cand) - local(i, s.positions[i]);
        if (dE <= 0.0 || rng.uniform() < std::exp(-dE / o.temperature)) s.positions[i] = cand;
      }
    }
  }
  label_morse(s, o.morse);
  return s;
}

AtomicStructure toy_crystal(Rng &rng, const SyntheticOptions &o) {
  AtomicStructure s;
  const double a = 2.8 + 0.8 * rng.uniform();
  Mat3 lattice{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) lattice[i][j] = (i == j ? a : 0.15 * (2 * rng.uniform() - 1));
  }
  s.cell = Cell{lattice, true};
  const std::size_t n = 1 + rng.index(3);
  while (s.positions.size() < n) {
    Vec3 f{rng.uniform(), rng.uniform(), rng.uniform()};
    const Vec3 cart = add3(add3(mul3(lattice[0], f[0]), mul3(lattice[1], f[1])),
                           mul3(lattice[2], f[2]));
    bool ok = true;
    for (const auto &p : s.positions) ok = ok && norm3(sub3(cart, p)) >= 1.0;
    if (ok) s.positions.push_back(cart);
  }
  for (std::size_t i = 0; i < n; ++i) s.species.push_back(6 + static_cast<int>(rng.index(3)));
  MorseParams p = o.morse;
  if (p.cutoff <= 0.0) p.cutoff = 4.0;
  // Periodic clashes across the boundary are possible; the potential copes.
  label_morse(s, p);
  return s;
}

std::array<AtomicStructure, 2> conformer_pair(Rng &rng, const SyntheticOptions &o) {
  static const std::array<int, 5> ligands{1, 7, 8, 9, 17};
  std::array<int, 5> pick = ligands;
  for (std::size_t i = pick.size(); i > 1; --i) std::swap(pick[i - 1], pick[rng.index(i)]);
  const Mat3 R = random_rotation(rng);
  std::array<double, 4> b0{}, b1{};
  for (int k = 0; k < 4; ++k) {
    b0[k] = 1.0 + 0.6 * rng.uniform();
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    b1[k] = b0[k] + sign * o.conformer_shift;
    if (b1[k] < 0.9 || b1[k] > 1.9) b1[k] = b0[k] - sign * o.conformer_shift;
  }
  std::array<AtomicStructure, 2> out;
  for (int c = 0; c < 2; ++c) {
    const auto &b = c == 0 ? b0 : b1;
    AtomicStructure &s = out[c];
    s.species.push_back(6);
    s.positions.push_back({0, 0, 0});
    double energy = 0.0;
    for (int k = 0; k < 4; ++k) {
      s.species.push_back(pick[k]);
      s.positions.push_back(rotate(R, mul3(unit3(kTetrahedron[k]), b[k])));
      energy += (b[k] - 1.3) * (b[k] - 1.3);
    }
    s.labels.energy = energy;
  }
  return out;
}

AtomicStructure pair_complex(Rng &rng, const SyntheticOptions &o) {
  AtomicStructure s;
  std::vector<Vec3> a = grow_cluster(4, 1.1, 1.8, 1.0, rng);
  for (int i = 0; i < 4; ++i) s.species.push_back(6 + static_cast<int>(rng.index(3)));
  const double edge = pair_edge_length(a);
  Vec3 centroid{0, 0, 0};
  for (const auto &p : a) centroid = add3(centroid, mul3(p, 0.25));
  // Frame of A from its first three atoms.
  const Vec3 e1 = unit3(sub3(a[1], a[0]));
  Vec3 e2 = sub3(a[2], a[0]);
  e2 = sub3(e2, mul3(e1, dot3(e1, e2)));
  e2 = norm3(e2) > 1e-6 ? unit3(e2) : unit3(cross3(e1, Vec3{0.3, 0.5, 0.8}));
  const Mat3 frame{e1, e2, cross3(e1, e2)};
  Vec3 away = sub3(a[0], centroid);
  away = norm3(away) > 1e-6 ? unit3(away) : e1;
  const Vec3 centre = add3(centroid, mul3(away, 3.5));
  // Vertices of a regular tetrahedron with the requested edge length.
  const double scale = edge / (2.0 * std::sqrt(2.0));
  s.positions = a;
  for (const auto &v : kTetrahedron) {
    s.positions.push_back(add3(centre, rotate(frame, mul3(v, scale))));
    s.species.push_back(1);
  }
  s.components = std::vector<ComponentTag>(4, ComponentTag::kA);
  s.components->resize(8, ComponentTag::kB);
  label_morse(s, o.morse);
  return s;
}

}  // namespace

Family parse_family(std::string_view name) {
  if (name == "conformer_pairs") return Family::kConformerPairs;
  if (name == "morse_clusters") return Family::kMorseClusters;
  if (name == "toy_crystals") return Family::kToyCrystals;
  if (name == "pair_complexes") return Family::kPairComplexes;
  throw std::invalid_argument("unknown family '" + std::string(name) +
                              "' (conformer_pairs|morse_clusters|toy_crystals|pair_complexes)");
}

std::string family_name(Family f) {
  switch (f) {
  case Family::kConformerPairs: return "conformer_pairs";
  case Family::kMorseClusters: return "morse_clusters";
  case Family::kToyCrystals: return "toy_crystals";
  case Family::kPairComplexes: return "pair_complexes";
  }
  return "?";
}

double morse_depth_scale(int a, int b) {
  const auto w = [](int z) { return 1.0 + 0.1 * (z - 6); };
  return std::sqrt(std::max(w(a), 0.1) * std::max(w(b), 0.1));
}

MorseLabels morse_energy_forces(const AtomicStructure &s, const MorseParams &p) {
  MorseLabels out;
  out.forces.assign(s.size(), Vec3{0, 0, 0});
  const auto pair = [&](std::size_t i, std::size_t j, const Vec3 &d, double r,
                        double weight) {
    double dphi = 0.0;
    const double D = p.depth * morse_depth_scale(s.species[i], s.species[j]);
    out.energy += weight * morse_pair(r, D, p.width, p.r0, &dphi);
    // d = r_j - r_i; dE/dr_j = weight phi'(r) d / r.
    const Vec3 g = mul3(d, weight * dphi / r);
    for (int k = 0; k < 3; ++k) {
      out.forces[j][k] -= g[k];
      out.forces[i][k] += g[k];
    }
  };
  if (s.periodic()) {
    if (p.cutoff <= 0.0) throw std::invalid_argument("periodic Morse needs a cutoff");
    const NeighborGraph g = build_neighbor_graph(s, p.cutoff);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      pair(g.source[e], g.target[e], g.displacement[e], g.distance[e], 0.5);
    }
    return out;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const Vec3 d = sub3(s.positions[j], s.positions[i]);
      const double r = norm3(d);
      if (p.cutoff > 0.0 && r >= p.cutoff) continue;
      pair(i, j, d, r, 1.0);
    }
  }
  return out;
}

double pair_edge_length(const std::vector<Vec3> &a) {
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      total += norm3(sub3(a[i], a[j]));
      ++count;
    }
  }
  return 0.5 + 0.5 * total / count;
}

double rmsd(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmsd: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += dot3(sub3(a[i], b[i]), sub3(a[i], b[i]));
  return std::sqrt(acc / static_cast<double>(a.size()));
}

std::vector<AtomicStructure> generate(Family family, std::size_t n,
                                      std::uint64_t seed,
                                      const SyntheticOptions &opts) {
  if (n == 0) throw std::invalid_argument("generate: n must be at least 1");
  if (opts.min_atoms < 2 || opts.max_atoms < opts.min_atoms) {
    throw std::invalid_argument("generate: bad atom count range");
  }
  Rng rng(seed);
  std::vector<AtomicStructure> out;
  for (std::size_t i = 0; i < n; ++i) {
    switch (family) {
    case Family::kConformerPairs: {
      auto pair = conformer_pair(rng, opts);
      out.push_back(std::move(pair[0]));
      out.push_back(std::move(pair[1]));
      break;
    }
    case Family::kMorseClusters: out.push_back(morse_cluster(rng, opts)); break;
    case Family::kToyCrystals: out.push_back(toy_crystal(rng, opts)); break;
    case Family::kPairComplexes: out.push_back(pair_complex(rng, opts)); break;
    }
  }
  return out;
}

}  // namespace scd
