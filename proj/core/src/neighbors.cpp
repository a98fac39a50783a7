// SPDX-License-Identifier: Apache-2.0

#include "scd/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace scd {

namespace {

struct Edge {
  std::size_t source;
  std::size_t target;
  std::array<int, 3> shift;
  Vec3 displacement;
  double distance;
};

// Shared by both search paths so they produce bit-identical numbers.
bool try_edge(const AtomicStructure &s, std::size_t i, std::size_t j,
              const std::array<int, 3> &shift, double cutoff,
              std::vector<Edge> &out) {
  Vec3 d{};
  for (int k = 0; k < 3; ++k) d[k] = s.positions[j][k] - s.positions[i][k];
  if (shift != std::array<int, 3>{0, 0, 0}) {
    const Mat3 &L = s.cell->lattice;
    for (int k = 0; k < 3; ++k) {
      d[k] += shift[0] * L[0][k] + shift[1] * L[1][k] + shift[2] * L[2][k];
    }
  }
  const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (r > 0.0 && r <= cutoff) {
    out.push_back({i, j, shift, d, r});
    return true;
  }
  return false;
}

NeighborGraph finish(std::vector<Edge> edges, double cutoff) {
  std::sort(edges.begin(), edges.end(), [](const Edge &a, const Edge &b) {
    return std::tie(a.source, a.target, a.shift) <
           std::tie(b.source, b.target, b.shift);
  });
  NeighborGraph g;
  g.cutoff = cutoff;
  g.source.reserve(edges.size());
  for (const Edge &e : edges) {
    g.source.push_back(e.source);
    g.target.push_back(e.target);
    g.shift.push_back(e.shift);
    g.displacement.push_back(e.displacement);
    g.distance.push_back(e.distance);
  }
  return g;
}

std::vector<Edge> brute_force_open(const AtomicStructure &s, double cutoff) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i != j) try_edge(s, i, j, {0, 0, 0}, cutoff, edges);
    }
  }
  return edges;
}

// Every image with |displacement| <= cutoff. With fractional coordinates f
// and reciprocal rows b_k (columns of L^-1), component k of (f_j - f_i + n)
// equals displacement . b_k, so |n_k + df_k| <= cutoff * |b_k| bounds the
// search exactly.
std::vector<Edge> brute_force_periodic(const AtomicStructure &s,
                                       double cutoff) {
  const Mat3 inv = inverse(s.cell->lattice);
  std::array<double, 3> reach{};
  for (int k = 0; k < 3; ++k) {
    const double b = std::sqrt(inv[0][k] * inv[0][k] + inv[1][k] * inv[1][k] +
                               inv[2][k] * inv[2][k]);
    reach[k] = cutoff * b * (1.0 + 1e-9) + 1e-9;
  }
  std::vector<Vec3> frac(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (int k = 0; k < 3; ++k) {
      frac[a][k] = s.positions[a][0] * inv[0][k] +
                   s.positions[a][1] * inv[1][k] +
                   s.positions[a][2] * inv[2][k];
    }
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      std::array<int, 3> lo{}, hi{};
      for (int k = 0; k < 3; ++k) {
        const double df = frac[j][k] - frac[i][k];
        lo[k] = static_cast<int>(std::ceil(-df - reach[k]));
        hi[k] = static_cast<int>(std::floor(-df + reach[k]));
      }
      for (int a = lo[0]; a <= hi[0]; ++a) {
        for (int b = lo[1]; b <= hi[1]; ++b) {
          for (int c = lo[2]; c <= hi[2]; ++c) {
            try_edge(s, i, j, {a, b, c}, cutoff, edges);
          }
        }
      }
    }
  }
  return edges;
}

// Open boundaries only: bins of side `cutoff`, 27-bin stencil.
std::vector<Edge> cell_list_open(const AtomicStructure &s, double cutoff) {
  Vec3 lo = s.positions[0];
  for (const Vec3 &p : s.positions) {
    for (int k = 0; k < 3; ++k) lo[k] = std::min(lo[k], p[k]);
  }
  using Key = std::array<long, 3>;
  std::map<Key, std::vector<std::size_t>> bins;
  std::vector<Key> key_of(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    Key key{};
    for (int k = 0; k < 3; ++k) {
      key[k] = static_cast<long>(std::floor((s.positions[a][k] - lo[k]) / cutoff));
    }
    key_of[a] = key;
    bins[key].push_back(a);
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Key &ki = key_of[i];
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dz = -1; dz <= 1; ++dz) {
          const auto it = bins.find({ki[0] + dx, ki[1] + dy, ki[2] + dz});
          if (it == bins.end()) continue;
          for (std::size_t j : it->second) {
            if (j != i) try_edge(s, i, j, {0, 0, 0}, cutoff, edges);
          }
        }
      }
    }
  }
  return edges;
}

}  // namespace

NeighborGraph build_neighbor_graph(const AtomicStructure &s, double cutoff,
                                   NeighborMethod method) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw std::invalid_argument("cutoff must be positive");
  }
  s.validate();
  if (s.periodic()) return finish(brute_force_periodic(s, cutoff), cutoff);
  if (method == NeighborMethod::kAuto) {
    method = s.size() > 64 ? NeighborMethod::kCellList
                           : NeighborMethod::kBruteForce;
  }
  return finish(method == NeighborMethod::kCellList ? cell_list_open(s, cutoff)
                                                    : brute_force_open(s, cutoff),
                cutoff);
}

}  // namespace scd
