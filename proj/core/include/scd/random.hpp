// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace scd {

// Seeded stream used for every stochastic decision in training. Normal draws
// use Box-Muller without a cached second value, so the full state is the
// engine state and round-trips through state()/set_state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform();  // [0, 1)
  double normal();   // standard normal
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n);  // uniform in [0, n)
  std::vector<std::size_t> permutation(std::size_t n);

  std::string state() const;
  void set_state(const std::string &state);

  friend bool operator==(const Rng &a, const Rng &b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace scd
