// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scd/random.hpp"
#include "scd/tensor.hpp"

namespace scd {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered name -> parameter map. Insertion order is the serialisation and
// optimiser order.
class ParameterStore {
 public:
  Tensor &add(std::string name, Shape shape, std::vector<double> init);
  // Glorot-uniform weight for a fan_in x fan_out matrix.
  Tensor &add_linear_weight(std::string name, std::size_t fan_in,
                            std::size_t fan_out, Rng &rng);
  Tensor &add_zeros(std::string name, Shape shape);

  bool contains(std::string_view name) const;
  const Tensor &at(std::string_view name) const;
  Tensor &at(std::string_view name);

  std::vector<NamedTensor> &entries() { return entries_; }
  const std::vector<NamedTensor> &entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;

  void zero_grad();
  // Fresh leaves with copied values (plain copies share storage).
  ParameterStore clone() const;

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                                   Rng &rng);

}  // namespace scd
