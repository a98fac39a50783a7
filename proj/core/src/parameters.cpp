// SPDX-License-Identifier: Apache-2.0

#include "scd/parameters.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace scd {

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                                   Rng &rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double &x : w) x = a * (2.0 * rng.uniform() - 1.0);
  return w;
}

Tensor &ParameterStore::add(std::string name, Shape shape,
                            std::vector<double> init) {
  if (index_.count(name)) {
    throw std::logic_error("duplicate parameter " + name);
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), Tensor::parameter(shape, std::move(init))});
  return entries_.back().value;
}

Tensor &ParameterStore::add_linear_weight(std::string name, std::size_t fan_in,
                                          std::size_t fan_out, Rng &rng) {
  return add(std::move(name), {fan_in, fan_out},
             glorot_uniform(fan_in, fan_out, rng));
}

Tensor &ParameterStore::add_zeros(std::string name, Shape shape) {
  return add(std::move(name), shape, std::vector<double>(shape.size(), 0.0));
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const Tensor &ParameterStore::at(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter " + std::string(name));
  }
  return entries_[it->second].value;
}

Tensor &ParameterStore::at(std::string_view name) {
  return const_cast<Tensor &>(std::as_const(*this).at(name));
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto &e : entries_) n += e.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto &e : entries_) e.value.zero_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto &e : entries_) {
    const auto d = e.value.data();
    out.add(e.name, e.value.shape(), {d.begin(), d.end()});
  }
  return out;
}

}  // namespace scd
