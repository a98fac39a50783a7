// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices of doubles with tape-based reverse-mode
// differentiation. Every tensor is rank 2; scalars are 1x1. Adjoint rules are
// themselves written with differentiable primitives, so a backward pass run
// with `create_graph` can be differentiated once more (needed for
// gradient-based forces).

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scd {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  std::string str() const;
  friend bool operator==(const Shape &, const Shape &) = default;
};

namespace detail {
struct Node;
struct TensorImpl;
struct Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  // A leaf that requires grad.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape &shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t numel() const { return shape().size(); }

  std::span<const double> data() const;
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Accumulated gradient of a leaf; empty until a backward pass reaches it.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // In-place access for leaves only (initialisation, optimiser updates).
  std::span<double> mutable_data();

  // Same values, no history.
  Tensor detach() const;

  const void *id() const { return impl_.get(); }

 private:
  friend struct detail::Access;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
    : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Grad mode is thread-local. While disabled no history is recorded.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};

// ---- primitives ---------------------------------------------------------

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double factor);
Tensor add_scalar(const Tensor &a, double value);

enum class Trans : std::uint8_t { kNo, kYes };
// op(a) * op(b)
Tensor matmul(const Tensor &a, const Tensor &b, Trans ta = Trans::kNo,
              Trans tb = Trans::kNo);
Tensor transpose(const Tensor &a);

Tensor sum(const Tensor &a);                   // -> 1x1
Tensor sum(const Tensor &a, int axis);         // axis 0 -> 1xC, axis 1 -> Rx1
Tensor mean(const Tensor &a);
Tensor mean(const Tensor &a, int axis);
// Broadcast a 1x1, 1xC or Rx1 tensor to `shape`.
Tensor expand(const Tensor &a, Shape shape);
// Inverse of expand: sum over broadcast axes down to `shape`.
Tensor sum_to(const Tensor &a, Shape shape);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor &a, int axis, std::size_t start, std::size_t length);
// Zero-pad `a` into a tensor whose `axis` extent is `total`, placing it at
// `start`. Adjoint of slice.
Tensor pad(const Tensor &a, int axis, std::size_t start, std::size_t total);
Tensor reshape(const Tensor &a, Shape shape);

Tensor silu(const Tensor &a);
Tensor sigmoid(const Tensor &a);
Tensor tanh(const Tensor &a);
Tensor exp(const Tensor &a);
Tensor cos(const Tensor &a);
Tensor sqrt(const Tensor &a);
Tensor square(const Tensor &a);
Tensor reciprocal(const Tensor &a);

Tensor softmax(const Tensor &a, int axis);

// Per-row statistics over columns (Rx1).
Tensor row_mean(const Tensor &a);
Tensor row_variance(const Tensor &a);
// (x - mean) / sqrt(var + eps), no affine parameters.
Tensor layer_norm(const Tensor &a, double eps = 1e-5);

// out[e] = a[index[e]]
Tensor gather_rows(const Tensor &a, std::span<const std::size_t> index);
// out[i] = sum over e with index[e] == i of values[e], accumulated in
// ascending e. Adjoint is gather_rows.
Tensor scatter_sum(const Tensor &values, std::span<const std::size_t> index,
                   std::size_t n);
// Segment sum with a correctly rounded accumulator: the result does not
// depend on row order and doubling the multiset doubles the result exactly.
Tensor segment_sum_exact(const Tensor &values,
                         std::span<const std::size_t> segment,
                         std::size_t num_segments);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator*(const Tensor &a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor &a) { return scale(a, s); }
inline Tensor operator-(const Tensor &a) { return scale(a, -1.0); }

// ---- reverse mode -------------------------------------------------------

// The primitives reachable from an output, in reverse execution order.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor &output);

  std::size_t size() const { return nodes_.size(); }
  // Primitive names in replay (reverse execution) order.
  std::vector<std::string_view> replay_order() const;
  // Leaf tensors feeding any recorded primitive.
  std::vector<Tensor> leaves() const;

  // Adjoints of every tensor reachable from the output (keyed by
  // Tensor::id()), seeded with `seed` of the output's shape.
  std::unordered_map<const void *, Tensor> run(const Tensor &seed,
                                               bool create_graph) const;

 private:
  Tensor output_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// `loss` must be 1x1.
void backward(const Tensor &loss, bool create_graph = false);

// d(output)/d(inputs) without touching leaf .grad buffers. `output` must be
// 1x1. Inputs not reached by the output get zeros. With create_graph the
// returned tensors carry history and can be differentiated again.
std::vector<Tensor> grad(const Tensor &output, std::span<const Tensor> inputs,
                         bool create_graph = false);

}  // namespace scd
