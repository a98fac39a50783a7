// SPDX-License-Identifier: Apache-2.0

#include "scd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <unordered_set>

namespace scd {

// Bit i set when input i requires an adjoint.
using NeedMask = std::uint32_t;
using Adjoint = std::function<std::vector<Tensor>(const Tensor &, NeedMask)>;

namespace detail {

struct Node {
  std::uint64_t sequence = 0;
  std::string_view name;
  std::vector<Tensor> inputs;
  Adjoint adjoint;
  const void *output_id = nullptr;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::shared_ptr<Node> node;
};

struct Access {
  static const std::shared_ptr<TensorImpl> &impl(const Tensor &t) {
    return t.impl_;
  }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    return Tensor(std::move(impl));
  }
};

}  // namespace detail

namespace {

using detail::Access;
using detail::Node;
using detail::TensorImpl;

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_sequence = 0;

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
    g_grad_enabled = enabled;
  }
  ~GradModeGuard() { g_grad_enabled = previous_; }
  GradModeGuard(const GradModeGuard &) = delete;
  GradModeGuard &operator=(const GradModeGuard &) = delete;

 private:
  bool previous_;
};

bool needs(NeedMask mask, int i) { return (mask >> i) & 1U; }

void require_defined(const Tensor &t, std::string_view op) {
  if (!t.defined()) {
    throw std::logic_error(std::string(op) + ": undefined tensor");
  }
}

void require_same_shape(const Tensor &a, const Tensor &b, std::string_view op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

Tensor make(Shape shape, std::vector<double> data, std::string_view name,
            std::vector<Tensor> inputs, Adjoint adjoint) {
  // v - v is NaN exactly when v is NaN or infinite; the sum vectorises.
  double probe = 0.0;
  for (double v : data) probe += v - v;
  if (probe != 0.0) throw NumericError(std::string(name) + ": non-finite output");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  const bool record =
    g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                  [](const Tensor &t) {
                                    return t.requires_grad();
                                  });
  if (record) {
    auto node = std::make_shared<Node>();
    node->sequence = ++g_sequence;
    node->name = name;
    node->inputs = std::move(inputs);
    node->adjoint = std::move(adjoint);
    node->output_id = impl.get();
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return Access::wrap(std::move(impl));
}

// ---- elementwise unary family -----------------------------------------
// unary(x, kind, k) evaluates the k-th derivative of the activation; its
// adjoint multiplies by the (k+1)-th. Two derivative orders are available,
// enough for one gradient-of-gradient pass.

enum class UnaryKind : std::uint8_t {
  kSilu,
  kSigmoid,
  kTanh,
  kExp,
  kCos,
  kSqrt,
  kSquare,
  kReciprocal,
};

constexpr int kMaxDerivativeOrder = 2;

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double unary_value(UnaryKind kind, int order, double x) {
  switch (kind) {
  case UnaryKind::kSilu: {
    const double s = logistic(x);
    if (order == 0) return x * s;
    if (order == 1) return s * (1.0 + x * (1.0 - s));
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
  }
  case UnaryKind::kSigmoid: {
    const double s = logistic(x);
    if (order == 0) return s;
    if (order == 1) return s * (1.0 - s);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  }
  case UnaryKind::kTanh: {
    const double t = std::tanh(x);
    if (order == 0) return t;
    if (order == 1) return 1.0 - t * t;
    return -2.0 * t * (1.0 - t * t);
  }
  case UnaryKind::kExp:
    return std::exp(x);
  case UnaryKind::kCos:
    if (order == 0) return std::cos(x);
    if (order == 1) return -std::sin(x);
    return -std::cos(x);
  case UnaryKind::kSqrt:
    if (order == 0) return std::sqrt(x);
    if (order == 1) return 0.5 / std::sqrt(x);
    return -0.25 / (x * std::sqrt(x));
  case UnaryKind::kSquare:
    if (order == 0) return x * x;
    if (order == 1) return 2.0 * x;
    return 2.0;
  case UnaryKind::kReciprocal:
    if (order == 0) return 1.0 / x;
    if (order == 1) return -1.0 / (x * x);
    return 2.0 / (x * x * x);
  }
  return 0.0;
}

std::string_view unary_name(UnaryKind kind, int order) {
  static constexpr std::string_view kNames[][3] = {
    {"silu", "silu'", "silu''"},
    {"sigmoid", "sigmoid'", "sigmoid''"},
    {"tanh", "tanh'", "tanh''"},
    {"exp", "exp", "exp"},
    {"cos", "cos'", "cos''"},
    {"sqrt", "sqrt'", "sqrt''"},
    {"square", "square'", "square''"},
    {"reciprocal", "reciprocal'", "reciprocal''"},
  };
  return kNames[static_cast<int>(kind)][order];
}

Tensor unary(const Tensor &a, UnaryKind kind, int order) {
  require_defined(a, "unary");
  if (order > kMaxDerivativeOrder) {
    throw std::logic_error("derivatives beyond second order are not supported");
  }
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = unary_value(kind, order, in[i]);
  }
  return make(a.shape(), std::move(out), unary_name(kind, order), {a},
              [a, kind, order](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{mul(g, unary(a, kind, order + 1))};
              });
}

std::size_t axis_extent(const Shape &s, int axis) {
  if (axis == 0) return s.rows;
  if (axis == 1) return s.cols;
  throw ShapeError("axis must be 0 or 1, got " + std::to_string(axis));
}

// Python-style fsum: exact partials, correctly rounded result.
double exact_sum(std::span<const double> values, std::vector<double> &partials) {
  partials.clear();
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) ||
                (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

}  // namespace

// ---- Shape / Tensor -----------------------------------------------------

std::string Shape::str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Tensor Tensor::zeros(Shape shape) { return full(shape, 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  return from_data(shape, std::vector<double>(shape.size(), value));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (data.size() != shape.size()) {
    throw ShapeError("from_data: shape " + shape.str() + " needs " +
                     std::to_string(shape.size()) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return full({1, 1}, value); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = from_data(shape, std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

const Shape &Tensor::shape() const {
  if (!impl_) throw std::logic_error("shape of undefined tensor");
  return impl_->shape;
}

std::span<const double> Tensor::data() const {
  if (!impl_) throw std::logic_error("data of undefined tensor");
  return impl_->data;
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const Shape &s = shape();
  if (row >= s.rows || col >= s.cols) {
    throw IndexError("at(" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside " + s.str());
  }
  return impl_->data[row * s.cols + col];
}

double Tensor::item() const {
  if (shape() != Shape{1, 1}) {
    throw ShapeError("item: expected 1x1, got " + shape().str());
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on non-leaf");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::zero_grad() {
  if (!impl_) return;
  impl_->grad.assign(impl_->data.size(), 0.0);
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("mutable_data on non-leaf tensor");
  return impl_->data;
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- arithmetic ---------------------------------------------------------

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make(a.shape(), std::move(out), "add", {a, b},
              [](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{g, g};
              });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make(a.shape(), std::move(out), "sub", {a, b},
              [](const Tensor &g, NeedMask m) {
                return std::vector<Tensor>{
                  g, needs(m, 1) ? scale(g, -1.0) : Tensor()};
              });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make(a.shape(), std::move(out), "mul", {a, b},
              [a, b](const Tensor &g, NeedMask m) {
                return std::vector<Tensor>{needs(m, 0) ? mul(g, b) : Tensor(),
                                           needs(m, 1) ? mul(g, a) : Tensor()};
              });
}

Tensor scale(const Tensor &a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make(a.shape(), std::move(out), "scale", {a},
              [factor](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{scale(g, factor)};
              });
}

Tensor add_scalar(const Tensor &a, double value) {
  require_defined(a, "add_scalar");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + value;
  return make(a.shape(), std::move(out), "add_scalar", {a},
              [](const Tensor &g, NeedMask) { return std::vector<Tensor>{g}; });
}

Tensor matmul(const Tensor &a, const Tensor &b, Trans ta, Trans tb) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const bool at = ta == Trans::kYes;
  const bool bt = tb == Trans::kYes;
  const std::size_t m = at ? a.cols() : a.rows();
  const std::size_t k = at ? a.rows() : a.cols();
  const std::size_t k2 = bt ? b.cols() : b.rows();
  const std::size_t n = bt ? b.rows() : b.cols();
  if (k != k2) {
    throw ShapeError("matmul: shape mismatch " + a.shape().str() +
                     (at ? "^T" : "") + " vs " + b.shape().str() +
                     (bt ? "^T" : ""));
  }
  std::vector<double> c(m * n, 0.0);
  const auto A = a.data(), B = b.data();
  if (!at && !bt) {
    for (std::size_t i = 0; i < m; ++i) {
      double *ci = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double *bp = B.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else if (!at && bt) {
    for (std::size_t i = 0; i < m; ++i) {
      const double *ai = A.data() + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double *bj = B.data() + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
        c[i * n + j] = acc;
      }
    }
  } else if (at && !bt) {
    for (std::size_t p = 0; p < k; ++p) {
      const double *ap = A.data() + p * m;
      const double *bp = B.data() + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double api = ap[i];
        double *ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += A[p * m + i] * B[j * k + p];
        c[i * n + j] = acc;
      }
    }
  }
  return make(
    {m, n}, std::move(c), "matmul", {a, b},
    [a, b, ta, tb](const Tensor &g, NeedMask mask) {
      const auto flip = [](Trans t) {
        return t == Trans::kYes ? Trans::kNo : Trans::kYes;
      };
      Tensor da, db;
      if (needs(mask, 0)) {
        da = ta == Trans::kNo ? matmul(g, b, Trans::kNo, flip(tb))
                              : matmul(b, g, tb, Trans::kYes);
      }
      if (needs(mask, 1)) {
        db = tb == Trans::kNo ? matmul(a, g, flip(ta), Trans::kNo)
                              : matmul(g, a, Trans::kYes, ta);
      }
      return std::vector<Tensor>{da, db};
    });
}

Tensor transpose(const Tensor &a) {
  require_defined(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return make({c, r}, std::move(out), "transpose", {a},
              [](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{transpose(g)};
              });
}

// ---- reductions and broadcasting ---------------------------------------

Tensor sum(const Tensor &a) {
  require_defined(a, "sum");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const Shape in = a.shape();
  return make({1, 1}, {acc}, "sum", {a}, [in](const Tensor &g, NeedMask) {
    return std::vector<Tensor>{expand(g, in)};
  });
}

Tensor sum(const Tensor &a, int axis) {
  require_defined(a, "sum");
  const Shape in = a.shape();
  const auto x = a.data();
  std::vector<double> out;
  Shape shape;
  if (axis == 0) {
    shape = {1, in.cols};
    out.assign(in.cols, 0.0);
    for (std::size_t i = 0; i < in.rows; ++i) {
      for (std::size_t j = 0; j < in.cols; ++j) out[j] += x[i * in.cols + j];
    }
  } else {
    axis_extent(in, axis);
    shape = {in.rows, 1};
    out.assign(in.rows, 0.0);
    for (std::size_t i = 0; i < in.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < in.cols; ++j) acc += x[i * in.cols + j];
      out[i] = acc;
    }
  }
  return make(shape, std::move(out), "sum_axis", {a},
              [in](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{expand(g, in)};
              });
}

Tensor mean(const Tensor &a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean(const Tensor &a, int axis) {
  return scale(sum(a, axis),
               1.0 / static_cast<double>(axis_extent(a.shape(), axis)));
}

Tensor expand(const Tensor &a, Shape shape) {
  require_defined(a, "expand");
  const Shape in = a.shape();
  if (in == shape) return a;
  const bool rows_ok = in.rows == shape.rows || in.rows == 1;
  const bool cols_ok = in.cols == shape.cols || in.cols == 1;
  if (!rows_ok || !cols_ok) {
    throw ShapeError("expand: shape mismatch " + in.str() + " vs " +
                     shape.str());
  }
  std::vector<double> out(shape.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < shape.rows; ++i) {
    const std::size_t si = in.rows == 1 ? 0 : i;
    for (std::size_t j = 0; j < shape.cols; ++j) {
      const std::size_t sj = in.cols == 1 ? 0 : j;
      out[i * shape.cols + j] = x[si * in.cols + sj];
    }
  }
  return make(shape, std::move(out), "expand", {a},
              [in](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{sum_to(g, in)};
              });
}

Tensor sum_to(const Tensor &a, Shape shape) {
  require_defined(a, "sum_to");
  const Shape in = a.shape();
  if (in == shape) return a;
  if (shape == Shape{1, 1}) return sum(a);
  if (shape.rows == 1 && shape.cols == in.cols) return sum(a, 0);
  if (shape.cols == 1 && shape.rows == in.rows) return sum(a, 1);
  throw ShapeError("sum_to: shape mismatch " + in.str() + " vs " + shape.str());
}

// ---- structural ---------------------------------------------------------

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const Tensor &p : parts) require_defined(p, "concat");
  axis_extent(parts[0].shape(), axis);
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Tensor &p : parts) {
    const std::size_t other = axis == 0 ? p.cols() : p.rows();
    const std::size_t first = axis == 0 ? parts[0].cols() : parts[0].rows();
    if (other != first) {
      throw ShapeError("concat: shape mismatch " + parts[0].shape().str() +
                       " vs " + p.shape().str());
    }
    extents.push_back(axis_extent(p.shape(), axis));
    total += extents.back();
  }
  Shape shape = axis == 0 ? Shape{total, parts[0].cols()}
                          : Shape{parts[0].rows(), total};
  std::vector<double> out(shape.size());
  if (axis == 0) {
    std::size_t offset = 0;
    for (const Tensor &p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + offset);
      offset += p.numel();
    }
  } else {
    std::size_t col = 0;
    for (const Tensor &p : parts) {
      const auto x = p.data();
      for (std::size_t i = 0; i < shape.rows; ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
          out[i * shape.cols + col + j] = x[i * p.cols() + j];
        }
      }
      col += p.cols();
    }
  }
  return make(shape, std::move(out), "concat",
              std::vector<Tensor>(parts.begin(), parts.end()),
              [extents, axis](const Tensor &g, NeedMask m) {
                std::vector<Tensor> grads;
                std::size_t start = 0;
                for (std::size_t i = 0; i < extents.size(); ++i) {
                  grads.push_back(needs(m, static_cast<int>(i))
                                    ? slice(g, axis, start, extents[i])
                                    : Tensor());
                  start += extents[i];
                }
                return grads;
              });
}

Tensor slice(const Tensor &a, int axis, std::size_t start, std::size_t length) {
  require_defined(a, "slice");
  const Shape in = a.shape();
  const std::size_t extent = axis_extent(in, axis);
  if (start + length > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside " + in.str());
  }
  Shape shape = axis == 0 ? Shape{length, in.cols} : Shape{in.rows, length};
  std::vector<double> out(shape.size());
  const auto x = a.data();
  if (axis == 0) {
    std::copy(x.begin() + start * in.cols,
              x.begin() + (start + length) * in.cols, out.begin());
  } else {
    for (std::size_t i = 0; i < in.rows; ++i) {
      for (std::size_t j = 0; j < length; ++j) {
        out[i * length + j] = x[i * in.cols + start + j];
      }
    }
  }
  return make(shape, std::move(out), "slice", {a},
              [axis, start, extent](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{pad(g, axis, start, extent)};
              });
}

Tensor pad(const Tensor &a, int axis, std::size_t start, std::size_t total) {
  require_defined(a, "pad");
  const Shape in = a.shape();
  const std::size_t length = axis_extent(in, axis);
  if (start + length > total) {
    throw ShapeError("pad: " + in.str() + " does not fit at offset " +
                     std::to_string(start) + " of " + std::to_string(total));
  }
  Shape shape = axis == 0 ? Shape{total, in.cols} : Shape{in.rows, total};
  std::vector<double> out(shape.size(), 0.0);
  const auto x = a.data();
  if (axis == 0) {
    std::copy(x.begin(), x.end(), out.begin() + start * in.cols);
  } else {
    for (std::size_t i = 0; i < in.rows; ++i) {
      for (std::size_t j = 0; j < length; ++j) {
        out[i * total + start + j] = x[i * length + j];
      }
    }
  }
  return make(shape, std::move(out), "pad", {a},
              [axis, start, length](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{slice(g, axis, start, length)};
              });
}

Tensor reshape(const Tensor &a, Shape shape) {
  require_defined(a, "reshape");
  if (shape.size() != a.numel()) {
    throw ShapeError("reshape: shape mismatch " + a.shape().str() + " vs " +
                     shape.str());
  }
  const Shape in = a.shape();
  return make(shape, std::vector<double>(a.data().begin(), a.data().end()),
              "reshape", {a}, [in](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{reshape(g, in)};
              });
}

// ---- activations --------------------------------------------------------

Tensor silu(const Tensor &a) { return unary(a, UnaryKind::kSilu, 0); }
Tensor sigmoid(const Tensor &a) { return unary(a, UnaryKind::kSigmoid, 0); }
Tensor tanh(const Tensor &a) { return unary(a, UnaryKind::kTanh, 0); }
Tensor exp(const Tensor &a) { return unary(a, UnaryKind::kExp, 0); }
Tensor cos(const Tensor &a) { return unary(a, UnaryKind::kCos, 0); }
Tensor sqrt(const Tensor &a) { return unary(a, UnaryKind::kSqrt, 0); }
Tensor square(const Tensor &a) { return unary(a, UnaryKind::kSquare, 0); }
Tensor reciprocal(const Tensor &a) {
  return unary(a, UnaryKind::kReciprocal, 0);
}

Tensor softmax(const Tensor &a, int axis) {
  require_defined(a, "softmax");
  const Shape in = a.shape();
  axis_extent(in, axis);
  const auto x = a.data();
  std::vector<double> out(in.size());
  const std::size_t outer = axis == 1 ? in.rows : in.cols;
  const std::size_t inner = axis == 1 ? in.cols : in.rows;
  for (std::size_t o = 0; o < outer; ++o) {
    const auto at = [&](std::size_t i) {
      return axis == 1 ? o * in.cols + i : i * in.cols + o;
    };
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) hi = std::max(hi, x[at(i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      out[at(i)] = std::exp(x[at(i)] - hi);
      z += out[at(i)];
    }
    for (std::size_t i = 0; i < inner; ++i) out[at(i)] /= z;
  }
  return make(in, std::move(out), "softmax", {a},
              [a, axis](const Tensor &g, NeedMask) {
                const Tensor y = softmax(a, axis);
                const Tensor gy = mul(g, y);
                const Tensor s = expand(sum(gy, axis), gy.shape());
                return std::vector<Tensor>{sub(gy, mul(y, s))};
              });
}

Tensor row_mean(const Tensor &a) { return mean(a, 1); }

Tensor row_variance(const Tensor &a) {
  const Tensor centered = sub(a, expand(row_mean(a), a.shape()));
  return row_mean(square(centered));
}

Tensor layer_norm(const Tensor &a, double eps) {
  const Tensor centered = sub(a, expand(row_mean(a), a.shape()));
  const Tensor variance = row_mean(square(centered));
  const Tensor inv_std = reciprocal(sqrt(add_scalar(variance, eps)));
  return mul(centered, expand(inv_std, a.shape()));
}

// ---- graph primitives ---------------------------------------------------

Tensor gather_rows(const Tensor &a, std::span<const std::size_t> index) {
  require_defined(a, "gather_rows");
  const Shape in = a.shape();
  std::vector<double> out(index.size() * in.cols);
  const auto x = a.data();
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= in.rows) {
      throw IndexError("gather_rows: index " + std::to_string(index[e]) +
                       " out of range for " + std::to_string(in.rows) +
                       " rows");
    }
    std::copy_n(x.begin() + index[e] * in.cols, in.cols,
                out.begin() + e * in.cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make({index.size(), in.cols}, std::move(out), "gather_rows", {a},
              [idx = std::move(idx), rows = in.rows](const Tensor &g,
                                                     NeedMask) {
                return std::vector<Tensor>{scatter_sum(g, idx, rows)};
              });
}

Tensor scatter_sum(const Tensor &values, std::span<const std::size_t> index,
                   std::size_t n) {
  require_defined(values, "scatter_sum");
  const Shape in = values.shape();
  if (index.size() != in.rows) {
    throw ShapeError("scatter_sum: " + std::to_string(index.size()) +
                     " indices for values " + in.str());
  }
  std::vector<double> out(n * in.cols, 0.0);
  const auto x = values.data();
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= n) {
      throw IndexError("scatter_sum: index " + std::to_string(index[e]) +
                       " out of range for " + std::to_string(n) + " rows");
    }
    double *dst = out.data() + index[e] * in.cols;
    const double *src = x.data() + e * in.cols;
    for (std::size_t j = 0; j < in.cols; ++j) dst[j] += src[j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make({n, in.cols}, std::move(out), "scatter_sum", {values},
              [idx = std::move(idx)](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{gather_rows(g, idx)};
              });
}

Tensor segment_sum_exact(const Tensor &values,
                         std::span<const std::size_t> segment,
                         std::size_t num_segments) {
  require_defined(values, "segment_sum_exact");
  const Shape in = values.shape();
  if (segment.size() != in.rows) {
    throw ShapeError("segment_sum_exact: " + std::to_string(segment.size()) +
                     " segment ids for values " + in.str());
  }
  std::vector<std::vector<std::size_t>> members(num_segments);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] >= num_segments) {
      throw IndexError("segment_sum_exact: segment " +
                       std::to_string(segment[r]) + " out of range for " +
                       std::to_string(num_segments));
    }
    members[segment[r]].push_back(r);
  }
  std::vector<double> out(num_segments * in.cols, 0.0);
  std::vector<double> column, partials;
  const auto x = values.data();
  for (std::size_t s = 0; s < num_segments; ++s) {
    for (std::size_t j = 0; j < in.cols; ++j) {
      column.clear();
      for (std::size_t r : members[s]) column.push_back(x[r * in.cols + j]);
      out[s * in.cols + j] = exact_sum(column, partials);
    }
  }
  std::vector<std::size_t> idx(segment.begin(), segment.end());
  return make({num_segments, in.cols}, std::move(out), "segment_sum_exact",
              {values}, [idx = std::move(idx)](const Tensor &g, NeedMask) {
                return std::vector<Tensor>{gather_rows(g, idx)};
              });
}

// ---- reverse mode -------------------------------------------------------

ComputationTape::ComputationTape(const Tensor &output) : output_(output) {
  require_defined(output, "ComputationTape");
  std::unordered_set<const Node *> seen;
  std::vector<Node *> stack;
  if (const auto &node = Access::impl(output)->node) {
    stack.push_back(node.get());
    seen.insert(node.get());
    nodes_.push_back(node);
  }
  while (!stack.empty()) {
    Node *node = stack.back();
    stack.pop_back();
    for (const Tensor &input : node->inputs) {
      const auto &child = Access::impl(input)->node;
      if (child && seen.insert(child.get()).second) {
        nodes_.push_back(child);
        stack.push_back(child.get());
      }
    }
  }
  std::sort(nodes_.begin(), nodes_.end(),
            [](const auto &a, const auto &b) {
              return a->sequence > b->sequence;
            });
}

std::vector<Tensor> ComputationTape::leaves() const {
  std::vector<Tensor> out;
  std::unordered_set<const void *> seen;
  for (const auto &node : nodes_) {
    for (const Tensor &input : node->inputs) {
      if (input.is_leaf() && seen.insert(input.id()).second) {
        out.push_back(input);
      }
    }
  }
  return out;
}

std::vector<std::string_view> ComputationTape::replay_order() const {
  std::vector<std::string_view> names;
  names.reserve(nodes_.size());
  for (const auto &node : nodes_) names.push_back(node->name);
  return names;
}

std::unordered_map<const void *, Tensor>
ComputationTape::run(const Tensor &seed, bool create_graph) const {
  if (seed.shape() != output_.shape()) {
    throw ShapeError("backward: seed shape " + seed.shape().str() +
                     " vs output " + output_.shape().str());
  }
  GradModeGuard mode(create_graph);
  std::unordered_map<const void *, Tensor> adjoints;
  adjoints.emplace(output_.id(), seed);
  for (const auto &node : nodes_) {
    const auto it = adjoints.find(node->output_id);
    if (it == adjoints.end()) continue;
    NeedMask mask = 0;
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (node->inputs[i].requires_grad()) mask |= NeedMask{1} << i;
    }
    const Tensor upstream = it->second;
    const std::vector<Tensor> grads = node->adjoint(upstream, mask);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (!needs(mask, static_cast<int>(i)) || !grads[i].defined()) continue;
      const Tensor &input = node->inputs[i];
      auto [slot, inserted] = adjoints.try_emplace(input.id(), grads[i]);
      if (!inserted) slot->second = add(slot->second, grads[i]);
    }
  }
  return adjoints;
}

void backward(const Tensor &loss, bool create_graph) {
  require_defined(loss, "backward");
  if (loss.shape() != Shape{1, 1}) {
    throw ShapeError("backward: loss must be 1x1, got " + loss.shape().str());
  }
  if (!loss.requires_grad()) return;
  const ComputationTape tape(loss);
  const auto adjoints = tape.run(Tensor::scalar(1.0), create_graph);
  std::unordered_set<const void *> done;
  const auto accumulate = [&](const Tensor &leaf) {
    if (!leaf.is_leaf() || !leaf.requires_grad()) return;
    if (!done.insert(leaf.id()).second) return;
    const auto it = adjoints.find(leaf.id());
    if (it == adjoints.end()) return;
    TensorImpl &impl = *Access::impl(leaf);
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    const auto g = it->second.data();
    for (std::size_t i = 0; i < g.size(); ++i) impl.grad[i] += g[i];
  };
  accumulate(loss);
  for (const Tensor &leaf : tape.leaves()) accumulate(leaf);
}

std::vector<Tensor> grad(const Tensor &output, std::span<const Tensor> inputs,
                         bool create_graph) {
  require_defined(output, "grad");
  if (output.shape() != Shape{1, 1}) {
    throw ShapeError("grad: output must be 1x1, got " + output.shape().str());
  }
  std::vector<Tensor> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const Tensor &in : inputs) result.push_back(Tensor::zeros(in.shape()));
    return result;
  }
  const ComputationTape tape(output);
  const auto adjoints = tape.run(Tensor::scalar(1.0), create_graph);
  for (const Tensor &in : inputs) {
    const auto it = adjoints.find(in.id());
    result.push_back(it == adjoints.end() ? Tensor::zeros(in.shape())
                                          : it->second);
  }
  return result;
}

}  // namespace scd
