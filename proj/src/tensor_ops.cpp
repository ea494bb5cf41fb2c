#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "rose/tensor.hpp"

namespace rose {
namespace {

enum class Bcast { kSame, kScalar, kCol, kRow };

struct BinaryPlan {
  Shape out;
  Bcast a = Bcast::kSame;
  Bcast b = Bcast::kSame;
  std::size_t cols = 1;
};

Bcast classify(const Shape& s, const Shape& out) {
  if (s == out) return Bcast::kSame;
  if (shape_numel(s) == 1) return Bcast::kScalar;
  if (s.size() == 2 && out.size() == 2) {
    if (s[0] == out[0] && s[1] == 1) return Bcast::kCol;
    if (s[0] == 1 && s[1] == out[1]) return Bcast::kRow;
  }
  throw DimensionError("shapes " + shape_str(s) + " and " + shape_str(out) +
                       " are not broadcast-compatible");
}

BinaryPlan plan_binary(const Shape& a, const Shape& b) {
  BinaryPlan p;
  p.out = shape_numel(a) >= shape_numel(b) ? a : b;
  p.a = classify(a, p.out);
  p.b = classify(b, p.out);
  p.cols = p.out.size() == 2 ? p.out[1] : 1;
  return p;
}

inline std::size_t src_index(Bcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Bcast::kSame:
      return i;
    case Bcast::kScalar:
      return 0;
    case Bcast::kCol:
      return i / cols;
    case Bcast::kRow:
      return i % cols;
  }
  return i;
}

// Elementwise unary op; dfdx(x, y) gives the local derivative from input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
  auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  auto holder = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>(x.shape(), std::move(out), {x},
                           [x, holder, dfdx](std::span<const T> g) {
                             auto gx = grad_sink(x);
                             auto xs = x.data();
                             const auto& ys = *holder;
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xs[i], ys[i]);
                           });
}

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, F f, DA dfda, DB dfdb) {
  auto plan = plan_binary(a.shape(), b.shape());
  std::size_t n = shape_numel(plan.out);
  auto as = a.data();
  auto bs = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(as[src_index(plan.a, i, plan.cols)], bs[src_index(plan.b, i, plan.cols)]);
  }
  return make_op_result<T>(plan.out, std::move(out), {a, b},
                           [a, b, plan, dfda, dfdb](std::span<const T> g) {
                             auto as = a.data();
                             auto bs = b.data();
                             auto ga = grad_sink(a);
                             auto gb = grad_sink(b);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               auto ia = src_index(plan.a, i, plan.cols);
                               auto ib = src_index(plan.b, i, plan.cols);
                               if (!ga.empty()) ga[ia] += g[i] * dfda(as[ia], bs[ib]);
                               if (!gb.empty()) gb[ib] += g[i] * dfdb(as[ia], bs[ib]);
                             }
                           });
}

template <typename T>
T sigmoid_value(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  T e = std::exp(v);
  return e / (T(1) + e);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> log_floor(const Tensor<T>& x, T floor) {
  if (!(floor > T(0))) throw ConfigError("log floor must be positive");
  return unary(
      x, [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T v, T) { return v > floor ? T(1) / v : T(0); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(
      x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const double acc = kernels::sum(x.data().data(), x.numel());
  return make_op_result<T>(Shape{1}, {static_cast<T>(acc)}, {x}, [x](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw LengthError("mean of an empty tensor");
  const double acc = kernels::sum(x.data().data(), x.numel());
  const double n = static_cast<double>(x.numel());
  return make_op_result<T>(Shape{1}, {static_cast<T>(acc / n)}, {x},
                           [x, n](std::span<const T> g) {
                             auto gx = grad_sink(x);
                             const T step = static_cast<T>(static_cast<double>(g[0]) / n);
                             for (auto& v : gx) v += step;
                           });
}

template <typename T>
Tensor<T> norm(const Tensor<T>& x) {
  const double r = std::sqrt(kernels::dot(x.data().data(), x.data().data(), x.numel()));
  return make_op_result<T>(Shape{1}, {static_cast<T>(r)}, {x}, [x, r](std::span<const T> g) {
    if (r == 0.0) return;
    auto gx = grad_sink(x);
    auto xs = x.data();
    const double k = static_cast<double>(g[0]) / r;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += static_cast<T>(k * xs[i]);
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "global_avg_pool");
  const std::size_t c = x.dim(0), l = x.dim(1);
  if (l == 0) throw LengthError("global_avg_pool over zero-length sequence");
  auto xs = x.data();
  std::vector<T> out(c);
  for (std::size_t i = 0; i < c; ++i) {
    out[i] = static_cast<T>(kernels::sum(xs.data() + i * l, l) / static_cast<double>(l));
  }
  return make_op_result<T>(Shape{c, 1}, std::move(out), {x}, [x, c, l](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < c; ++i) {
      const T step = static_cast<T>(static_cast<double>(g[i]) / static_cast<double>(l));
      for (std::size_t t = 0; t < l; ++t) gx[i * l + t] += step;
    }
  });
}

template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "glu");
  const std::size_t c2 = x.dim(0), l = x.dim(1);
  if (c2 % 2 != 0) throw DimensionError("glu needs an even channel count, got " + std::to_string(c2));
  const std::size_t c = c2 / 2;
  auto xs = x.data();
  auto gate = std::make_shared<std::vector<T>>(c * l);
  std::vector<T> out(c * l);
  for (std::size_t i = 0; i < c * l; ++i) {
    (*gate)[i] = sigmoid_value(xs[c * l + i]);
    out[i] = xs[i] * (*gate)[i];
  }
  return make_op_result<T>(Shape{c, l}, std::move(out), {x}, [x, gate, c, l](std::span<const T> g) {
    auto gx = grad_sink(x);
    auto xs = x.data();
    const std::size_t n = c * l;
    for (std::size_t i = 0; i < n; ++i) {
      const T s = (*gate)[i];
      gx[i] += g[i] * s;
      gx[n + i] += g[i] * xs[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  auto as = a.data();
  auto bs = b.data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = as[i * k + p];
      if (av == T(0)) continue;
      const T* brow = bs.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result<T>(Shape{m, n}, std::move(out), {a, b},
                           [a, b, m, k, n](std::span<const T> g) {
                             auto as = a.data();
                             auto bs = b.data();
                             if (auto ga = grad_sink(a); !ga.empty()) {
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t p = 0; p < k; ++p) {
                                   ga[i * k + p] += static_cast<T>(
                                       kernels::dot(g.data() + i * n, bs.data() + p * n, n));
                                 }
                               }
                             }
                             if (auto gb = grad_sink(b); !gb.empty()) {
                               for (std::size_t i = 0; i < m; ++i) {
                                 const T* grow = g.data() + i * n;
                                 for (std::size_t p = 0; p < k; ++p) {
                                   const T av = as[i * k + p];
                                   T* gbrow = gb.data() + p * n;
                                   for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                                 }
                               }
                             }
                           });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xs = x.data();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xs[i * c + j];
  return make_op_result<T>(Shape{c, r}, std::move(out), {x}, [x, r, c](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op_result<T>(std::move(shape), std::move(out), {x}, [x](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p.shape(), 2, "concat");
  const std::size_t other = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != other) throw DimensionError("concat extents differ off-axis");
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : other;
  const std::size_t cols = axis == 0 ? other : total;
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto ps = p.data();
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        std::size_t oi = axis == 0 ? offset + i : i;
        std::size_t oj = axis == 0 ? j : offset + j;
        out[oi * cols + oj] = ps[i * pc + j];
      }
    offset += p.dim(axis);
  }
  return make_op_result<T>(Shape{rows, cols}, std::move(out), parts,
                           [parts, axis, cols](std::span<const T> g) {
                             std::size_t offset = 0;
                             for (const auto& p : parts) {
                               auto gp = grad_sink(p);
                               const std::size_t pr = p.dim(0), pc = p.dim(1);
                               if (!gp.empty()) {
                                 for (std::size_t i = 0; i < pr; ++i)
                                   for (std::size_t j = 0; j < pc; ++j) {
                                     std::size_t oi = axis == 0 ? offset + i : i;
                                     std::size_t oj = axis == 0 ? j : offset + j;
                                     gp[i * pc + j] += g[oi * cols + oj];
                                   }
                               }
                               offset += p.dim(axis);
                             }
                           });
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("slice of a rank-0 tensor");
  const std::size_t l = s.back();
  if (start + length > l) {
    throw LengthError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                      ") exceeds length " + std::to_string(l));
  }
  const std::size_t rows = shape_numel(s) / std::max<std::size_t>(l, 1);
  Shape out_shape = s;
  out_shape.back() = length;
  auto xs = x.data();
  std::vector<T> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xs.data() + r * l + start, length, out.data() + r * length);
  return make_op_result<T>(std::move(out_shape), std::move(out), {x},
                           [x, rows, l, start, length](std::span<const T> g) {
                             auto gx = grad_sink(x);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t t = 0; t < length; ++t)
                                 gx[r * l + start + t] += g[r * length + t];
                           });
}

template <typename T>
Tensor<T> pad_last(const Tensor<T>& x, std::size_t length) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("pad of a rank-0 tensor");
  const std::size_t l = s.back();
  if (length < l) throw LengthError("pad_last target shorter than input");
  const std::size_t rows = l == 0 ? 0 : shape_numel(s) / l;
  Shape out_shape = s;
  out_shape.back() = length;
  auto xs = x.data();
  std::vector<T> out(shape_numel(out_shape), T(0));
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xs.data() + r * l, l, out.data() + r * length);
  return make_op_result<T>(std::move(out_shape), std::move(out), {x},
                           [x, rows, l, length](std::span<const T> g) {
                             auto gx = grad_sink(x);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t t = 0; t < l; ++t) gx[r * l + t] += g[r * length + t];
                           });
}

#define ROSE_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                        \
  template Tensor<T> tanh(const Tensor<T>&);                                           \
  template Tensor<T> abs(const Tensor<T>&);                                            \
  template Tensor<T> square(const Tensor<T>&);                                         \
  template Tensor<T> log_floor(const Tensor<T>&, T);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                       \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sum(const Tensor<T>&);                                            \
  template Tensor<T> mean(const Tensor<T>&);                                           \
  template Tensor<T> norm(const Tensor<T>&);                                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                \
  template Tensor<T> glu(const Tensor<T>&);                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> transpose(const Tensor<T>&);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);               \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> pad_last(const Tensor<T>&, std::size_t);

ROSE_INSTANTIATE_OPS(float)
ROSE_INSTANTIATE_OPS(double)

}  // namespace rose
