#pragma once

// Dense rank<=3 tensors with tape-ordered reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Every differentiable op
// records a backward closure on the node it creates; backward() walks all
// nodes reachable from a scalar loss in reverse creation order, so gradient
// accumulation order (and therefore the result bits) is fixed by the order
// in which the forward pass ran.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rose/error.hpp"

namespace rose {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool interior = false;
  bool backward_done = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const T>)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_seq();

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const T> data() const;
  // Writable storage. Only leaves may be written (optimizer updates, loading).
  std::span<T> mutable_data();
  T item() const;
  T operator()(std::size_t i) const;
  T operator()(std::size_t i, std::size_t j) const;
  T operator()(std::size_t i, std::size_t j, std::size_t k) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  // Empty span until a gradient has been accumulated.
  std::span<const T> grad() const;
  void zero_grad();

  // Accumulates d(this)/d(leaf) into every reachable requires_grad tensor.
  // `this` must be a scalar; a graph can be differentiated once.
  void backward();

  Tensor detach() const;
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape(), std::move(out), requires_grad() && is_leaf());
  }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  void check_defined() const;
  std::shared_ptr<detail::Node<T>> node_;
};

// Builds the result of a custom op. `backward` receives d(loss)/d(result) and
// accumulates into its inputs through grad_sink(); it is dropped when no input
// requires a gradient.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                         std::function<void(std::span<const T>)> backward);

// Gradient accumulator of an op input, or an empty span when the input does
// not participate in differentiation.
template <typename T>
std::span<T> grad_sink(const Tensor<T>& t);

// ---------------------------------------------------------------------------
// Operations. Feature maps are channels x length; waveforms are rank 1.

// x: Cin x Lin, w: Cout x Cin x K, b: Cout (may be undefined). No padding.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride);

// x: Cin x Lin, w: Cin x Cout x K, b: Cout. Lout = (Lin - 1) * stride + K.
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride);

// First half of the channels gated by the sigmoid of the second half.
template <typename T>
Tensor<T> glu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
// ln(max(x, floor)); zero gradient where the floor is active.
template <typename T>
Tensor<T> log_floor(const Tensor<T>& x, T floor);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);

// Binary elementwise ops. Operands must have equal shapes, or one of them is a
// scalar (numel 1), or one is C x 1 / 1 x L against a C x L partner.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// Frobenius / Euclidean norm over all entries; gradient 0 at the origin.
template <typename T>
Tensor<T> norm(const Tensor<T>& x);

// C x L -> C x 1.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// a: M x K, b: K x N.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
// Contiguous range [start, start + length) of the last axis.
template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t start, std::size_t length);
// Zero-extends the last axis to `length` (>= current length).
template <typename T>
Tensor<T> pad_last(const Tensor<T>& x, std::size_t length);

// One direction of an LSTM layer over a time-major sequence.
// x: L x Din, w_ih: 4H x Din, w_hh: 4H x H, bias: 4H, gate order i, f, g, o.
// Returns L x H; with reverse=true the recurrence runs from t = L-1 down to 0
// and output row t is the state after consuming x[t].
template <typename T>
Tensor<T> lstm_direction(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                         const Tensor<T>& bias, bool reverse);

}  // namespace rose
