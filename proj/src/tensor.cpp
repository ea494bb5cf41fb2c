#include "rose/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace rose {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.size() > 3) throw DimensionError("tensor rank exceeds 3: " + shape_str(shape));
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->seq = detail::next_seq();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
void Tensor<T>::check_defined() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  check_defined();
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for " + shape_str(s));
  return s[axis];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  check_defined();
  return node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  check_defined();
  if (node_->interior) throw std::logic_error("cannot write to a non-leaf tensor");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::operator()(std::size_t i) const {
  return data()[i];
}

template <typename T>
T Tensor<T>::operator()(std::size_t i, std::size_t j) const {
  return data()[i * node_->shape[1] + j];
}

template <typename T>
T Tensor<T>::operator()(std::size_t i, std::size_t j, std::size_t k) const {
  return data()[(i * node_->shape[1] + j) * node_->shape[2] + k];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  check_defined();
  return node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  check_defined();
  if (node_->interior) throw std::logic_error("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  check_defined();
  return !node_->interior;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  check_defined();
  return !node_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  check_defined();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  check_defined();
  node_->grad.clear();
}

template <typename T>
void Tensor<T>::backward() {
  check_defined();
  if (numel() != 1) {
    throw std::logic_error("backward() requires a scalar loss, got " + shape_str(shape()));
  }
  if (node_->backward_done) throw std::logic_error("backward() called twice on the same graph");
  if (!node_->requires_grad) return;

  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (n->backward_done && n != node_.get()) {
      throw std::logic_error("backward() through a graph that was already differentiated");
    }
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq > b->seq; });

  node_->grad_buffer()[0] += T(1);
  for (auto* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(n->grad);
  }
  // Release the graph only after every node has been visited; dropping a
  // parent list may free nodes that are still in `order`.
  std::vector<std::shared_ptr<detail::Node<T>>> released;
  std::vector<std::function<void(std::span<const T>)>> closures;
  for (auto* n : order) {
    if (!n->interior) continue;
    closures.push_back(std::move(n->backward_fn));
    n->backward_fn = nullptr;
    for (auto& p : n->parents) released.push_back(std::move(p));
    n->parents.clear();
    n->backward_done = true;
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  check_defined();
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                         std::function<void(std::span<const T>)> backward) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  auto& node = *out.node();
  node.interior = true;
  bool any = false;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) {
      any = true;
      node.parents.push_back(in.node());
    }
  }
  if (any) {
    node.requires_grad = true;
    node.backward_fn = std::move(backward);
  }
  return out;
}

template <typename T>
std::span<T> grad_sink(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.node()->grad_buffer();
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                      std::function<void(std::span<const float>)>);
template Tensor<double> make_op_result(Shape, std::vector<double>,
                                       const std::vector<Tensor<double>>&,
                                       std::function<void(std::span<const double>)>);
template std::span<float> grad_sink(const Tensor<float>&);
template std::span<double> grad_sink(const Tensor<double>&);

}  // namespace rose
