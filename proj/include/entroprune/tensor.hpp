// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap shared handle onto a graph node. Ops executed while
// gradient recording is enabled and at least one input requires a gradient
// link their output to the inputs; backward() replays those links in exact
// reverse execution order. There is no general broadcasting: elementwise ops
// require equal shapes, and add_bias() adds a tensor whose shape is a suffix
// of the other operand's shape.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "entroprune/errors.hpp"

namespace entroprune {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::kFloat32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::kFloat64;
}

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

std::uint64_t next_sequence_id();

}  // namespace detail

/// True unless a NoGradGuard is active on the calling thread.
bool grad_enabled();

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Extent of `axis`; negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<const T> data() const;
  /// Writable view for initialisation and optimiser updates of leaves.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, outside any graph.
  Tensor detach() const;
  /// Deep copy that keeps the requires_grad flag but not the graph.
  Tensor clone() const;

  const char* op_name() const;
  std::uint64_t sequence_id() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// One recorded op, as seen by backward.
struct TapeEntry {
  std::string op;
  std::uint64_t seq = 0;
  std::vector<std::uint64_t> input_seqs;
};

/// Ordered record of the ops that produced a root tensor.
template <typename T>
class Tape {
 public:
  /// Collects every differentiable op reachable from `root`, in execution order.
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return nodes_.size(); }
  std::vector<TapeEntry> entries() const;
  /// Seeds d root / d root = 1 and runs each op's rule in reverse execution order.
  void run_backward(const Tensor<T>& root) const;

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
};

/// Populates grads of every requires_grad leaf reachable from a scalar loss.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Batched matmul over equal leading dims: [..., m, k] x [..., k, n].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
/// x + b where b.shape() equals the trailing dims of x.shape().
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
/// tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);
/// Normalises over the last dim then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, int axis);
/// Population variance along `axis`.
template <typename T>
Tensor<T> reduce_var(const Tensor<T>& x, int axis);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// Repeats x along a new leading dim of extent n.
template <typename T>
Tensor<T> expand_leading(const Tensor<T>& x, std::int64_t n);
/// Mean negative log-likelihood of integer labels under softmax(logits).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace entroprune
