// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace entroprune {

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32:
      return 4;
    case DType::kFloat64:
      return 8;
  }
  throw std::invalid_argument("unknown dtype");
}

const char* dtype_name(DType dtype) {
  return dtype == DType::kFloat32 ? "f32" : "f64";
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::uint64_t next_sequence_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
NodePtr<T> new_node(Shape shape, std::vector<T> data) {
  auto n = std::make_shared<detail::Node<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->seq = detail::next_sequence_id();
  return n;
}

template <typename T>
bool tracks(std::initializer_list<const Tensor<T>*> inputs) {
  if (!t_grad_enabled) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed value; links it into the graph when `track` is set.
template <typename T>
Tensor<T> finish(const char* op, Shape shape, std::vector<T> data, bool track,
                 std::vector<NodePtr<T>> inputs, std::function<void(detail::Node<T>&)> rule) {
  auto n = new_node<T>(std::move(shape), std::move(data));
  n->op = op;
  if (track) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(rule);
  }
  return Tensor<T>(std::move(n));
}

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

void require_defined(bool defined, const char* op) {
  if (!defined) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a.defined() && b.defined(), op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Extents before, along and after an axis.
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t length = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[k,n] += a[m,k]^T * g[m,n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* gi = g + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      T* cp = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* b, std::int64_t rows, std::int64_t cols) {
  std::vector<T> out(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = b[r * cols + c];
  }
  return out;
}

// c[m,k] += g[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  const auto bt = transposed(b, k, n);
  gemm_nn(g, bt.data(), c, m, n, k);
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
  }
  node_ = new_node<T>(std::move(shape), std::move(values));
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  require_defined(defined(), "shape");
  return node_->shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  return shape()[normalize_axis(axis, rank())];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  return static_cast<std::int64_t>(node_ ? node_->data.size() : 0);
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  require_defined(defined(), "data");
  return node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  require_defined(defined(), "mutable_data");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  require_defined(defined(), "set_requires_grad");
  node_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  require_defined(defined(), "grad");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  require_defined(defined(), "mutable_grad");
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), node_->data, requires_grad());
}

template <typename T>
const char* Tensor<T>::op_name() const {
  return node_ ? node_->op : "undefined";
}

template <typename T>
std::uint64_t Tensor<T>::sequence_id() const {
  return node_ ? node_->seq : 0;
}

// ---- Tape -----------------------------------------------------------------

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<NodePtr<T>> stack;
  if (root.defined() && root.node()->backward) stack.push_back(root.node());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) {
      if (in->backward && !seen.count(in.get())) stack.push_back(in);
    }
    tape.nodes_.push_back(std::move(n));
  }
  // Sequence ids are issued at creation, so sorting restores execution order.
  std::sort(tape.nodes_.begin(), tape.nodes_.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

template <typename T>
std::vector<TapeEntry> Tape<T>::entries() const {
  std::vector<TapeEntry> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    TapeEntry e{n->op, n->seq, {}};
    for (const auto& in : n->inputs) e.input_seqs.push_back(in->seq);
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void Tape<T>::run_backward(const Tensor<T>& root) const {
  root.node()->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& n = **it;
    if (n.grad.empty()) continue;
    n.backward(n);
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  require_defined(loss.defined(), "backward");
  if (loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward(): loss was not produced through the tape");
  }
  if (!loss.node()->backward) {
    // The loss is itself a leaf.
    auto copy = loss;
    copy.mutable_grad()[0] += T(1);
    return;
  }
  Tape<T>::record(loss).run_backward(loss);
}

// ---- ops ------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a.defined() && b.defined(), "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  const bool track = tracks<T>({&a, &b});
  return finish<T>("matmul", {m, n}, std::move(out), track, {a.node(), b.node()}, [m, k, n](detail::Node<T>& o) {
    auto& an = *o.inputs[0];
    auto& bn = *o.inputs[1];
    if (an.requires_grad) {
      an.ensure_grad();
      gemm_nt(o.grad.data(), bn.data.data(), an.grad.data(), m, k, n);
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      gemm_tn(an.data.data(), o.grad.data(), bn.grad.data(), m, k, n);
    }
  });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a.defined() && b.defined(), "bmm");
  const int r = a.rank();
  if (r < 2 || b.rank() != r || a.dim(-1) != b.dim(-2) ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw DimensionError("bmm: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const auto batch = a.numel() / (m * k);
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  shape.push_back(n);
  std::vector<T> out(static_cast<std::size_t>(batch * m * n), T(0));
  for (std::int64_t s = 0; s < batch; ++s) {
    gemm_nn(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n);
  }
  const bool track = tracks<T>({&a, &b});
  return finish<T>("bmm", std::move(shape), std::move(out), track, {a.node(), b.node()},
                   [m, k, n, batch](detail::Node<T>& o) {
                     auto& an = *o.inputs[0];
                     auto& bn = *o.inputs[1];
                     if (an.requires_grad) an.ensure_grad();
                     if (bn.requires_grad) bn.ensure_grad();
                     for (std::int64_t s = 0; s < batch; ++s) {
                       const T* g = o.grad.data() + s * m * n;
                       if (an.requires_grad) gemm_nt(g, bn.data.data() + s * k * n, an.grad.data() + s * m * k, m, k, n);
                       if (bn.requires_grad) gemm_tn(an.data.data() + s * m * k, g, bn.grad.data() + s * k * n, m, k, n);
                     }
                   });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  const bool track = tracks<T>({&a, &b});
  return finish<T>("add", a.shape(), std::move(out), track, {a.node(), b.node()}, [](detail::Node<T>& o) {
    for (auto& in : o.inputs) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) in->grad[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  const bool track = tracks<T>({&a, &b});
  return finish<T>("sub", a.shape(), std::move(out), track, {a.node(), b.node()}, [](detail::Node<T>& o) {
    auto& an = *o.inputs[0];
    auto& bn = *o.inputs[1];
    if (an.requires_grad) {
      an.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an.grad[i] += o.grad[i];
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn.grad[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  const bool track = tracks<T>({&a, &b});
  return finish<T>("mul", a.shape(), std::move(out), track, {a.node(), b.node()}, [](detail::Node<T>& o) {
    auto& an = *o.inputs[0];
    auto& bn = *o.inputs[1];
    if (an.requires_grad) {
      an.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an.grad[i] += o.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn.grad[i] += o.grad[i] * an.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  require_defined(x.defined(), "scale");
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  const bool track = tracks<T>({&x});
  return finish<T>("scale", x.shape(), std::move(out), track, {x.node()}, [factor](detail::Node<T>& o) {
    auto& in = *o.inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_defined(x.defined() && bias.defined(), "add_bias");
  const auto& xs = x.shape();
  const auto& bs = bias.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    throw DimensionError("add_bias: bias shape " + shape_string(bs) + " is not a suffix of " + shape_string(xs));
  }
  const auto bn = static_cast<std::size_t>(bias.numel());
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); i += bn) {
    for (std::size_t j = 0; j < bn; ++j) out[i + j] += bd[j];
  }
  const bool track = tracks<T>({&x, &bias});
  return finish<T>("add_bias", xs, std::move(out), track, {x.node(), bias.node()}, [bn](detail::Node<T>& o) {
    auto& xn = *o.inputs[0];
    auto& b = *o.inputs[1];
    if (xn.requires_grad) {
      xn.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) xn.grad[i] += o.grad[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); i += bn) {
        for (std::size_t j = 0; j < bn; ++j) b.grad[j] += o.grad[i + j];
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  require_defined(x.defined(), "gelu");
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) {
    const T t = std::tanh(kC * (v + kA * v * v * v));
    v = T(0.5) * v * (T(1) + t);
  }
  const bool track = tracks<T>({&x});
  return finish<T>("gelu", x.shape(), std::move(out), track, {x.node()}, [](detail::Node<T>& o) {
    auto& in = *o.inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const T v = in.data[i];
      const T t = std::tanh(kC * (v + kA * v * v * v));
      const T dt = (T(1) - t * t) * kC * (T(1) + T(3) * kA * v * v);
      in.grad[i] += o.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  require_defined(x.defined(), "softmax");
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      T* base = out.data() + o * s.length * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < s.length; ++j) mx = std::max(mx, base[j * s.inner]);
      T total = 0;
      for (std::int64_t j = 0; j < s.length; ++j) {
        base[j * s.inner] = std::exp(base[j * s.inner] - mx);
        total += base[j * s.inner];
      }
      for (std::int64_t j = 0; j < s.length; ++j) base[j * s.inner] /= total;
    }
  }
  const bool track = tracks<T>({&x});
  return finish<T>("softmax", x.shape(), std::move(out), track, {x.node()}, [s](detail::Node<T>& o) {
    auto& in = *o.inputs[0];
    in.ensure_grad();
    for (std::int64_t a = 0; a < s.outer; ++a) {
      for (std::int64_t b = 0; b < s.inner; ++b) {
        const std::int64_t base = a * s.length * s.inner + b;
        T dot = 0;
        for (std::int64_t j = 0; j < s.length; ++j) {
          const auto idx = base + j * s.inner;
          dot += o.grad[idx] * o.data[idx];
        }
        for (std::int64_t j = 0; j < s.length; ++j) {
          const auto idx = base + j * s.inner;
          in.grad[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  require_defined(x.defined() && gamma.defined() && beta.defined(), "layer_norm");
  const auto d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  }
  const auto rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<T> out(xd.size());
  std::vector<T> xhat(xd.size());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const T teps = static_cast<T>(eps);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * d;
    T mean = 0;
    for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + teps);
    rstd[r] = rs;
    for (std::int64_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  const bool track = tracks<T>({&x, &gamma, &beta});
  return finish<T>(
      "layer_norm", x.shape(), std::move(out), track, {x.node(), gamma.node(), beta.node()},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& o) {
        auto& xn = *o.inputs[0];
        auto& gn = *o.inputs[1];
        auto& bn = *o.inputs[2];
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xn.requires_grad) xn.ensure_grad();
        std::vector<T> dxhat(static_cast<std::size_t>(d));
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* g = o.grad.data() + r * d;
          const T* h = xhat.data() + r * d;
          T mean_dh = 0;
          T mean_dh_h = 0;
          for (std::int64_t j = 0; j < d; ++j) {
            if (gn.requires_grad) gn.grad[j] += g[j] * h[j];
            if (bn.requires_grad) bn.grad[j] += g[j];
            dxhat[j] = g[j] * gn.data[j];
            mean_dh += dxhat[j];
            mean_dh_h += dxhat[j] * h[j];
          }
          if (!xn.requires_grad) continue;
          mean_dh /= static_cast<T>(d);
          mean_dh_h /= static_cast<T>(d);
          for (std::int64_t j = 0; j < d; ++j) {
            xn.grad[r * d + j] += rstd[r] * (dxhat[j] - mean_dh - h[j] * mean_dh_h);
          }
        }
      });
}

namespace {

Shape drop_axis(const Shape& s, int axis) {
  Shape out = s;
  out.erase(out.begin() + axis);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, int axis) {
  require_defined(x.defined(), "reduce_mean");
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(s.outer * s.inner), T(0));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t j = 0; j < s.length; ++j) {
      for (std::int64_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.length + j) * s.inner + i];
    }
  }
  for (auto& v : out) v /= static_cast<T>(s.length);
  const bool track = tracks<T>({&x});
  return finish<T>("reduce_mean", drop_axis(x.shape(), ax), std::move(out), track, {x.node()},
                   [s](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     const T inv = T(1) / static_cast<T>(s.length);
                     for (std::int64_t a = 0; a < s.outer; ++a) {
                       for (std::int64_t j = 0; j < s.length; ++j) {
                         for (std::int64_t i = 0; i < s.inner; ++i) {
                           in.grad[(a * s.length + j) * s.inner + i] += o.grad[a * s.inner + i] * inv;
                         }
                       }
                     }
                   });
}

template <typename T>
Tensor<T> reduce_var(const Tensor<T>& x, int axis) {
  require_defined(x.defined(), "reduce_var");
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto xd = x.data();
  std::vector<T> mean(static_cast<std::size_t>(s.outer * s.inner), T(0));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t j = 0; j < s.length; ++j) {
      for (std::int64_t i = 0; i < s.inner; ++i) mean[o * s.inner + i] += xd[(o * s.length + j) * s.inner + i];
    }
  }
  for (auto& v : mean) v /= static_cast<T>(s.length);
  std::vector<T> out(mean.size(), T(0));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t j = 0; j < s.length; ++j) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const T c = xd[(o * s.length + j) * s.inner + i] - mean[o * s.inner + i];
        out[o * s.inner + i] += c * c;
      }
    }
  }
  for (auto& v : out) v /= static_cast<T>(s.length);
  const bool track = tracks<T>({&x});
  return finish<T>("reduce_var", drop_axis(x.shape(), ax), std::move(out), track, {x.node()},
                   [s, mean = std::move(mean)](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     const T k = T(2) / static_cast<T>(s.length);
                     for (std::int64_t a = 0; a < s.outer; ++a) {
                       for (std::int64_t j = 0; j < s.length; ++j) {
                         for (std::int64_t i = 0; i < s.inner; ++i) {
                           const auto idx = (a * s.length + j) * s.inner + i;
                           in.grad[idx] += o.grad[a * s.inner + i] * k * (in.data[idx] - mean[a * s.inner + i]);
                         }
                       }
                     }
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x.defined(), "sum");
  T total = 0;
  for (T v : x.data()) total += v;
  const bool track = tracks<T>({&x});
  return finish<T>("sum", Shape{}, std::vector<T>{total}, track, {x.node()}, [](detail::Node<T>& o) {
    auto& in = *o.inputs[0];
    in.ensure_grad();
    for (auto& g : in.grad) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  require_defined(x.defined(), "transpose");
  const int r = x.rank();
  const int a0 = normalize_axis(axis0, r);
  const int a1 = normalize_axis(axis1, r);
  Shape out_shape = x.shape();
  std::swap(out_shape[a0], out_shape[a1]);
  // Input strides permuted into output axis order.
  std::vector<std::int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
  std::vector<std::int64_t> strides = in_strides;
  std::swap(strides[a0], strides[a1]);
  const auto n = x.numel();
  // perm[k] = input flat index of output flat index k
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t src = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    perm[k] = src;
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) {
        src += strides[d];
        break;
      }
      src -= strides[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) out[k] = xd[perm[k]];
  const bool track = tracks<T>({&x});
  return finish<T>("transpose", std::move(out_shape), std::move(out), track, {x.node()},
                   [perm = std::move(perm)](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     for (std::size_t k = 0; k < perm.size(); ++k) in.grad[perm[k]] += o.grad[k];
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined(x.defined(), "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const bool track = tracks<T>({&x});
  return finish<T>("reshape", std::move(shape), std::move(out), track, {x.node()}, [](detail::Node<T>& o) {
    auto& in = *o.inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  require_defined(x.defined(), "slice");
  const int ax = normalize_axis(axis, x.rank());
  if (start < 0 || length < 0 || start + length > x.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of extent " + std::to_string(x.shape()[ax]));
  }
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  const auto xd = x.data();
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(s.outer * length * s.inner));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    const auto first = xd.begin() + (o * s.length + start) * s.inner;
    out.insert(out.end(), first, first + length * s.inner);
  }
  const bool track = tracks<T>({&x});
  return finish<T>("slice", std::move(out_shape), std::move(out), track, {x.node()},
                   [s, start, length](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     const auto chunk = length * s.inner;
                     for (std::int64_t a = 0; a < s.outer; ++a) {
                       const auto dst = (a * s.length + start) * s.inner;
                       for (std::int64_t i = 0; i < chunk; ++i) in.grad[dst + i] += o.grad[a * chunk + i];
                     }
                   });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  require_defined(parts[0].defined(), "concat");
  const int ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& p : parts) {
    require_defined(p.defined(), "concat");
    Shape a = p.shape();
    Shape b = parts[0].shape();
    if (p.rank() != parts[0].rank()) throw DimensionError("concat: rank mismatch");
    a[ax] = b[ax] = 0;
    if (a != b) throw DimensionError("concat: shapes differ off the concat axis");
    lengths.push_back(p.shape()[ax]);
    out_shape[ax] += p.shape()[ax];
  }
  const auto s = split_at(out_shape, ax);
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto chunk = lengths[p] * s.inner;
      const auto first = parts[p].data().begin() + o * chunk;
      out.insert(out.end(), first, first + chunk);
    }
  }
  bool track = false;
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    track = track || tracks<T>({&p});
    inputs.push_back(p.node());
  }
  return finish<T>("concat", std::move(out_shape), std::move(out), track, std::move(inputs),
                   [s, lengths](detail::Node<T>& o) {
                     std::int64_t offset = 0;
                     for (std::int64_t a = 0; a < s.outer; ++a) {
                       for (std::size_t p = 0; p < o.inputs.size(); ++p) {
                         const auto chunk = lengths[p] * s.inner;
                         auto& in = *o.inputs[p];
                         if (in.requires_grad) {
                           in.ensure_grad();
                           for (std::int64_t i = 0; i < chunk; ++i) in.grad[a * chunk + i] += o.grad[offset + i];
                         }
                         offset += chunk;
                       }
                     }
                   });
}

template <typename T>
Tensor<T> expand_leading(const Tensor<T>& x, std::int64_t n) {
  require_defined(x.defined(), "expand_leading");
  if (n < 1) throw DimensionError("expand_leading: extent must be positive");
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(n * x.numel()));
  for (std::int64_t i = 0; i < n; ++i) out.insert(out.end(), x.data().begin(), x.data().end());
  const bool track = tracks<T>({&x});
  return finish<T>("expand_leading", std::move(out_shape), std::move(out), track, {x.node()},
                   [n](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     const auto m = in.data.size();
                     for (std::int64_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < m; ++j) in.grad[j] += o.grad[i * m + j];
                     }
                   });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_defined(logits.defined(), "cross_entropy");
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size())) {
    throw DimensionError("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto batch = logits.dim(0);
  const auto classes = logits.dim(1);
  const auto ld = logits.data();
  std::vector<T> probs(ld.size());
  T total = 0;
  for (std::int64_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes) throw DimensionError("cross_entropy: label out of range");
    const T* row = ld.data() + b * classes;
    const T mx = *std::max_element(row, row + classes);
    T z = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - mx);
      z += probs[b * classes + c];
    }
    for (std::int64_t c = 0; c < classes; ++c) probs[b * classes + c] /= z;
    total += std::log(z) + mx - row[y];
  }
  total /= static_cast<T>(batch);
  std::vector<int> y(labels.begin(), labels.end());
  const bool track = tracks<T>({&logits});
  return finish<T>("cross_entropy", Shape{}, std::vector<T>{total}, track, {logits.node()},
                   [batch, classes, probs = std::move(probs), y = std::move(y)](detail::Node<T>& o) {
                     auto& in = *o.inputs[0];
                     in.ensure_grad();
                     const T g = o.grad[0] / static_cast<T>(batch);
                     for (std::int64_t b = 0; b < batch; ++b) {
                       for (std::int64_t c = 0; c < classes; ++c) {
                         const T target = c == y[b] ? T(1) : T(0);
                         in.grad[b * classes + c] += g * (probs[b * classes + c] - target);
                       }
                     }
                   });
}

#define ENTROPRUNE_INSTANTIATE(T)                                                                     \
  template class Tensor<T>;                                                                           \
  template class Tape<T>;                                                                             \
  template void backward(const Tensor<T>&);                                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> gelu(const Tensor<T>&);                                                          \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);        \
  template Tensor<T> reduce_mean(const Tensor<T>&, int);                                              \
  template Tensor<T> reduce_var(const Tensor<T>&, int);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                      \
  template Tensor<T> expand_leading(const Tensor<T>&, std::int64_t);                                  \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

ENTROPRUNE_INSTANTIATE(float)
ENTROPRUNE_INSTANTIATE(double)

#undef ENTROPRUNE_INSTANTIATE

}  // namespace entroprune
