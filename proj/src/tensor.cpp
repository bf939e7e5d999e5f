#include "maevi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace maevi {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::accumulate_grad(std::span<const double> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(numel_of(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
  if (numel_of(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  // Explicit mapping of raw 64-bit draws keeps streams identical across
  // standard library implementations.
  for (auto& v : t.data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = lo + (hi - lo) * u;
  }
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(i) + " out of range for " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[i];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  const auto& s = impl_->shape;
  if (idx.size() != s.size()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " != tensor rank " +
                     std::to_string(s.size()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= s[axis]) throw ShapeError("index out of range for " + shape_str(s));
    off = off * s[axis] + i;
    ++axis;
  }
  return off;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

Tensor Tensor::grad_tensor() const {
  if (impl_->grad.empty()) return Tensor(impl_->shape, 0.0);
  return Tensor(impl_->shape, impl_->grad);
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }
Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Graph::Graph(const Tensor& loss) : loss_(loss) {
  if (!loss.defined() || loss.numel() != 1 || !loss.shape().empty()) {
    throw ShapeError("backward: loss must be a scalar tensor, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  // Iterative post-order DFS; order_ ends up inputs-before-outputs.
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  TensorImpl* root = loss_.impl_ptr().get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order_.push_back(node);
    stack.pop_back();
  }
}

void Graph::backward() {
  TensorImpl& root = loss_.impl();
  if (!root.requires_grad) return;
  const double one = 1.0;
  root.accumulate_grad(std::span<const double>(&one, 1));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->grad_fn) continue;
    t->grad_buffer();
    t->grad_fn->backward(*t);
    ++rules_run_;
  }
  // Discard the tape: intermediates drop their rules and gradients.
  for (TensorImpl* t : order_) {
    if (t->grad_fn) {
      t->grad_fn.reset();
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) {
  Graph g(loss);
  g.backward();
}

namespace detail {

void check_finite(const char* op, std::span<const double> data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NonFiniteError(std::string(op) + ": non-finite value at flat index " +
                           std::to_string(i));
    }
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  check_finite(op, data);
  Tensor out(std::move(shape), std::move(data));
  if (!grad_mode_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->name = op;
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl_ptr());
  node->backward = std::move(backward);
  out.impl().requires_grad = true;
  out.impl().grad_fn = std::move(node);
  return out;
}

}  // namespace detail

}  // namespace maevi
