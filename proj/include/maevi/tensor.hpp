#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maevi {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl;

/// Backward rule of one recorded operation. `inputs` are the operands the
/// rule propagates into; `backward` receives the finished output (value and
/// accumulated gradient) and must add its contributions to the inputs.
struct Node {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient has been accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  /// Adds `g` into this tensor's gradient, allocating it on first use.
  void accumulate_grad(std::span<const double> g);
  std::span<double> grad_buffer();
};

/// Dense row-major tensor of doubles.
///
/// A Tensor is a handle: copies share storage and gradient, like the
/// references a computation graph holds. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(std::shared_ptr<TensorImpl> impl);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v); }
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  template <typename... Idx>
  double& operator()(Idx... idx) {
    return impl_->data[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double operator()(Idx... idx) const {
    return impl_->data[offset({static_cast<std::size_t>(idx)...})];
  }
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient as a detached tensor; zeros when none was accumulated.
  Tensor grad_tensor() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  TensorImpl& impl() { return *impl_; }
  const TensorImpl& impl() const { return *impl_; }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Recorded computation reachable from a scalar loss, in topological order.
class Graph {
 public:
  explicit Graph(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule once, in
  /// reverse topological order. Intermediate gradients and the recorded
  /// rules are released afterwards; leaf gradients remain.
  void backward();
  std::size_t rules_run() const { return rules_run_; }

 private:
  Tensor loss_;
  std::vector<TensorImpl*> order_;
  std::size_t rules_run_ = 0;
};

void backward(const Tensor& loss);

namespace detail {

/// Builds an op result. When grad mode is on and any input requires a
/// gradient, the result records `backward` with the given inputs.
/// Throws NonFiniteError if `data` holds NaN or Inf.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

void check_finite(const char* op, std::span<const double> data);

}  // namespace detail

}  // namespace maevi
