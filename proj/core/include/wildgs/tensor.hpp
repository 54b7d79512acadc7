#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wildgs::ad {

using Shape = std::vector<int>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage behind a Tensor handle. `grad` is empty until a backward pass
/// (or an optimizer) asks for it.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Shared handle to a dense row-major float64 array. Copies alias the same
/// storage; use clone() for a detached copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int size(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend class Tape;
  friend Tensor make_result(Shape shape);

  std::shared_ptr<Node> node_;
};

/// Fresh non-leaf-ready output tensor of the given shape (zero filled).
Tensor make_result(Shape shape);

/// Define-by-run record of operations. Ops given a disabled tape, or whose
/// inputs need no gradient, record nothing.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  /// True when an op over `inputs` must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;
  bool wants(std::span<const Tensor> inputs) const;

  /// Registers `out` as produced by an op whose gradient rule is `fn`.
  /// `fn` reads out->grad and accumulates into the inputs it captured.
  void record(std::string_view name, const Tensor& out, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every rule in reverse order.
  /// Intermediate gradients are reset first; leaf gradients accumulate.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string name;
    std::shared_ptr<Node> output;
    BackwardFn fn;
  };
  bool enabled_;
  std::vector<Entry> entries_;
};

/// Throws NumericFault naming `op` if any value of `t` is NaN/Inf.
void check_finite(const Tensor& t, std::string_view op);

}  // namespace wildgs::ad
