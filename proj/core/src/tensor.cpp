#include "wildgs/tensor.hpp"

#include <cmath>
#include <sstream>

#include "wildgs/errors.hpp"

namespace wildgs::ad {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw ContractViolation("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw ContractViolation("tensor " + shape_str(shape) + " given " +
                            std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

int Tensor::size(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ContractViolation("axis out of range for shape " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->ensure_grad();
  } else {
    node_->grad.clear();
  }
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, false); }

Tensor make_result(Shape shape) {
  auto node = std::make_shared<Node>();
  node->value.assign(numel_of(shape), 0.0);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool Tape::wants(std::span<const Tensor> inputs) const {
  if (!enabled_) return false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void Tape::record(std::string_view name, const Tensor& out, BackwardFn fn) {
  out.node()->requires_grad = true;
  out.node()->leaf = false;
  entries_.push_back(Entry{std::string(name), out.node(), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractViolation("backward needs a scalar loss");
  }
  for (Entry& e : entries_) {
    e.output->grad.assign(e.output->value.size(), 0.0);
  }
  if (!loss.requires_grad()) return;
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn();
  }
}

void check_finite(const Tensor& t, std::string_view op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericFault("non-finite output from " + std::string(op));
    }
  }
}

}  // namespace wildgs::ad
