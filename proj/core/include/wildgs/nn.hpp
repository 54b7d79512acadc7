#pragma once

#include <random>
#include <string>
#include <vector>

#include "wildgs/ops.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs::nn {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

class Linear {
 public:
  Linear() = default;
  /// He-uniform weights, zero bias.
  Linear(int in, int out, std::mt19937_64& rng, double gain = 1.0);

  ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const { return ad::linear(tape, x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;

  ad::Tensor weight;  // out x in
  ad::Tensor bias;    // out
};

class Conv2d {
 public:
  Conv2d() = default;
  /// Square kernel; padding keeps the size for stride 1 and halves it for stride 2.
  Conv2d(int in, int out, int kernel, int stride, std::mt19937_64& rng, double gain = 1.0);

  ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const {
    return ad::conv2d(tape, x, weight, bias, stride, padding);
  }
  void collect(const std::string& prefix, ParamList& out) const;

  ad::Tensor weight;  // out x in x k x k
  ad::Tensor bias;    // out
  int stride = 1;
  int padding = 0;
};

/// Linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& widths, std::mt19937_64& rng);

  ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  int in_features() const { return layers_.front().weight.size(1); }
  int out_features() const { return layers_.back().weight.size(0); }
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
};

/// Copies values from `src` into `dst` matched by name; both lists must
/// carry the same names and shapes.
void copy_values(const ParamList& src, ParamList& dst);

}  // namespace wildgs::nn
