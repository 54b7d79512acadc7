#include "wildgs/nn.hpp"

#include <cmath>
#include <map>

#include "wildgs/errors.hpp"

namespace wildgs::nn {

namespace {

ad::Tensor he_uniform(ad::Shape shape, int fan_in, double gain, std::mt19937_64& rng) {
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor t = ad::Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

}  // namespace

Linear::Linear(int in, int out, std::mt19937_64& rng, double gain)
    : weight(he_uniform({out, in}, in, gain, rng)), bias(ad::Tensor::zeros({out}, true)) {}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Conv2d::Conv2d(int in, int out, int kernel, int stride_, std::mt19937_64& rng, double gain)
    : weight(he_uniform({out, in, kernel, kernel}, in * kernel * kernel, gain, rng)),
      bias(ad::Tensor::zeros({out}, true)),
      stride(stride_),
      padding(kernel / 2) {}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Mlp::Mlp(const std::vector<int>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ContractViolation("mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(widths[i], widths[i + 1], rng, last ? 0.5 : 1.0);
  }
}

ad::Tensor Mlp::operator()(ad::Tape& tape, const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](tape, h);
    if (i + 1 < layers_.size()) h = ad::relu(tape, h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + "." + std::to_string(i), out);
}

void copy_values(const ParamList& src, ParamList& dst) {
  std::map<std::string, const ad::Tensor*> by_name;
  for (const auto& p : src) by_name[p.name] = &p.tensor;
  for (auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ContractViolation("missing parameter " + p.name);
    if (it->second->shape() != p.tensor.shape()) throw ContractViolation("shape mismatch for " + p.name);
    auto v = it->second->values();
    std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace wildgs::nn
