#pragma once

#include <random>
#include <string>

#include "wildgs/nn.hpp"

namespace wildgs {

struct ParsingOutput {
  ad::Tensor mask;        // 1 x 1 x H x W, in (0, 1)
  ad::Tensor bottleneck;  // 1 x C x H/8 x W/8
};

/// Convolutional encoder with three stride-2 stages and a decoder with skip
/// connections ending in a sigmoid visibility head. Input images are
/// 1 x 3 x H x W with H and W divisible by 8.
class ParsingNet {
 public:
  ParsingNet() = default;
  explicit ParsingNet(std::mt19937_64& rng);

  ParsingOutput forward(ad::Tape& tape, const ad::Tensor& image) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  int bottleneck_channels() const { return down3_.weight.size(0); }
  /// The 1x1 visibility head; its bias sets the initial mask level.
  nn::Conv2d& head() { return head_; }

 private:
  nn::Conv2d enc0_, down1_, down2_, down3_, up2_, up1_, up0_, head_;
};

ad::Tensor predict_mask(ad::Tape& tape, const ad::Tensor& image, const ParsingNet& net);

}  // namespace wildgs
