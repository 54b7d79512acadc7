#pragma once

#include "wildgs/tensor.hpp"

namespace wildgs {

/// Pixels kept below this variance (in squared depth units) are treated as
/// constant and the loss is dropped.
inline constexpr double kDepthVarianceFloor = 1e-8;

struct DepthLossStatus {
  bool degenerate = false;  // fewer than 2 pixels or a constant input; loss is 0
  int pixels = 0;
};

/// 1 - Pearson correlation between rendered depth and the estimate over
/// pixels with mask > threshold (all pixels for an undefined mask). Only
/// the rendered depth receives a gradient. Depths are 1 x 1 x H x W.
ad::Tensor depth_pearson_loss(ad::Tape& tape, const ad::Tensor& rendered, const ad::Tensor& estimate,
                              const ad::Tensor& mask, double threshold, DepthLossStatus* status = nullptr);

}  // namespace wildgs
