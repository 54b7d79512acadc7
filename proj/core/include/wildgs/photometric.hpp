#pragma once

#include "wildgs/tensor.hpp"

namespace wildgs {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM of two N x C x H x W images in [0, 1] with an 11x11 Gaussian
/// window (sigma 1.5) and zero padding.
ad::Tensor ssim(ad::Tape& tape, const ad::Tensor& a, const ad::Tensor& b);

/// lambda * mean|ref*M - render*M| + (1 - lambda) * (1 - SSIM(ref*M, render*M)).
/// `mask` is 1 x 1 x H x W; an undefined mask means M = 1 everywhere.
ad::Tensor masked_photometric_loss(ad::Tape& tape, const ad::Tensor& reference, const ad::Tensor& render,
                                   const ad::Tensor& mask, double lambda);

/// Mean over pixels of (1 - M)^2.
ad::Tensor mask_regularizer(ad::Tape& tape, const ad::Tensor& mask);

}  // namespace wildgs
