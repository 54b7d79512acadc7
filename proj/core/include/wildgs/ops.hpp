#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wildgs/tensor.hpp"

/// Differentiable primitives. Every op takes the tape first, validates
/// shapes (ContractViolation), checks its output for NaN/Inf (NumericFault)
/// and records a backward rule when any input requires a gradient.
///
/// Layout conventions: images are N x C x H x W, matrices rows x cols,
/// all row-major.
namespace wildgs::ad {

// Elementwise, identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor add_scalar(Tape& tape, const Tensor& a, double s);
/// a * s where s is a differentiable scalar tensor.
Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);
/// Subgradient 0 at x == 0.
Tensor abs(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Matrices.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// x (n x in) times weight^T (weight: out x in) plus bias (out).
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
/// Picks columns of an n x k matrix.
Tensor select_cols(Tape& tape, const Tensor& x, std::span<const int> cols);
/// (x - offset) * inv_extent per column; offset/inv_extent are constants.
Tensor affine_cols(Tape& tape, const Tensor& x, std::span<const double> offset,
                   std::span<const double> inv_extent);
/// Repeats a length-d vector (shape {d} or {1,d}) into an n x d matrix.
Tensor broadcast_rows(Tape& tape, const Tensor& v, int n);
/// Row i is a[i] where take_a[i] != 0, else v. v has shape {d}.
Tensor where_rows(Tape& tape, std::span<const std::uint8_t> take_a, const Tensor& a,
                  const Tensor& v);

// Images (N x C x H x W).
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int padding);
/// Nearest-neighbour 2x upsampling; followed by conv2d it forms the
/// decoder's upsampling convolution.
Tensor upsample2x(Tape& tape, const Tensor& x);
Tensor avg_pool2x2(Tape& tape, const Tensor& x);
/// N x C x H x W -> N x C.
Tensor global_avg_pool(Tape& tape, const Tensor& x);
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_channels(Tape& tape, const Tensor& x, int begin, int end);
/// Picks image n of a batch: N x C x H x W -> C x H x W.
Tensor select_batch(Tape& tape, const Tensor& x, int n);
/// x (N x C x H x W) times m (N x 1 x H x W), m broadcast over channels.
Tensor mul_channels(Tape& tape, const Tensor& x, const Tensor& m);
/// Per-channel spatial mean / population variance: N x C x H x W -> N x C.
Tensor channel_mean(Tape& tape, const Tensor& x);
Tensor channel_var(Tape& tape, const Tensor& x);
/// Depthwise normalized Gaussian blur, zero padding, same-size output.
Tensor gaussian_blur(Tape& tape, const Tensor& x, int window, double sigma);

/// Bilinear sample of a C x H x W feature map at n points given as an
/// n x 2 matrix of (u, v) in [0,1] (u along width). Texel (i, j) has its
/// centre at ((j+0.5)/W, (i+0.5)/H). Coordinates outside clamp to the
/// border texel; the clamped axis then has zero coordinate gradient.
/// Returns n x C.
Tensor grid_sample(Tape& tape, const Tensor& feature_map, const Tensor& coords);

}  // namespace wildgs::ad
