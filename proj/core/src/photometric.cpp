#include "wildgs/photometric.hpp"

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"

namespace wildgs {

ad::Tensor ssim(ad::Tape& tape, const ad::Tensor& a, const ad::Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 4) throw ContractViolation("ssim: images must share an N x C x H x W shape");
  auto blur = [&](const ad::Tensor& x) { return ad::gaussian_blur(tape, x, kSsimWindow, kSsimSigma); };
  const ad::Tensor mu_a = blur(a), mu_b = blur(b);
  const ad::Tensor mu_aa = ad::square(tape, mu_a), mu_bb = ad::square(tape, mu_b);
  const ad::Tensor mu_ab = ad::mul(tape, mu_a, mu_b);
  const ad::Tensor var_a = ad::sub(tape, blur(ad::square(tape, a)), mu_aa);
  const ad::Tensor var_b = ad::sub(tape, blur(ad::square(tape, b)), mu_bb);
  const ad::Tensor cov = ad::sub(tape, blur(ad::mul(tape, a, b)), mu_ab);

  const ad::Tensor num = ad::mul(tape, ad::add_scalar(tape, ad::scale(tape, mu_ab, 2.0), kSsimC1),
                                 ad::add_scalar(tape, ad::scale(tape, cov, 2.0), kSsimC2));
  const ad::Tensor den = ad::mul(tape, ad::add_scalar(tape, ad::add(tape, mu_aa, mu_bb), kSsimC1),
                                 ad::add_scalar(tape, ad::add(tape, var_a, var_b), kSsimC2));
  return ad::mean(tape, ad::div(tape, num, den));
}

ad::Tensor masked_photometric_loss(ad::Tape& tape, const ad::Tensor& reference, const ad::Tensor& render,
                                   const ad::Tensor& mask, double lambda) {
  if (reference.shape() != render.shape()) throw ContractViolation("photometric loss: image shapes differ");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractViolation("photometric loss: lambda must be in [0, 1]");
  ad::Tensor ref = reference, out = render;
  if (mask.defined()) {
    ref = ad::mul_channels(tape, reference, mask);
    out = ad::mul_channels(tape, render, mask);
  }
  const ad::Tensor l1 = ad::mean(tape, ad::abs(tape, ad::sub(tape, ref, out)));
  const ad::Tensor dssim = ad::add_scalar(tape, ad::scale(tape, ssim(tape, ref, out), -1.0), 1.0);
  return ad::add(tape, ad::scale(tape, l1, lambda), ad::scale(tape, dssim, 1.0 - lambda));
}

ad::Tensor mask_regularizer(ad::Tape& tape, const ad::Tensor& mask) {
  return ad::mean(tape, ad::square(tape, ad::add_scalar(tape, ad::scale(tape, mask, -1.0), 1.0)));
}

}  // namespace wildgs
