#include "wildgs/depth_loss.hpp"

#include <cmath>
#include <vector>

#include "wildgs/errors.hpp"

namespace wildgs {

ad::Tensor depth_pearson_loss(ad::Tape& tape, const ad::Tensor& rendered, const ad::Tensor& estimate,
                              const ad::Tensor& mask, double threshold, DepthLossStatus* status) {
  if (rendered.shape() != estimate.shape()) throw ContractViolation("depth loss: depth shapes differ");
  if (mask.defined() && mask.numel() != rendered.numel()) throw ContractViolation("depth loss: mask size differs");

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < rendered.numel(); ++i)
    if (!mask.defined() || mask[i] > threshold) kept.push_back(i);

  DepthLossStatus local;
  local.pixels = static_cast<int>(kept.size());
  ad::Tensor out = ad::make_result({});
  const double n = static_cast<double>(kept.size());
  double mx = 0.0, my = 0.0, vx = 0.0, vy = 0.0, cov = 0.0;
  if (kept.size() >= 2) {
    for (std::size_t i : kept) {
      mx += rendered[i];
      my += estimate[i];
    }
    mx /= n;
    my /= n;
    for (std::size_t i : kept) {
      const double dx = rendered[i] - mx, dy = estimate[i] - my;
      vx += dx * dx;
      vy += dy * dy;
      cov += dx * dy;
    }
    vx /= n;
    vy /= n;
    cov /= n;
  }
  if (kept.size() < 2 || vx < kDepthVarianceFloor || vy < kDepthVarianceFloor) {
    local.degenerate = true;
    if (status) *status = local;
    return out;
  }
  if (status) *status = local;

  const double sx = std::sqrt(vx), sy = std::sqrt(vy);
  const double rho = cov / (sx * sy);
  out.mutable_values()[0] = 1.0 - rho;
  ad::check_finite(out, "depth_pearson_loss");

  if (tape.wants({&rendered})) {
    tape.record("depth_pearson_loss", out,
                [kept = std::move(kept), r = rendered.node(), e = estimate.node(), o = out.node(), mx, my, sx, sy,
                 rho, n] {
                  r->ensure_grad();
                  const double g = o->grad[0];
                  for (std::size_t i : kept) {
                    const double dx = r->value[i] - mx, dy = e->value[i] - my;
                    const double drho = dy / (n * sx * sy) - rho * dx / (n * sx * sx);
                    r->grad[i] -= g * drho;
                  }
                });
  }
  return out;
}

}  // namespace wildgs
