#include "wildgs/rasterizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"
#include "wildgs/sh.hpp"

namespace wildgs {
namespace {

constexpr int kMaxBasis = sh_basis_count(kMaxShDegree);

struct Prepared {
  bool visible = false;
  Eigen::Vector4d q_hat;
  double q_norm = 1.0;
  Eigen::Matrix3d rot;    // from the normalized quaternion
  Eigen::Vector3d scale;  // exp(log_scale)
  Eigen::Matrix3d cov3d;
  Eigen::Vector3d view;  // view-space centre
  Eigen::Matrix<double, 2, 3> T;  // J * W
  double conic_a = 0, conic_b = 0, conic_c = 0;
  Eigen::Vector2d center;
  double opacity = 0;
  double q_limit = 0;
  Eigen::Vector3d raw_color;  // before the clamp at zero
  Eigen::Vector3d color;
  Eigen::Vector3d dir;
  double dir_len = 1.0;
  double basis[kMaxBasis];
  int px0 = 0, px1 = -1, py0 = 0, py1 = -1;  // inclusive pixel bounds
};

// Compositing-time copy of a visible Gaussian, kept small for cache reuse.
struct Splat {
  double cx, cy, a, b, c, opacity, q_limit, depth;
  double color[3];
  int id;
};

struct Contributor {
  int splat;
  double alpha, falloff, T;
};

struct Frame {
  int width, height, sh_degree, basis;
  Camera camera;
  RasterSettings settings;
  std::vector<Prepared> prep;
  std::vector<Splat> splats;               // visible, front to back
  std::vector<int> all;                    // 0 .. splats.size() - 1
  std::vector<std::vector<int>> tile_ids;  // per tile, indices into splats in depth order
  int tiles_x = 0, tiles_y = 0;
  // Per-pixel contributors recorded by the forward pass for backward.
  std::vector<Contributor> contributors;
  std::vector<int> pixel_begin;
};

void prepare(Frame& f, const GaussianCloud& cloud, const ad::Tensor& sh) {
  const std::size_t n = cloud.size();
  f.prep.assign(n, Prepared{});
  const auto mu = cloud.means.values();
  const auto ls = cloud.log_scales.values();
  const auto rq = cloud.rotations.values();
  const auto op = cloud.opacity_logits.values();
  const auto coeffs = sh.values();
  const Eigen::Vector3d cam_center = f.camera.center();
  const Camera& cam = f.camera;

  for (std::size_t i = 0; i < n; ++i) {
    Prepared& p = f.prep[i];
    const Eigen::Vector3d mean(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]);
    p.view = cam.to_view(mean);
    if (!(p.view.z() > f.settings.near)) continue;

    const Eigen::Vector4d q(rq[4 * i], rq[4 * i + 1], rq[4 * i + 2], rq[4 * i + 3]);
    p.q_norm = q.norm();
    if (!(p.q_norm > 0.0)) throw ContractViolation("rasterize: zero quaternion at gaussian " + std::to_string(i));
    p.q_hat = q / p.q_norm;
    p.rot = rotation_from_quaternion(p.q_hat);
    p.scale = Eigen::Vector3d(std::exp(ls[3 * i]), std::exp(ls[3 * i + 1]), std::exp(ls[3 * i + 2]));
    const Eigen::Matrix3d M = p.rot * p.scale.asDiagonal();
    p.cov3d = M * M.transpose();

    const double iz = 1.0 / p.view.z();
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx * iz, 0.0, -cam.fx * p.view.x() * iz * iz,  //
        0.0, cam.fy * iz, -cam.fy * p.view.y() * iz * iz;
    p.T = J * cam.rotation;
    Eigen::Matrix2d cov2d = p.T * p.cov3d * p.T.transpose();
    cov2d(0, 0) += kCovarianceFloor;
    cov2d(1, 1) += kCovarianceFloor;
    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
    if (!(det >= kMinDeterminant)) continue;
    p.conic_a = cov2d(1, 1) / det;
    p.conic_b = -cov2d(0, 1) / det;
    p.conic_c = cov2d(0, 0) / det;
    p.center = cam.project_view(p.view);

    p.opacity = sigmoid(op[i]);
    if (!(p.opacity >= kMinAlpha)) continue;
    // Beyond q_limit alpha is below kMinAlpha; the margin keeps the cull
    // conservative against rounding in the per-pixel test.
    p.q_limit = std::min(kPowerCutoff, 2.0 * std::log(p.opacity / kMinAlpha) + 1e-6);
    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = std::sqrt(p.q_limit * lambda_max) + 1.0;
    p.px0 = std::max(0, static_cast<int>(std::ceil(p.center.x() - radius - 0.5)));
    p.px1 = std::min(f.width - 1, static_cast<int>(std::floor(p.center.x() + radius - 0.5)));
    p.py0 = std::max(0, static_cast<int>(std::ceil(p.center.y() - radius - 0.5)));
    p.py1 = std::min(f.height - 1, static_cast<int>(std::floor(p.center.y() + radius - 0.5)));

    const Eigen::Vector3d v = mean - cam_center;
    p.dir_len = v.norm();
    p.dir = p.dir_len > 0.0 ? Eigen::Vector3d(v / p.dir_len) : Eigen::Vector3d(0, 0, 1);
    sh_basis(f.sh_degree, p.dir, p.basis);
    const double* c = coeffs.data() + i * 3 * f.basis;
    p.raw_color = Eigen::Vector3d::Constant(0.5);
    for (int b = 0; b < f.basis; ++b)
      for (int ch = 0; ch < 3; ++ch) p.raw_color[ch] += p.basis[b] * c[3 * b + ch];
    p.color = p.raw_color.cwiseMax(0.0);
    p.visible = true;
  }

  std::vector<int> order;
  for (std::size_t i = 0; i < n; ++i)
    if (f.prep[i].visible) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = f.prep[a].view.z(), db = f.prep[b].view.z();
    return da < db || (da == db && a < b);
  });
  f.splats.clear();
  f.splats.reserve(order.size());
  for (int id : order) {
    const Prepared& p = f.prep[id];
    f.splats.push_back({p.center.x(), p.center.y(), p.conic_a, p.conic_b, p.conic_c, p.opacity, p.q_limit, p.view.z(),
                        {p.color[0], p.color[1], p.color[2]}, id});
  }
  f.all.resize(f.splats.size());
  std::iota(f.all.begin(), f.all.end(), 0);

  if (f.settings.tiled) {
    const int ts = f.settings.tile_size;
    f.tiles_x = (f.width + ts - 1) / ts;
    f.tiles_y = (f.height + ts - 1) / ts;
    f.tile_ids.assign(static_cast<std::size_t>(f.tiles_x) * f.tiles_y, {});
    for (std::size_t k = 0; k < f.splats.size(); ++k) {
      const Prepared& p = f.prep[f.splats[k].id];
      if (p.px1 < p.px0 || p.py1 < p.py0) continue;
      for (int ty = p.py0 / ts; ty <= p.py1 / ts; ++ty)
        for (int tx = p.px0 / ts; tx <= p.px1 / ts; ++tx)
          f.tile_ids[ty * f.tiles_x + tx].push_back(static_cast<int>(k));
    }
  }
}

const std::vector<int>& pixel_list(const Frame& f, int x, int y) {
  if (!f.settings.tiled) return f.all;
  const int ts = f.settings.tile_size;
  return f.tile_ids[(y / ts) * f.tiles_x + (x / ts)];
}

struct PixelResult {
  Eigen::Vector3d color;
  double depth, accum, transmittance;
};

inline double power_at(const Splat& s, double dx, double dy) {
  return s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
}

// Composites one pixel front to back; appends its contributors when
// `record` is given.
PixelResult shade(const Frame& f, int x, int y, std::vector<Contributor>* record) {
  const double px = x + 0.5, py = y + 0.5;
  double T = 1.0, D = 0.0, A = 0.0;
  double C[3] = {0.0, 0.0, 0.0};
  const Splat* splats = f.splats.data();
  for (int k : pixel_list(f, x, y)) {
    const Splat& s = splats[k];
    const double dx = px - s.cx, dy = py - s.cy;
    const double q = power_at(s, dx, dy);
    if (q > s.q_limit) continue;
    const double falloff = std::exp(-0.5 * q);
    const double alpha = s.opacity * falloff;
    if (alpha < kMinAlpha) continue;
    if (record) record->push_back({k, alpha, falloff, T});
    const double w = alpha * T;
    C[0] += w * s.color[0];
    C[1] += w * s.color[1];
    C[2] += w * s.color[2];
    D += w * s.depth;
    A += w;
    T *= 1.0 - alpha;
    if (T < kTransmittanceCutoff) break;
  }
  const Eigen::Vector3d& bg = f.settings.background;
  return {Eigen::Vector3d(C[0] + T * bg[0], C[1] + T * bg[1], C[2] + T * bg[2]), D, A, T};
}

struct GaussGrad {
  double center[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // dL/da, dL/db, dL/dc
  double color[3] = {0, 0, 0};
  double depth = 0;
  double opacity = 0;  // w.r.t. sigmoid(opacity_logit)
};

void backward_pixel(const Frame& f, int pixel, int x, int y, const double gC[3], double gD, double gA,
                    std::vector<GaussGrad>& grads) {
  const double px = x + 0.5, py = y + 0.5;
  // Back to front. B* hold what is seen behind the current Gaussian,
  // normalized to unit transmittance at that point.
  double Bc[3] = {f.settings.background[0], f.settings.background[1], f.settings.background[2]};
  double Bd = 0.0, Ba = 0.0;
  for (int j = f.pixel_begin[pixel + 1] - 1; j >= f.pixel_begin[pixel]; --j) {
    const Contributor& ct = f.contributors[j];
    const Splat& s = f.splats[ct.splat];
    GaussGrad& g = grads[s.id];
    const double w = ct.alpha * ct.T;
    double d_alpha = 0.0;
    for (int c = 0; c < 3; ++c) {
      g.color[c] += gC[c] * w;
      d_alpha += gC[c] * (s.color[c] - Bc[c]);
    }
    g.depth += gD * w;
    d_alpha += gD * (s.depth - Bd) + gA * (1.0 - Ba);
    d_alpha *= ct.T;

    for (int c = 0; c < 3; ++c) Bc[c] = ct.alpha * s.color[c] + (1.0 - ct.alpha) * Bc[c];
    Bd = ct.alpha * s.depth + (1.0 - ct.alpha) * Bd;
    Ba = ct.alpha + (1.0 - ct.alpha) * Ba;

    g.opacity += d_alpha * ct.falloff;
    const double d_q = -0.5 * d_alpha * s.opacity * ct.falloff;
    const double dx = px - s.cx, dy = py - s.cy;
    g.center[0] -= d_q * 2.0 * (s.a * dx + s.b * dy);
    g.center[1] -= d_q * 2.0 * (s.b * dx + s.c * dy);
    g.conic[0] += d_q * dx * dx;
    g.conic[1] += d_q * 2.0 * dx * dy;
    g.conic[2] += d_q * dy * dy;
  }
}

// dR/dq_hat for q_hat = (r, x, y, z).
void rotation_partials(const Eigen::Vector4d& q, Eigen::Matrix3d out[4]) {
  const double r = q[0], x = q[1], y = q[2], z = q[3];
  out[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  out[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * r, 2 * z, 2 * r, -4 * x;
  out[2] << -4 * y, 2 * x, 2 * r, 2 * x, 0, 2 * z, -2 * r, 2 * z, -4 * y;
  out[3] << -4 * z, -2 * r, 2 * x, 2 * r, -4 * z, 2 * y, 2 * x, 2 * y, 0;
}

struct ParamGrads {
  std::vector<double> means, log_scales, rotations, opacity, sh;
};

void chain_to_params(const Frame& f, const std::vector<GaussGrad>& grads, std::span<const double> sh_coeffs,
                     ParamGrads& out, ScreenGradStats* stats) {
  const Camera& cam = f.camera;
  const Eigen::Matrix3d& W = cam.rotation;
  for (std::size_t i = 0; i < f.prep.size(); ++i) {
    const Prepared& p = f.prep[i];
    if (!p.visible) continue;
    const GaussGrad& g = grads[i];
    Eigen::Vector3d g_mean = Eigen::Vector3d::Zero();

    // Opacity logit.
    out.opacity[i] += g.opacity * p.opacity * (1.0 - p.opacity);

    // Colour -> SH coefficients and view direction.
    Eigen::Vector3d g_raw;
    for (int c = 0; c < 3; ++c) g_raw[c] = p.raw_color[c] > 0.0 ? g.color[c] : 0.0;
    double* gsh = out.sh.data() + i * 3 * f.basis;
    for (int b = 0; b < f.basis; ++b)
      for (int c = 0; c < 3; ++c) gsh[3 * b + c] += p.basis[b] * g_raw[c];
    if (f.sh_degree > 0 && p.dir_len > 0.0) {
      double dbasis[3 * kMaxBasis];
      sh_basis_gradient(f.sh_degree, p.dir, dbasis);
      const double* c = sh_coeffs.data() + i * 3 * f.basis;
      Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
      for (int b = 0; b < f.basis; ++b) {
        const double s = g_raw[0] * c[3 * b] + g_raw[1] * c[3 * b + 1] + g_raw[2] * c[3 * b + 2];
        for (int k = 0; k < 3; ++k) g_dir[k] += s * dbasis[3 * b + k];
      }
      g_mean += (g_dir - p.dir * p.dir.dot(g_dir)) / p.dir_len;
    }

    // Screen centre and depth -> view-space centre.
    const double tx = p.view.x(), ty = p.view.y(), tz = p.view.z();
    const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Vector3d g_view;
    g_view.x() = g.center[0] * cam.fx * iz;
    g_view.y() = g.center[1] * cam.fy * iz;
    g_view.z() = -g.center[0] * cam.fx * tx * iz2 - g.center[1] * cam.fy * ty * iz2 + g.depth;

    // Conic -> 2D covariance.
    Eigen::Matrix2d A;
    A << p.conic_a, p.conic_b, p.conic_b, p.conic_c;
    Eigen::Matrix2d G;
    G << g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2];
    const Eigen::Matrix2d g_cov2d = -A * G * A;

    // 2D covariance -> 3D covariance and projection Jacobian.
    const Eigen::Matrix3d g_cov3d = p.T.transpose() * g_cov2d * p.T;
    const Eigen::Matrix<double, 2, 3> g_T = 2.0 * g_cov2d * p.T * p.cov3d;
    const Eigen::Matrix<double, 2, 3> g_J = g_T * W.transpose();
    g_view.x() += g_J(0, 2) * (-cam.fx * iz2);
    g_view.y() += g_J(1, 2) * (-cam.fy * iz2);
    g_view.z() += g_J(0, 0) * (-cam.fx * iz2) + g_J(0, 2) * (2.0 * cam.fx * tx * iz3) +
                  g_J(1, 1) * (-cam.fy * iz2) + g_J(1, 2) * (2.0 * cam.fy * ty * iz3);
    g_mean += W.transpose() * g_view;
    for (int k = 0; k < 3; ++k) out.means[3 * i + k] += g_mean[k];

    // 3D covariance -> scale and rotation.
    const Eigen::Matrix3d M = p.rot * p.scale.asDiagonal();
    const Eigen::Matrix3d g_M = 2.0 * g_cov3d * M;
    for (int k = 0; k < 3; ++k) {
      const double g_scale = p.rot.col(k).dot(g_M.col(k));
      out.log_scales[3 * i + k] += g_scale * p.scale[k];
    }
    const Eigen::Matrix3d g_R = g_M * p.scale.asDiagonal();
    Eigen::Matrix3d dR[4];
    rotation_partials(p.q_hat, dR);
    Eigen::Vector4d g_qhat;
    for (int k = 0; k < 4; ++k) g_qhat[k] = (g_R.array() * dR[k].array()).sum();
    const Eigen::Vector4d g_q = (g_qhat - p.q_hat * p.q_hat.dot(g_qhat)) / p.q_norm;
    for (int k = 0; k < 4; ++k) out.rotations[4 * i + k] += g_q[k];

    if (stats != nullptr && p.px1 >= p.px0 && p.py1 >= p.py0) {
      const double ndc_x = g.center[0] * 0.5 * f.width;
      const double ndc_y = g.center[1] * 0.5 * f.height;
      stats->grad_norm_sum[i] += std::sqrt(ndc_x * ndc_x + ndc_y * ndc_y);
      stats->visible_count[i] += 1;
    }
  }
}

}  // namespace

RenderOutput rasterize(ad::Tape& tape, const GaussianCloud& cloud, const ad::Tensor& sh, int sh_degree,
                       const Camera& camera, const RasterSettings& settings, ScreenGradStats* stats) {
  camera.validate();
  if (settings.tile_size <= 0) throw ContractViolation("rasterize: tile size must be positive");
  const std::size_t n = cloud.size();
  auto frame = std::make_shared<Frame>();
  frame->width = camera.width;
  frame->height = camera.height;
  frame->sh_degree = sh_degree;
  frame->basis = sh_basis_count(sh_degree);
  frame->camera = camera;
  frame->settings = settings;
  if (n > 0) {
    cloud.validate();
    if (sh.rank() != 2 || sh.size(0) != static_cast<int>(n) || sh.size(1) != 3 * frame->basis) {
      throw ContractViolation("rasterize: sh block " + ad::shape_str(sh.shape()) + " does not match " +
                              std::to_string(n) + " gaussians at degree " + std::to_string(sh_degree));
    }
  }
  if (sh_degree < 0 || sh_degree > kMaxShDegree) throw ContractViolation("rasterize: unsupported SH degree");
  if (n > 0) prepare(*frame, cloud, sh);
  if (stats != nullptr && stats->grad_norm_sum.size() != n) stats->reset(n);

  const int W = camera.width, H = camera.height, HW = W * H;
  const bool needs_grad =
      n > 0 && tape.wants({&cloud.means, &cloud.log_scales, &cloud.rotations, &cloud.opacity_logits, &sh});
  ad::Tensor combined = ad::make_result({1, 5, H, W});
  auto out = combined.mutable_values();
  if (needs_grad) frame->pixel_begin.assign(HW + 1, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int k = y * W + x;
      const PixelResult r = shade(*frame, x, y, needs_grad ? &frame->contributors : nullptr);
      if (needs_grad) frame->pixel_begin[k + 1] = static_cast<int>(frame->contributors.size());
      for (int c = 0; c < 3; ++c) out[c * HW + k] = r.color[c];
      out[3 * HW + k] = r.depth;
      out[4 * HW + k] = r.accum;
    }
  ad::check_finite(combined, "rasterize");

  if (needs_grad) {
    tape.record("rasterize", combined,
                [frame, on = combined.node(), mn = cloud.means.node(), sn = cloud.log_scales.node(),
                 rn = cloud.rotations.node(), on_ = cloud.opacity_logits.node(), shn = sh.node(), stats] {
                  const Frame& f = *frame;
                  const int W = f.width, H = f.height, HW = W * H;
                  std::vector<GaussGrad> grads(f.prep.size());
                  for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                      const int k = y * W + x;
                      const double gC[3] = {on->grad[k], on->grad[HW + k], on->grad[2 * HW + k]};
                      const double gD = on->grad[3 * HW + k], gA = on->grad[4 * HW + k];
                      if (gC[0] == 0 && gC[1] == 0 && gC[2] == 0 && gD == 0 && gA == 0) continue;
                      backward_pixel(f, k, x, y, gC, gD, gA, grads);
                    }
                  const std::size_t n = f.prep.size();
                  ParamGrads pg{std::vector<double>(3 * n), std::vector<double>(3 * n), std::vector<double>(4 * n),
                                std::vector<double>(n), std::vector<double>(3 * f.basis * n)};
                  chain_to_params(f, grads, shn->value, pg, stats);
                  auto accumulate = [](const std::shared_ptr<ad::Node>& node, const std::vector<double>& g) {
                    if (!node->requires_grad) return;
                    node->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
                  };
                  accumulate(mn, pg.means);
                  accumulate(sn, pg.log_scales);
                  accumulate(rn, pg.rotations);
                  accumulate(on_, pg.opacity);
                  accumulate(shn, pg.sh);
                });
  }

  RenderOutput result;
  result.color = ad::slice_channels(tape, combined, 0, 3);
  result.depth = ad::slice_channels(tape, combined, 3, 4);
  result.accumulation = ad::slice_channels(tape, combined, 4, 5);
  return result;
}

}  // namespace wildgs
