#include "wildgs/triplane.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

#include "wildgs/errors.hpp"

namespace wildgs {

void Aabb::validate() const {
  if (!((min.array() < max.array()).all())) throw ContractViolation("aabb min must be below max on every axis");
  if (!(crop_ratio > 0.0 && crop_ratio <= 1.0)) throw ContractViolation("aabb crop ratio must be in (0, 1]");
}

namespace {

double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - t) + values[hi] * t;
}

}  // namespace

Aabb Aabb::from_points(const std::vector<Eigen::Vector3d>& points, double crop_ratio) {
  if (points.empty()) throw ContractViolation("aabb from an empty point set");
  Aabb box;
  box.crop_ratio = crop_ratio;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> axis(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) axis[i] = points[i][k];
    const double lo = percentile(axis, 0.01), hi = percentile(axis, 0.99);
    const double center = 0.5 * (lo + hi);
    const double half = std::max(0.5 * (hi - lo), 1e-3);
    box.min[k] = center - crop_ratio * half;
    box.max[k] = center + crop_ratio * half;
  }
  box.validate();
  return box;
}

NormalizedPoints normalize_points(const std::vector<Eigen::Vector3d>& positions, const Aabb& aabb) {
  aabb.validate();
  NormalizedPoints out;
  out.coords.reserve(positions.size());
  out.outside.reserve(positions.size());
  const Eigen::Vector3d extent = aabb.extent();
  for (const auto& p : positions) {
    const Eigen::Vector3d c = (p - aabb.min).cwiseQuotient(extent);
    out.coords.push_back(c);
    out.outside.push_back(((c.array() < 0.0) || (c.array() > 1.0)).any() ? 1 : 0);
  }
  return out;
}

PointCloudRGB backproject_masked(const ad::Tensor& image, const ad::Tensor& depth, const ad::Tensor& accumulation,
                                 const ad::Tensor& mask, const Camera& camera, double threshold,
                                 double accum_cutoff) {
  camera.validate();
  const int H = camera.height, W = camera.width, HW = H * W;
  auto expect = [&](const ad::Tensor& t, int channels, const char* name) {
    if (!t.defined() || t.shape() != ad::Shape{1, channels, H, W}) {
      throw ContractViolation(std::string("backproject: ") + name + " must be 1 x " + std::to_string(channels) +
                              " x H x W matching the camera");
    }
  };
  expect(image, 3, "image");
  expect(depth, 1, "depth");
  expect(accumulation, 1, "accumulation");
  if (mask.defined()) expect(mask, 1, "mask");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractViolation("backproject: threshold must be in (0, 1)");

  PointCloudRGB cloud;
  const auto img = image.values();
  const auto dep = depth.values();
  const auto acc = accumulation.values();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int k = y * W + x;
      if (mask.defined() && !(mask[k] > threshold)) continue;
      if (!(acc[k] > accum_cutoff)) continue;
      const double z = dep[k] / acc[k];
      cloud.positions.push_back(camera.unproject(x + 0.5, y + 0.5, z));
      cloud.colors.emplace_back(img[k], img[HW + k], img[2 * HW + k]);
    }
  return cloud;
}

ad::Tensor TriplaneColor::as_tensor() const {
  return ad::Tensor({3, 6, resolution, resolution}, data, false);
}

TriplaneColor splat_triplane_color(const PointCloudRGB& points, const Aabb& aabb, int resolution) {
  if (resolution <= 0 || (resolution & (resolution - 1)) != 0) {
    throw ContractViolation("triplane resolution must be a power of two");
  }
  if (points.positions.size() != points.colors.size()) throw ContractViolation("point cloud arrays differ in length");
  const int R = resolution;
  TriplaneColor tc;
  tc.resolution = R;
  tc.data.assign(static_cast<std::size_t>(3) * 6 * R * R, 0.0);
  tc.occupancy.assign(static_cast<std::size_t>(3) * R * R, 0);

  const NormalizedPoints norm = normalize_points(points.positions, aabb);
  using Key = std::array<double, 6>;
  std::vector<int> front(static_cast<std::size_t>(3) * R * R, -1), back(front.size(), -1);
  std::vector<Key> front_key(front.size()), back_key(front.size());
  auto cell_of = [R](double c) { return std::min(static_cast<int>(std::floor(c * R)), R - 1); };

  for (std::size_t i = 0; i < norm.coords.size(); ++i) {
    if (norm.outside[i]) continue;
    const Eigen::Vector3d& c = norm.coords[i];
    const Eigen::Vector3d& rgb = points.colors[i];
    for (int p = 0; p < 3; ++p) {
      const PlaneAxes ax = kPlaneAxes[p];
      const std::size_t cell = (static_cast<std::size_t>(p) * R + cell_of(c[ax.v])) * R + cell_of(c[ax.u]);
      const Key fk{c[ax.depth], c[ax.u], c[ax.v], rgb[0], rgb[1], rgb[2]};
      const Key bk{-c[ax.depth], c[ax.u], c[ax.v], rgb[0], rgb[1], rgb[2]};
      if (front[cell] < 0 || fk < front_key[cell]) {
        front[cell] = static_cast<int>(i);
        front_key[cell] = fk;
      }
      if (back[cell] < 0 || bk < back_key[cell]) {
        back[cell] = static_cast<int>(i);
        back_key[cell] = bk;
      }
    }
  }

  for (int p = 0; p < 3; ++p)
    for (int rc = 0; rc < R * R; ++rc) {
      const std::size_t cell = static_cast<std::size_t>(p) * R * R + rc;
      if (front[cell] < 0) continue;
      tc.occupancy[cell] = 1;
      const Eigen::Vector3d& fc = points.colors[front[cell]];
      const Eigen::Vector3d& bc = points.colors[back[cell]];
      for (int ch = 0; ch < 3; ++ch) {
        tc.data[(static_cast<std::size_t>(p) * 6 + ch) * R * R + rc] = fc[ch];
        tc.data[(static_cast<std::size_t>(p) * 6 + 3 + ch) * R * R + rc] = bc[ch];
      }
    }
  return tc;
}

}  // namespace wildgs
