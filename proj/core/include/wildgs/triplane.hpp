#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "wildgs/camera.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs {

/// Box that confines triplane sampling.
struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
  double crop_ratio = 1.0;

  void validate() const;
  Eigen::Vector3d extent() const { return max - min; }

  /// Centre of the 1st-99th percentile bounds of `points`, half-extent
  /// scaled by crop_ratio.
  static Aabb from_points(const std::vector<Eigen::Vector3d>& points, double crop_ratio);
};

struct PointCloudRGB {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> colors;
  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

struct NormalizedPoints {
  std::vector<Eigen::Vector3d> coords;  // (p - min) / (max - min), unclamped
  std::vector<std::uint8_t> outside;    // 1 where any coordinate leaves [0, 1]
};

NormalizedPoints normalize_points(const std::vector<Eigen::Vector3d>& positions, const Aabb& aabb);

/// Lifts pixels with mask > threshold and accumulation > accum_cutoff to
/// world space at their expected depth (composited depth / accumulation),
/// coloured by the reference image. Images are 1 x C x H x W; an undefined
/// mask keeps every pixel. An empty result is valid.
PointCloudRGB backproject_masked(const ad::Tensor& image, const ad::Tensor& depth, const ad::Tensor& accumulation,
                                 const ad::Tensor& mask, const Camera& camera, double threshold,
                                 double accum_cutoff = 0.5);

/// Plane p in {XY, YZ, ZX}: (column axis, row axis, dropped axis).
struct PlaneAxes {
  int u, v, depth;
};
inline constexpr PlaneAxes kPlaneAxes[3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};

/// Three R x R six-channel colour planes: channels 0-2 hold the point
/// nearest along the dropped axis from the low side, 3-5 from the high side.
struct TriplaneColor {
  int resolution = 0;
  std::vector<double> data;              // 3 x 6 x R x R
  std::vector<std::uint8_t> occupancy;   // 3 x R x R

  double at(int plane, int channel, int row, int col) const {
    return data[((static_cast<std::size_t>(plane) * 6 + channel) * resolution + row) * resolution + col];
  }
  bool occupied(int plane, int row, int col) const {
    return occupancy[(static_cast<std::size_t>(plane) * resolution + row) * resolution + col] != 0;
  }
  ad::Tensor as_tensor() const;  // {3, 6, R, R}
};

/// Two-sided z-buffer projection of the in-box points onto the three
/// planes. Deterministic and independent of point order.
TriplaneColor splat_triplane_color(const PointCloudRGB& points, const Aabb& aabb, int resolution);

}  // namespace wildgs
