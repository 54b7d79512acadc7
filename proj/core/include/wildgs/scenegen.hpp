#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wildgs/camera.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs {

struct LightSpot {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double radius = 1.0;
  double intensity = 1.0;
};

/// Per-view look: radiance * spots, then gain -> gamma -> white balance -> clamp.
struct AppearanceVariant {
  double gain = 1.0;
  double gamma = 1.0;
  Eigen::Vector3d white_balance = Eigen::Vector3d::Ones();
  std::vector<LightSpot> spots;
};

struct PrimitiveSpec {
  enum class Kind { Box, Sphere, Plane };
  Kind kind = Kind::Box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  /// Box: full extents. Sphere: radius in x. Plane: x/y extents of a
  /// horizontal rectangle at center.z.
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  int grid = 4;  // albedo cells per face side
};

struct OccluderSpec {
  double view_fraction = 0.5;  // share of views carrying sprites
  int max_per_view = 3;
  double max_coverage = 0.15;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int width = 64, height = 64;
  int views = 40;
  double focal = 68.6;  // pixels
  double orbit_radius = 5.5;
  double orbit_height = 7.0;
  Eigen::Vector3d target = Eigen::Vector3d(0.0, 0.0, 0.5);
  Eigen::Vector3d sun = Eigen::Vector3d(0.3, 0.2, 1.0);
  std::vector<PrimitiveSpec> primitives;
  std::vector<AppearanceVariant> variants;
  OccluderSpec occluders;
  int points = 2000;
  double point_noise = 0.0;

  /// Throws ContractViolation naming the offending field.
  void validate() const;
};

/// The toy benchmark: ground plane, boxes and a sphere, four looks.
SceneSpec default_scene_spec();

SceneSpec scene_spec_from_json(const std::string& text);
std::string to_json(const SceneSpec& spec);

struct SceneHit {
  double distance = 0.0;  // along the unit ray
  Eigen::Vector3d point, normal, albedo;
};

struct ViewRender {
  ad::Tensor radiance;  // 1 x 3 x H x W shaded, before the tone curve
  ad::Tensor toned;     // after gain/gamma/white balance, before clamping
  ad::Tensor image;     // clamped, sprites composited
  ad::Tensor depth;     // 1 x 1 x H x W view-space z, 0 where nothing is hit
  ad::Tensor gt_mask;   // 1 x 1 x H x W, 1 static, 0 sprite
};

class SyntheticScene {
 public:
  explicit SyntheticScene(SceneSpec spec);

  const SceneSpec& spec() const { return spec_; }
  Camera camera(int view) const;
  int variant_of(int view) const { return variant_of_[view]; }
  bool has_occluders(int view) const { return occluded_[view] != 0; }

  /// Nearest hit along origin + t * dir (dir unit length), t > 1e-9.
  std::optional<SceneHit> trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;

  /// Spot factor 1 + sum_k I_k max(0, 1 - (d_k / r_k)^2)^2.
  static double spot_factor(const AppearanceVariant& look, const Eigen::Vector3d& p);
  static Eigen::Vector3d tone(const AppearanceVariant& look, const Eigen::Vector3d& radiance);

  ViewRender render_view(int view) const;
  /// Render of `view`'s camera under an arbitrary look, without sprites.
  ViewRender render_view(int view, const AppearanceVariant& look) const;

  /// Surface samples seen through random pixels of random views.
  void sample_points(std::vector<Eigen::Vector3d>& points, std::vector<Eigen::Vector3d>& colors) const;

 private:
  Eigen::Vector3d albedo(std::size_t prim, int face, double u, double v) const;
  void draw_sprites(int view, ViewRender& out) const;

  SceneSpec spec_;
  std::vector<std::vector<Eigen::Vector3d>> palettes_;  // per primitive: face-major cell colours
  std::vector<int> variant_of_;
  std::vector<std::uint8_t> occluded_;
};

/// Writes the dataset layout (images, depth, gt_masks, cameras.json,
/// points.txt, spec.json) into out_dir, creating it if needed.
void generate(const SceneSpec& spec, const std::string& out_dir);

}  // namespace wildgs
