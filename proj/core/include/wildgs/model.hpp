#pragma once

#include <Eigen/Core>
#include <vector>

#include "wildgs/appearance.hpp"
#include "wildgs/camera.hpp"
#include "wildgs/config.hpp"
#include "wildgs/gaussian.hpp"
#include "wildgs/nn.hpp"
#include "wildgs/parsing_net.hpp"
#include "wildgs/rasterizer.hpp"

namespace wildgs {

/// Everything learned: the Gaussians, the parsing network, the appearance
/// networks and the out-of-box fallback embedding.
class WildGsModel {
 public:
  WildGsModel() = default;
  /// Fresh model seeded from config.seed. The scene extent comes from the
  /// spread of camera centres, the triplane box from the initial points.
  WildGsModel(const TrainConfig& config, const std::vector<Eigen::Vector3d>& points,
              const std::vector<Camera>& cameras);

  TrainConfig config;
  GaussianCloud cloud;
  ParsingNet parsing;
  nn::Mlp global_mlp;  // pooled bottleneck -> Emb^g
  TriplaneUNet triplane_net;
  nn::Mlp local_mlp;   // summed plane features -> Emb^l
  nn::Mlp fusion_mlp;  // [Emb^g, Emb^l, f^in] -> SH
  ad::Tensor fallback;
  Aabb aabb;
  double scene_extent = 1.0;

  /// Network weights, prefixed parsing./global./triplane./local./fusion.
  nn::ParamList network_parameters() const;

  /// Full serializable state (tensors, box, extent, config).
  nn::ParamList state() const;
  static WildGsModel from_state(const nn::ParamList& state);

  struct Reference {
    AppearanceContext context;
    ad::Tensor mask;  // 1 x 1 x H x W predicted visibility; undefined when the mask is disabled
    std::size_t backprojected = 0;
  };

  /// Appearance of a reference image. The triplane is built only when
  /// `with_triplane` and the local branch is enabled; otherwise every
  /// Gaussian takes the fallback embedding.
  Reference encode_reference(ad::Tape& tape, const ad::Tensor& image, const Camera& camera,
                             bool with_triplane) const;

  /// Per-Gaussian SH coefficients under `ctx`.
  ad::Tensor shade(ad::Tape& tape, const AppearanceContext& ctx) const;

  RenderOutput render(ad::Tape& tape, const AppearanceContext& ctx, const Camera& camera,
                      ScreenGradStats* stats = nullptr) const;

  RasterSettings raster_settings() const;
};

/// Half-diagonal-style radius of the camera centres (max distance to their
/// mean) times 1.1.
double camera_extent(const std::vector<Camera>& cameras);

}  // namespace wildgs
