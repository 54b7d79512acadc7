#pragma once

#include <Eigen/Core>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wildgs/nn.hpp"
#include "wildgs/triplane.hpp"

namespace wildgs {

inline constexpr int kEmbeddingDim = 16;
inline constexpr int kTriplaneChannels = 16;

/// Encoder-decoder applied to each of the three 6-channel colour planes
/// with shared weights: two stride-2 stages, skip connections, F outputs.
/// The input resolution must be divisible by 4.
class TriplaneUNet {
 public:
  TriplaneUNet() = default;
  TriplaneUNet(int feature_channels, std::mt19937_64& rng);

  /// 3 x 6 x R x R -> 3 x F x R x R.
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& planes) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  int feature_channels() const { return out_.weight.size(0); }

 private:
  nn::Conv2d enc0_, down1_, down2_, up1_, up0_, out_;
};

struct TriplaneFeatures {
  ad::Tensor planes;  // 3 x F x R x R, planes ordered XY, YZ, ZX
  Aabb aabb;
  int resolution() const { return planes.size(3); }
};

TriplaneFeatures triplane_encode(ad::Tape& tape, const TriplaneColor& color, const Aabb& aabb,
                                 const TriplaneUNet& net);

struct AppearanceContext {
  ad::Tensor global;                         // {kEmbeddingDim}
  std::optional<TriplaneFeatures> triplane;  // absent: every Gaussian uses the fallback
  ad::Tensor fallback;                       // {kEmbeddingDim}
};

/// Sum of the bilinear samples of the three planes at each position's
/// normalized projection (n x F). `outside` receives the out-of-box flags.
ad::Tensor triplane_feature_sum(ad::Tape& tape, const ad::Tensor& means, const TriplaneFeatures& triplane,
                                std::vector<std::uint8_t>* outside = nullptr);

/// Per-Gaussian local embeddings (n x kEmbeddingDim): the local MLP of the
/// summed plane features inside the box, the fallback vector elsewhere.
ad::Tensor sample_local_embeddings(ad::Tape& tape, const ad::Tensor& means, const AppearanceContext& ctx,
                                   const nn::Mlp& local_mlp);

/// Single-point convenience form of sample_local_embeddings (no gradient).
Eigen::VectorXd sample_local_embedding(const Eigen::Vector3d& mu, const AppearanceContext& ctx,
                                       const nn::Mlp& local_mlp);

/// Global embedding from the parsing network's bottleneck (1 x C x h x w):
/// MLP of the global average pool. Returns {kEmbeddingDim}.
ad::Tensor encode_global(ad::Tape& tape, const ad::Tensor& bottleneck, const nn::Mlp& global_mlp);

/// Shared MLP over [Emb^g, Emb^l, f^in] per Gaussian -> n x 3(deg+1)^2 SH
/// coefficients. An undefined emb_global or emb_local stands for zeros.
ad::Tensor fuse_to_sh(ad::Tape& tape, const ad::Tensor& emb_global, const ad::Tensor& emb_local,
                      const ad::Tensor& intrinsic, const nn::Mlp& fusion_mlp);

/// (1 - alpha) * ctx1 + alpha * ctx2 over the global embedding, the
/// triplane grids and the fallback vector. Results carry no gradient.
AppearanceContext blend_appearance(const AppearanceContext& ctx1, const AppearanceContext& ctx2, double alpha);

}  // namespace wildgs
