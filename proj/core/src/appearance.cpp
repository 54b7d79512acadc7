#include "wildgs/appearance.hpp"

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"

namespace wildgs {

TriplaneUNet::TriplaneUNet(int feature_channels, std::mt19937_64& rng)
    : enc0_(6, 8, 3, 1, rng),
      down1_(8, 16, 3, 2, rng),
      down2_(16, 24, 3, 2, rng),
      up1_(24 + 16, 16, 3, 1, rng),
      up0_(16 + 8, 16, 3, 1, rng),
      out_(16, feature_channels, 1, 1, rng, 0.5) {}

ad::Tensor TriplaneUNet::forward(ad::Tape& tape, const ad::Tensor& planes) const {
  if (planes.rank() != 4 || planes.size(1) != 6) throw ContractViolation("triplane net expects N x 6 x R x R");
  if (planes.size(2) % 4 != 0 || planes.size(3) % 4 != 0) {
    throw ContractViolation("triplane resolution must be divisible by 4");
  }
  const ad::Tensor e0 = ad::relu(tape, enc0_(tape, planes));
  const ad::Tensor e1 = ad::relu(tape, down1_(tape, e0));
  const ad::Tensor e2 = ad::relu(tape, down2_(tape, e1));
  const ad::Tensor d1 = ad::relu(tape, up1_(tape, ad::concat_channels(tape, ad::upsample2x(tape, e2), e1)));
  const ad::Tensor d0 = ad::relu(tape, up0_(tape, ad::concat_channels(tape, ad::upsample2x(tape, d1), e0)));
  return out_(tape, d0);
}

void TriplaneUNet::collect(const std::string& prefix, nn::ParamList& out) const {
  enc0_.collect(prefix + "enc0.", out);
  down1_.collect(prefix + "down1.", out);
  down2_.collect(prefix + "down2.", out);
  up1_.collect(prefix + "up1.", out);
  up0_.collect(prefix + "up0.", out);
  out_.collect(prefix + "out.", out);
}

TriplaneFeatures triplane_encode(ad::Tape& tape, const TriplaneColor& color, const Aabb& aabb,
                                 const TriplaneUNet& net) {
  aabb.validate();
  TriplaneFeatures features;
  features.planes = net.forward(tape, color.as_tensor());
  features.aabb = aabb;
  return features;
}

ad::Tensor triplane_feature_sum(ad::Tape& tape, const ad::Tensor& means, const TriplaneFeatures& triplane,
                                std::vector<std::uint8_t>* outside) {
  if (means.rank() != 2 || means.size(1) != 3) throw ContractViolation("means must be n x 3");
  const Aabb& box = triplane.aabb;
  box.validate();
  const double offset[3] = {box.min.x(), box.min.y(), box.min.z()};
  const Eigen::Vector3d extent = box.extent();
  const double inv_extent[3] = {1.0 / extent.x(), 1.0 / extent.y(), 1.0 / extent.z()};
  const ad::Tensor normalized = ad::affine_cols(tape, means, offset, inv_extent);

  if (outside) {
    const int n = means.size(0);
    outside->assign(n, 0);
    const auto v = normalized.values();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k)
        if (v[3 * i + k] < 0.0 || v[3 * i + k] > 1.0) (*outside)[i] = 1;
  }

  ad::Tensor total;
  for (int p = 0; p < 3; ++p) {
    const int cols[2] = {kPlaneAxes[p].u, kPlaneAxes[p].v};
    const ad::Tensor uv = ad::select_cols(tape, normalized, cols);
    const ad::Tensor sample = ad::grid_sample(tape, ad::select_batch(tape, triplane.planes, p), uv);
    total = total.defined() ? ad::add(tape, total, sample) : sample;
  }
  return total;
}

ad::Tensor sample_local_embeddings(ad::Tape& tape, const ad::Tensor& means, const AppearanceContext& ctx,
                                   const nn::Mlp& local_mlp) {
  if (!ctx.fallback.defined() || ctx.fallback.numel() != static_cast<std::size_t>(kEmbeddingDim)) {
    throw ContractViolation("appearance context lacks a fallback vector");
  }
  const int n = means.size(0);
  if (!ctx.triplane) return ad::broadcast_rows(tape, ctx.fallback, n);
  std::vector<std::uint8_t> outside;
  const ad::Tensor features = triplane_feature_sum(tape, means, *ctx.triplane, &outside);
  const ad::Tensor local = local_mlp(tape, features);
  std::vector<std::uint8_t> inside(outside.size());
  for (std::size_t i = 0; i < outside.size(); ++i) inside[i] = outside[i] ? 0 : 1;
  return ad::where_rows(tape, inside, local, ctx.fallback);
}

Eigen::VectorXd sample_local_embedding(const Eigen::Vector3d& mu, const AppearanceContext& ctx,
                                       const nn::Mlp& local_mlp) {
  ad::Tape tape(false);
  const ad::Tensor means({1, 3}, {mu.x(), mu.y(), mu.z()});
  const ad::Tensor emb = sample_local_embeddings(tape, means, ctx, local_mlp);
  return Eigen::Map<const Eigen::VectorXd>(emb.values().data(), static_cast<Eigen::Index>(emb.numel()));
}

ad::Tensor encode_global(ad::Tape& tape, const ad::Tensor& bottleneck, const nn::Mlp& global_mlp) {
  if (bottleneck.rank() != 4 || bottleneck.size(0) != 1) throw ContractViolation("bottleneck must be 1 x C x h x w");
  const ad::Tensor pooled = ad::global_avg_pool(tape, bottleneck);
  return ad::reshape(tape, global_mlp(tape, pooled), {global_mlp.out_features()});
}

ad::Tensor fuse_to_sh(ad::Tape& tape, const ad::Tensor& emb_global, const ad::Tensor& emb_local,
                      const ad::Tensor& intrinsic, const nn::Mlp& fusion_mlp) {
  if (intrinsic.rank() != 2) throw ContractViolation("intrinsic features must be n x d");
  const int n = intrinsic.size(0);
  const ad::Tensor g = emb_global.defined() ? ad::broadcast_rows(tape, emb_global, n)
                                            : ad::Tensor::zeros({n, kEmbeddingDim});
  const ad::Tensor l = emb_local.defined() ? emb_local : ad::Tensor::zeros({n, kEmbeddingDim});
  if (l.rank() != 2 || l.size(0) != n) throw ContractViolation("local embeddings must be n x 16");
  const ad::Tensor input = ad::concat_cols(tape, ad::concat_cols(tape, g, l), intrinsic);
  if (input.size(1) != fusion_mlp.in_features()) throw ContractViolation("fusion input width mismatch");
  return fusion_mlp(tape, input);
}

namespace {

ad::Tensor lerp(const ad::Tensor& a, const ad::Tensor& b, double alpha, const char* what) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw ContractViolation(std::string("blend_appearance: ") + what + " shapes differ");
  }
  if (alpha == 0.0) return a.clone();
  if (alpha == 1.0) return b.clone();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
  return ad::Tensor(a.shape(), std::move(out));
}

}  // namespace

AppearanceContext blend_appearance(const AppearanceContext& ctx1, const AppearanceContext& ctx2, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractViolation("blend alpha must be in [0, 1]");
  if (ctx1.triplane.has_value() != ctx2.triplane.has_value()) {
    throw ContractViolation("blend_appearance: only one context has a triplane");
  }
  AppearanceContext out;
  out.global = lerp(ctx1.global, ctx2.global, alpha, "global embedding");
  out.fallback = lerp(ctx1.fallback, ctx2.fallback, alpha, "fallback");
  out.global.set_requires_grad(false);
  out.fallback.set_requires_grad(false);
  if (ctx1.triplane) {
    if (ctx1.triplane->resolution() != ctx2.triplane->resolution()) {
      throw ContractViolation("blend_appearance: triplane resolution mismatch");
    }
    TriplaneFeatures t;
    t.planes = lerp(ctx1.triplane->planes, ctx2.triplane->planes, alpha, "triplane");
    t.planes.set_requires_grad(false);
    t.aabb = alpha < 1.0 ? ctx1.triplane->aabb : ctx2.triplane->aabb;
    out.triplane = std::move(t);
  }
  return out;
}

}  // namespace wildgs
