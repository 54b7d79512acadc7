#include "wildgs/model.hpp"

#include <random>

#include "wildgs/errors.hpp"
#include "wildgs/sh.hpp"

namespace wildgs {

double camera_extent(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return 1.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const Camera& c : cameras) mean += c.center();
  mean /= static_cast<double>(cameras.size());
  double radius = 0.0;
  for (const Camera& c : cameras) radius = std::max(radius, (c.center() - mean).norm());
  return radius > 0.0 ? 1.1 * radius : 1.0;
}

WildGsModel::WildGsModel(const TrainConfig& cfg, const std::vector<Eigen::Vector3d>& points,
                         const std::vector<Camera>& cameras)
    : config(cfg) {
  config.validate();
  if (points.empty()) throw ContractViolation("model needs a non-empty initial point cloud");
  std::mt19937_64 rng(config.seed);
  cloud = GaussianCloud::from_points(points, rng());
  for (ad::Tensor& t : cloud.tensors()) t.set_requires_grad(true);
  parsing = ParsingNet(rng);
  global_mlp = nn::Mlp({parsing.bottleneck_channels(), 32, kEmbeddingDim}, rng);
  triplane_net = TriplaneUNet(kTriplaneChannels, rng);
  local_mlp = nn::Mlp({kTriplaneChannels, 32, kEmbeddingDim}, rng);
  fusion_mlp = nn::Mlp({2 * kEmbeddingDim + kIntrinsicDim, 64, 64, 3 * sh_basis_count(config.sh_degree)}, rng);
  fallback = ad::Tensor::zeros({kEmbeddingDim}, true);
  aabb = Aabb::from_points(points, config.crop_ratio);
  scene_extent = camera_extent(cameras);
}

nn::ParamList WildGsModel::network_parameters() const {
  nn::ParamList out;
  parsing.collect("parsing.", out);
  global_mlp.collect("global.", out);
  triplane_net.collect("triplane.", out);
  local_mlp.collect("local.", out);
  fusion_mlp.collect("fusion.", out);
  return out;
}

nn::ParamList WildGsModel::state() const {
  nn::ParamList out = {{"gaussians.means", cloud.means},
                       {"gaussians.log_scales", cloud.log_scales},
                       {"gaussians.rotations", cloud.rotations},
                       {"gaussians.opacity_logits", cloud.opacity_logits},
                       {"gaussians.intrinsic", cloud.intrinsic},
                       {"fallback", fallback}};
  for (auto& p : network_parameters()) out.push_back(std::move(p));
  out.push_back({"aabb", ad::Tensor({7}, {aabb.min.x(), aabb.min.y(), aabb.min.z(), aabb.max.x(), aabb.max.y(),
                                          aabb.max.z(), aabb.crop_ratio})});
  out.push_back({"scene_extent", ad::Tensor::scalar(scene_extent)});
  config.for_each([&](std::string_view name, double v) {
    out.push_back({"config." + std::string(name), ad::Tensor::scalar(v)});
  });
  return out;
}

WildGsModel WildGsModel::from_state(const nn::ParamList& state) {
  auto find = [&](const std::string& name) -> const ad::Tensor& {
    for (const auto& p : state)
      if (p.name == name) return p.tensor;
    throw IoError("checkpoint lacks tensor " + name);
  };
  TrainConfig cfg;
  for (const auto& p : state)
    if (p.name.rfind("config.", 0) == 0) cfg.set_number(p.name.substr(7), p.tensor.item());
  cfg.validate();

  const ad::Tensor means = find("gaussians.means");
  std::vector<Eigen::Vector3d> dummy(1, Eigen::Vector3d::Zero());
  dummy.push_back(Eigen::Vector3d::Ones());
  WildGsModel m(cfg, dummy, {});
  m.cloud.means = find("gaussians.means").clone();
  m.cloud.log_scales = find("gaussians.log_scales").clone();
  m.cloud.rotations = find("gaussians.rotations").clone();
  m.cloud.opacity_logits = find("gaussians.opacity_logits").clone();
  m.cloud.intrinsic = find("gaussians.intrinsic").clone();
  m.cloud.validate();
  for (ad::Tensor& t : m.cloud.tensors()) t.set_requires_grad(true);
  m.fallback = find("fallback").clone();
  m.fallback.set_requires_grad(true);

  nn::ParamList nets = m.network_parameters();
  nn::ParamList stored;
  for (const auto& p : nets) stored.push_back({p.name, find(p.name)});
  nn::copy_values(stored, nets);

  const ad::Tensor box = find("aabb");
  if (box.numel() != 7) throw IoError("checkpoint aabb must hold 7 values");
  m.aabb.min = Eigen::Vector3d(box[0], box[1], box[2]);
  m.aabb.max = Eigen::Vector3d(box[3], box[4], box[5]);
  m.aabb.crop_ratio = box[6];
  m.aabb.validate();
  m.scene_extent = find("scene_extent").item();
  return m;
}

RasterSettings WildGsModel::raster_settings() const {
  RasterSettings s;
  s.background = Eigen::Vector3d::Constant(config.background);
  return s;
}

WildGsModel::Reference WildGsModel::encode_reference(ad::Tape& tape, const ad::Tensor& image, const Camera& camera,
                                                     bool with_triplane) const {
  Reference ref;
  ref.context.fallback = fallback;
  ParsingOutput parsed;
  if (config.use_global || config.use_mask) parsed = parsing.forward(tape, image);
  if (config.use_mask) ref.mask = parsed.mask;
  if (config.use_global) ref.context.global = encode_global(tape, parsed.bottleneck, global_mlp);

  if (with_triplane && config.use_local) {
    ad::Tape geometry_only(false);
    const int n = static_cast<int>(cloud.size());
    const ad::Tensor flat = ad::Tensor::zeros({n, 3 * sh_basis_count(config.sh_degree)});
    const RenderOutput pre = rasterize(geometry_only, cloud, flat, config.sh_degree, camera, raster_settings());
    const PointCloudRGB points =
        backproject_masked(image, pre.depth, pre.accumulation, ref.mask, camera, config.mask_threshold);
    ref.backprojected = points.size();
    ref.context.triplane =
        triplane_encode(tape, splat_triplane_color(points, aabb, config.triplane_resolution), aabb, triplane_net);
  }
  return ref;
}

ad::Tensor WildGsModel::shade(ad::Tape& tape, const AppearanceContext& ctx) const {
  ad::Tensor local;
  if (config.use_local) local = sample_local_embeddings(tape, cloud.means, ctx, local_mlp);
  return fuse_to_sh(tape, ctx.global, local, cloud.intrinsic, fusion_mlp);
}

RenderOutput WildGsModel::render(ad::Tape& tape, const AppearanceContext& ctx, const Camera& camera,
                                 ScreenGradStats* stats) const {
  return rasterize(tape, cloud, shade(tape, ctx), config.sh_degree, camera, raster_settings(), stats);
}

}  // namespace wildgs
