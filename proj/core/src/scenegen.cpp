#include "wildgs/scenegen.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "wildgs/dataset.hpp"
#include "wildgs/errors.hpp"
#include "wildgs/image_io.hpp"

namespace fs = std::filesystem;
using Eigen::Vector3d;

namespace wildgs {

namespace {

constexpr double kPi = 3.14159265358979323846;
const Vector3d kSky(0.55, 0.65, 0.85);

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  return x;
}

int face_cells(const PrimitiveSpec& p) {
  switch (p.kind) {
    case PrimitiveSpec::Kind::Box: return 6 * p.grid * p.grid;
    case PrimitiveSpec::Kind::Sphere: return 2 * p.grid * p.grid;
    case PrimitiveSpec::Kind::Plane: return p.grid * p.grid;
  }
  return 0;
}

Vector3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s, hp = h * 6.0, x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vector3d rgb;
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return rgb + Vector3d::Constant(v - c);
}

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractViolation("scene spec: " + field + " " + why);
  };
  if (width <= 0 || height <= 0) fail("width/height", "must be positive");
  if (views <= 0) fail("views", "must be positive");
  if (!(focal > 0.0)) fail("focal", "must be positive");
  if (!(orbit_radius > 0.0)) fail("orbit_radius", "must be positive");
  if (!(sun.norm() > 0.0)) fail("sun", "must be non-zero");
  if (primitives.empty()) fail("primitives", "must not be empty");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& p = primitives[i];
    const std::string name = "primitives[" + std::to_string(i) + "]";
    if (p.grid <= 0) fail(name + ".grid", "must be positive");
    if (!(p.size.x() > 0.0)) fail(name + ".size", "must be positive");
    if (p.kind != PrimitiveSpec::Kind::Sphere && !(p.size.y() > 0.0)) fail(name + ".size", "must be positive");
    if (p.kind == PrimitiveSpec::Kind::Box && !(p.size.z() > 0.0)) fail(name + ".size", "must be positive");
  }
  if (variants.empty()) fail("variants", "must hold at least one look");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    const std::string name = "variants[" + std::to_string(i) + "]";
    if (!(v.gain >= 0.0)) fail(name + ".gain", "must be >= 0");
    if (!(v.gamma > 0.0)) fail(name + ".gamma", "must be > 0");
    if (!((v.white_balance.array() >= 0.0).all())) fail(name + ".white_balance", "must be >= 0");
    for (const auto& s : v.spots) {
      if (!(s.radius > 0.0)) fail(name + ".spots.radius", "must be > 0");
    }
  }
  if (!(occluders.view_fraction >= 0.0 && occluders.view_fraction <= 1.0)) {
    fail("occluders.view_fraction", "must be in [0, 1]");
  }
  if (occluders.max_per_view < 0 || occluders.max_per_view > 3) fail("occluders.max_per_view", "must be in [0, 3]");
  if (!(occluders.max_coverage >= 0.0 && occluders.max_coverage <= 0.15)) {
    fail("occluders.max_coverage", "must be in [0, 0.15]");
  }
  if (points < 0) fail("points", "must be >= 0");
  if (!(point_noise >= 0.0)) fail("point_noise", "must be >= 0");
}

SceneSpec default_scene_spec() {
  using K = PrimitiveSpec::Kind;
  SceneSpec s;
  s.primitives = {
      {K::Plane, {0.0, 0.0, 0.0}, {28.0, 28.0, 0.0}, 7},
      {K::Box, {-1.0, -0.8, 0.75}, {1.5, 1.5, 1.5}, 3},
      {K::Box, {1.4, 0.9, 0.5}, {1.2, 2.0, 1.0}, 3},
      {K::Box, {-0.3, 1.9, 1.0}, {0.8, 0.8, 2.0}, 2},
      {K::Sphere, {0.8, -1.6, 0.7}, {0.7, 0.0, 0.0}, 4},
  };
  AppearanceVariant plain;
  AppearanceVariant dusk{0.6, 1.25, {1.15, 0.95, 0.75}, {{{-1.0, -0.8, 1.6}, 2.0, 1.2}}};
  AppearanceVariant cold{1.3, 0.85, {0.8, 0.95, 1.2}, {{{1.4, 0.9, 1.2}, 1.8, 0.9}}};
  AppearanceVariant warm{0.9, 1.0, {1.25, 1.0, 0.85}, {{{0.8, -1.6, 1.5}, 1.5, 1.0}, {{-0.3, 1.9, 2.2}, 1.6, 0.8}}};
  s.variants = {plain, dusk, cold, warm};
  return s;
}

// ---------------------------------------------------------------- JSON

namespace {

using nlohmann::json;

json vec(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3d vec_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ContractViolation("scene spec: " + field + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ContractViolation("scene spec: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw ContractViolation("scene spec: unknown field " + where + (where.empty() ? "" : ".") + it.key());
    }
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ContractViolation("scene spec: bad value for " + where + key);
  }
}

}  // namespace

SceneSpec scene_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("scene spec: cannot parse JSON: ") + e.what());
  }
  check_keys(j, {"seed", "width", "height", "views", "focal", "orbit_radius", "orbit_height", "target", "sun",
                 "primitives", "variants", "occluders", "points", "point_noise"},
             "");
  SceneSpec s = default_scene_spec();
  read_field(j, "seed", s.seed, "");
  read_field(j, "width", s.width, "");
  read_field(j, "height", s.height, "");
  read_field(j, "views", s.views, "");
  read_field(j, "focal", s.focal, "");
  read_field(j, "orbit_radius", s.orbit_radius, "");
  read_field(j, "orbit_height", s.orbit_height, "");
  read_field(j, "points", s.points, "");
  read_field(j, "point_noise", s.point_noise, "");
  if (j.contains("target")) s.target = vec_from(j["target"], "target");
  if (j.contains("sun")) s.sun = vec_from(j["sun"], "sun");
  if (j.contains("primitives")) {
    s.primitives.clear();
    for (std::size_t i = 0; i < j["primitives"].size(); ++i) {
      const json& p = j["primitives"][i];
      const std::string where = "primitives[" + std::to_string(i) + "]";
      check_keys(p, {"type", "center", "size", "grid"}, where);
      PrimitiveSpec ps;
      const std::string type = p.value("type", "");
      if (type == "box") ps.kind = PrimitiveSpec::Kind::Box;
      else if (type == "sphere") ps.kind = PrimitiveSpec::Kind::Sphere;
      else if (type == "plane") ps.kind = PrimitiveSpec::Kind::Plane;
      else throw ContractViolation("scene spec: " + where + ".type must be box, sphere or plane");
      if (p.contains("center")) ps.center = vec_from(p["center"], where + ".center");
      if (p.contains("size")) ps.size = vec_from(p["size"], where + ".size");
      read_field(p, "grid", ps.grid, where + ".");
      s.primitives.push_back(ps);
    }
  }
  if (j.contains("variants")) {
    s.variants.clear();
    for (std::size_t i = 0; i < j["variants"].size(); ++i) {
      const json& v = j["variants"][i];
      const std::string where = "variants[" + std::to_string(i) + "]";
      check_keys(v, {"gain", "gamma", "white_balance", "spots"}, where);
      AppearanceVariant a;
      read_field(v, "gain", a.gain, where + ".");
      read_field(v, "gamma", a.gamma, where + ".");
      if (v.contains("white_balance")) a.white_balance = vec_from(v["white_balance"], where + ".white_balance");
      if (v.contains("spots")) {
        for (const json& sp : v["spots"]) {
          check_keys(sp, {"position", "radius", "intensity"}, where + ".spots");
          LightSpot spot;
          if (sp.contains("position")) spot.position = vec_from(sp["position"], where + ".spots.position");
          read_field(sp, "radius", spot.radius, where + ".spots.");
          read_field(sp, "intensity", spot.intensity, where + ".spots.");
          a.spots.push_back(spot);
        }
      }
      s.variants.push_back(a);
    }
  }
  if (j.contains("occluders")) {
    const json& o = j["occluders"];
    check_keys(o, {"view_fraction", "max_per_view", "max_coverage"}, "occluders");
    read_field(o, "view_fraction", s.occluders.view_fraction, "occluders.");
    read_field(o, "max_per_view", s.occluders.max_per_view, "occluders.");
    read_field(o, "max_coverage", s.occluders.max_coverage, "occluders.");
  }
  s.validate();
  return s;
}

std::string to_json(const SceneSpec& s) {
  json j;
  j["seed"] = s.seed;
  j["width"] = s.width;
  j["height"] = s.height;
  j["views"] = s.views;
  j["focal"] = s.focal;
  j["orbit_radius"] = s.orbit_radius;
  j["orbit_height"] = s.orbit_height;
  j["target"] = vec(s.target);
  j["sun"] = vec(s.sun);
  j["primitives"] = json::array();
  for (const auto& p : s.primitives) {
    const char* type = p.kind == PrimitiveSpec::Kind::Box ? "box" : p.kind == PrimitiveSpec::Kind::Sphere ? "sphere" : "plane";
    j["primitives"].push_back({{"type", type}, {"center", vec(p.center)}, {"size", vec(p.size)}, {"grid", p.grid}});
  }
  j["variants"] = json::array();
  for (const auto& v : s.variants) {
    json spots = json::array();
    for (const auto& sp : v.spots) {
      spots.push_back({{"position", vec(sp.position)}, {"radius", sp.radius}, {"intensity", sp.intensity}});
    }
    j["variants"].push_back(
        {{"gain", v.gain}, {"gamma", v.gamma}, {"white_balance", vec(v.white_balance)}, {"spots", spots}});
  }
  j["occluders"] = {{"view_fraction", s.occluders.view_fraction},
                    {"max_per_view", s.occluders.max_per_view},
                    {"max_coverage", s.occluders.max_coverage}};
  j["points"] = s.points;
  j["point_noise"] = s.point_noise;
  return j.dump(2);
}

// ---------------------------------------------------------------- scene

SyntheticScene::SyntheticScene(SceneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < spec_.primitives.size(); ++i) {
    std::mt19937_64 rng(mix(spec_.seed, 100 + i));
    std::uniform_real_distribution<double> base(0.2, 0.8), jitter(-0.12, 0.12);
    const Vector3d tint(base(rng), base(rng), base(rng));
    std::vector<Vector3d> cells(face_cells(spec_.primitives[i]));
    for (auto& c : cells) {
      const double shade = jitter(rng);
      c = (tint + Vector3d(shade + 0.3 * jitter(rng), shade + 0.3 * jitter(rng), shade + 0.3 * jitter(rng)))
              .cwiseMax(0.05)
              .cwiseMin(0.95);
    }
    palettes_.push_back(std::move(cells));
  }

  const int n = spec_.views, k = static_cast<int>(spec_.variants.size());
  variant_of_.resize(n);
  for (int i = 0; i < n; ++i) variant_of_[i] = i % k;
  std::mt19937_64 vrng(mix(spec_.seed, 1));
  std::shuffle(variant_of_.begin(), variant_of_.end(), vrng);

  occluded_.assign(n, 0);
  if (spec_.occluders.max_per_view > 0) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 orng(mix(spec_.seed, 2));
    std::shuffle(order.begin(), order.end(), orng);
    const int count = static_cast<int>(std::lround(spec_.occluders.view_fraction * n));
    for (int i = 0; i < count; ++i) occluded_[order[i]] = 1;
  }
}

Camera SyntheticScene::camera(int view) const {
  const double a = 2.0 * kPi * view / spec_.views;
  const Vector3d eye(spec_.target.x() + spec_.orbit_radius * std::cos(a),
                     spec_.target.y() + spec_.orbit_radius * std::sin(a), spec_.orbit_height);
  return Camera::look_at(eye, spec_.target, Vector3d::UnitZ(), spec_.focal, spec_.focal, spec_.width, spec_.height);
}

Vector3d SyntheticScene::albedo(std::size_t prim, int face, double u, double v) const {
  const PrimitiveSpec& p = spec_.primitives[prim];
  const int g = p.grid;
  const int cols = p.kind == PrimitiveSpec::Kind::Sphere ? 2 * g : g;
  const int col = std::clamp(static_cast<int>(std::floor(u * cols)), 0, cols - 1);
  const int row = std::clamp(static_cast<int>(std::floor(v * g)), 0, g - 1);
  return palettes_[prim][(static_cast<std::size_t>(face) * g + row) * cols + col];
}

std::optional<SceneHit> SyntheticScene::trace(const Vector3d& o, const Vector3d& d) const {
  constexpr double kEps = 1e-9;
  std::optional<SceneHit> best;
  for (std::size_t i = 0; i < spec_.primitives.size(); ++i) {
    const PrimitiveSpec& p = spec_.primitives[i];
    double t = -1.0;
    Vector3d normal;
    int face = 0;
    double u = 0.0, v = 0.0;
    if (p.kind == PrimitiveSpec::Kind::Plane) {
      if (std::abs(d.z()) < 1e-15) continue;
      t = (p.center.z() - o.z()) / d.z();
      if (!(t > kEps)) continue;
      const Vector3d q = o + t * d;
      u = (q.x() - p.center.x()) / p.size.x() + 0.5;
      v = (q.y() - p.center.y()) / p.size.y() + 0.5;
      if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;
      normal = d.z() < 0.0 ? Vector3d::UnitZ() : Vector3d(-Vector3d::UnitZ());
    } else if (p.kind == PrimitiveSpec::Kind::Sphere) {
      const double r = p.size.x();
      const Vector3d oc = o - p.center;
      const double b = oc.dot(d), c = oc.squaredNorm() - r * r;
      const double disc = b * b - c;
      if (disc < 0.0) continue;
      const double s = std::sqrt(disc);
      t = -b - s;
      if (!(t > kEps)) t = -b + s;
      if (!(t > kEps)) continue;
      normal = (o + t * d - p.center) / r;
      u = (std::atan2(normal.y(), normal.x()) + kPi) / (2.0 * kPi);
      v = std::acos(std::clamp(normal.z(), -1.0, 1.0)) / kPi;
    } else {
      const Vector3d lo = p.center - 0.5 * p.size, hi = p.center + 0.5 * p.size;
      double tmin = -1e300, tmax = 1e300;
      int axis_in = 0, axis_out = 0;
      bool miss = false;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(d[k]) < 1e-15) {
          if (o[k] < lo[k] || o[k] > hi[k]) miss = true;
          continue;
        }
        double t0 = (lo[k] - o[k]) / d[k], t1 = (hi[k] - o[k]) / d[k];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
          tmin = t0;
          axis_in = k;
        }
        if (t1 < tmax) {
          tmax = t1;
          axis_out = k;
        }
      }
      if (miss || tmin > tmax) continue;
      int axis = axis_in;
      t = tmin;
      if (!(t > kEps)) {
        t = tmax;
        axis = axis_out;
      }
      if (!(t > kEps)) continue;
      const Vector3d q = o + t * d;
      const bool positive = std::abs(q[axis] - hi[axis]) < std::abs(q[axis] - lo[axis]);
      normal = Vector3d::Zero();
      normal[axis] = positive ? 1.0 : -1.0;
      face = 2 * axis + (positive ? 1 : 0);
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      u = (q[a1] - lo[a1]) / p.size[a1];
      v = (q[a2] - lo[a2]) / p.size[a2];
    }
    if (!best || t < best->distance) {
      SceneHit h;
      h.distance = t;
      h.point = o + t * d;
      h.normal = normal;
      h.albedo = albedo(i, face, u, v);
      best = h;
    }
  }
  return best;
}

double SyntheticScene::spot_factor(const AppearanceVariant& look, const Vector3d& p) {
  double f = 1.0;
  for (const LightSpot& s : look.spots) {
    const double q = (p - s.position).norm() / s.radius;
    if (q < 1.0) {
      const double w = 1.0 - q * q;
      f += s.intensity * w * w;
    }
  }
  return f;
}

Vector3d SyntheticScene::tone(const AppearanceVariant& look, const Vector3d& radiance) {
  Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double g = look.gain * radiance[c];
    out[c] = look.white_balance[c] * (look.gamma == 1.0 ? g : std::pow(g, look.gamma));
  }
  return out;
}

ViewRender SyntheticScene::render_view(int view, const AppearanceVariant& look) const {
  if (view < 0 || view >= spec_.views) throw ContractViolation("scenegen: view index out of range");
  const Camera cam = camera(view);
  const int H = spec_.height, W = spec_.width, HW = H * W;
  ViewRender out;
  out.radiance = ad::Tensor::zeros({1, 3, H, W});
  out.toned = ad::Tensor::zeros({1, 3, H, W});
  out.image = ad::Tensor::zeros({1, 3, H, W});
  out.depth = ad::Tensor::zeros({1, 1, H, W});
  out.gt_mask = ad::Tensor::full({1, 1, H, W}, 1.0);
  auto rad = out.radiance.mutable_values();
  auto ton = out.toned.mutable_values();
  auto img = out.image.mutable_values();
  auto dep = out.depth.mutable_values();
  const Vector3d sun = spec_.sun.normalized();
  const Vector3d origin = cam.center();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Vector3d dir_view((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
      const Vector3d dir = (cam.rotation.transpose() * dir_view).normalized();
      Vector3d radiance = kSky;
      if (const auto hit = trace(origin, dir)) {
        const double lambert = 0.35 + 0.65 * std::max(0.0, hit->normal.dot(sun));
        radiance = hit->albedo * lambert * spot_factor(look, hit->point);
        dep[y * W + x] = cam.to_view(hit->point).z();
      }
      const Vector3d toned = tone(look, radiance);
      for (int c = 0; c < 3; ++c) {
        rad[c * HW + y * W + x] = radiance[c];
        ton[c * HW + y * W + x] = toned[c];
        img[c * HW + y * W + x] = std::clamp(toned[c], 0.0, 1.0);
      }
    }
  return out;
}

ViewRender SyntheticScene::render_view(int view) const {
  ViewRender out = render_view(view, spec_.variants[variant_of_.at(view)]);
  if (occluded_[view]) draw_sprites(view, out);
  return out;
}

void SyntheticScene::draw_sprites(int view, ViewRender& out) const {
  const int H = spec_.height, W = spec_.width, HW = H * W;
  std::mt19937_64 rng(mix(spec_.seed, 1000 + view));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int count = 1 + static_cast<int>(unit(rng) * spec_.occluders.max_per_view) % spec_.occluders.max_per_view;

  struct Sprite {
    Eigen::Vector2d center;
    double radius;
    std::vector<double> angles;
    Vector3d color;
  };
  std::vector<Sprite> sprites(count);
  const double side = std::min(W, H);
  for (Sprite& s : sprites) {
    s.center = {W * (0.1 + 0.8 * unit(rng)), H * (0.1 + 0.8 * unit(rng))};
    s.radius = side * (0.08 + 0.1 * unit(rng));
    const int k = 3 + static_cast<int>(unit(rng) * 5);
    const double start = 2.0 * kPi * unit(rng);
    for (int v = 0; v < k; ++v) s.angles.push_back(start + 2.0 * kPi * (v + 0.35 * (unit(rng) - 0.5)) / k);
    s.color = hsv_to_rgb(unit(rng), 1.0, 0.85 + 0.15 * unit(rng));
  }

  // Vertices on a circle in angular order form a convex polygon.
  auto inside = [](const Sprite& s, double scale, double px, double py) {
    const std::size_t k = s.angles.size();
    for (std::size_t a = 0; a < k; ++a) {
      const double t0 = s.angles[a], t1 = s.angles[(a + 1) % k];
      const Eigen::Vector2d p0 = s.center + scale * s.radius * Eigen::Vector2d(std::cos(t0), std::sin(t0));
      const Eigen::Vector2d p1 = s.center + scale * s.radius * Eigen::Vector2d(std::cos(t1), std::sin(t1));
      const double cross = (p1.x() - p0.x()) * (py - p0.y()) - (p1.y() - p0.y()) * (px - p0.x());
      if (cross < 0.0) return false;
    }
    return true;
  };

  std::vector<int> owner(HW, -1);
  double scale = 1.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    int covered = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        owner[y * W + x] = -1;
        for (int s = 0; s < count; ++s)
          if (sprites[s].angles.size() >= 3 && inside(sprites[s], scale, x + 0.5, y + 0.5)) owner[y * W + x] = s;
        if (owner[y * W + x] >= 0) ++covered;
      }
    if (covered <= spec_.occluders.max_coverage * HW) break;
    scale *= 0.85;
  }

  auto img = out.image.mutable_values();
  auto mask = out.gt_mask.mutable_values();
  for (int p = 0; p < HW; ++p) {
    if (owner[p] < 0) continue;
    for (int c = 0; c < 3; ++c) img[c * HW + p] = sprites[owner[p]].color[c];
    mask[p] = 0.0;
  }
}

void SyntheticScene::sample_points(std::vector<Vector3d>& points, std::vector<Vector3d>& colors) const {
  points.clear();
  colors.clear();
  std::mt19937_64 rng(mix(spec_.seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Vector3d sun = spec_.sun.normalized();
  for (long attempt = 0; static_cast<int>(points.size()) < spec_.points && attempt < 50L * spec_.points + 1000;
       ++attempt) {
    const Camera cam = camera(static_cast<int>(unit(rng) * spec_.views) % spec_.views);
    const double px = unit(rng) * spec_.width, py = unit(rng) * spec_.height;
    const Vector3d dir = (cam.rotation.transpose() * Vector3d((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0))
                             .normalized();
    const auto hit = trace(cam.center(), dir);
    if (!hit) continue;
    Vector3d p = hit->point;
    if (spec_.point_noise > 0.0) p += spec_.point_noise * Vector3d(noise(rng), noise(rng), noise(rng));
    points.push_back(p);
    colors.push_back((hit->albedo * (0.35 + 0.65 * std::max(0.0, hit->normal.dot(sun)))).cwiseMin(1.0));
  }
}

void generate(const SceneSpec& spec, const std::string& out_dir) {
  const SyntheticScene scene(spec);
  const fs::path root(out_dir);
  std::error_code ec;
  for (const char* sub : {kImagesDir, kDepthDir, kMasksDir}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw IoError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  std::vector<Camera> cameras;
  for (int v = 0; v < spec.views; ++v) {
    const ViewRender r = scene.render_view(v);
    const std::string stem = view_stem(v);
    write_image((root / kImagesDir / (stem + ".png")).string(), r.image);
    write_depth((root / kDepthDir / (stem + ".pgm")).string(), r.depth);
    write_image((root / kMasksDir / (stem + ".png")).string(), r.gt_mask);
    cameras.push_back(scene.camera(v));
  }
  write_cameras((root / kCamerasFile).string(), cameras);
  std::vector<Vector3d> points, colors;
  scene.sample_points(points, colors);
  write_points((root / kPointsFile).string(), points, colors);
  std::ofstream spec_out(root / kSpecFile);
  if (!spec_out) throw IoError("cannot write " + (root / kSpecFile).string());
  spec_out << to_json(spec) << '\n';
}

}  // namespace wildgs
