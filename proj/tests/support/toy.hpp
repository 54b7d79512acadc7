#pragma once

#include <vector>

#include "wildgs/dataset.hpp"
#include "wildgs/scenegen.hpp"

namespace testutil {

struct ToyData {
  wildgs::SceneSpec spec;
  std::vector<wildgs::ViewData> views;
  std::vector<wildgs::Camera> cameras;
  std::vector<Eigen::Vector3d> points, colors;
};

/// The default scene shrunk to `size` pixels, `views` views and `points`
/// surface samples, decoded in memory.
inline ToyData tiny_toy(int size = 16, int views = 6, int points = 150, std::uint64_t seed = 1) {
  ToyData t;
  t.spec = wildgs::default_scene_spec();
  t.spec.seed = seed;
  t.spec.width = t.spec.height = size;
  t.spec.focal *= size / 64.0;
  t.spec.views = views;
  t.spec.points = points;
  wildgs::SyntheticScene scene(t.spec);
  for (int v = 0; v < views; ++v) {
    const auto r = scene.render_view(v);
    wildgs::ViewData d;
    d.image = r.image;
    d.depth = r.depth;
    d.mask = r.gt_mask;
    d.camera = scene.camera(v);
    t.views.push_back(d);
    t.cameras.push_back(d.camera);
  }
  scene.sample_points(t.points, t.colors);
  return t;
}

}  // namespace testutil
