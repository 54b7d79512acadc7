#include "wildgs/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "wildgs/errors.hpp"
#include "wildgs/image_io.hpp"

namespace fs = std::filesystem;

namespace wildgs {

std::string view_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return buf;
}

std::vector<Camera> read_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw IoError(path + ": expected an array of cameras");
  std::vector<Camera> cameras;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    const std::string where = path + " view " + std::to_string(i);
    try {
      const auto m = e.at("world_to_camera").get<std::vector<double>>();
      if (m.size() != 16) throw IoError(where + ": world_to_camera needs 16 values");
      Eigen::Matrix4d w2c;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) w2c(r, c) = m[4 * r + c];
      cameras.push_back(Camera::from_world_to_camera(w2c, e.at("fx").get<double>(), e.at("fy").get<double>(),
                                                     e.at("cx").get<double>(), e.at("cy").get<double>(),
                                                     e.at("w").get<int>(), e.at("h").get<int>()));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(where + ": " + ex.what());
    } catch (const ContractViolation& ex) {
      throw IoError(where + ": " + ex.what());
    }
  }
  return cameras;
}

void write_cameras(const std::string& path, const std::vector<Camera>& cameras) {
  nlohmann::json doc = nlohmann::json::array();
  for (const Camera& cam : cameras) {
    const Eigen::Matrix4d m = cam.world_to_camera();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    doc.push_back({{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"w", cam.width},
                   {"h", cam.height}, {"world_to_camera", flat}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(1) << '\n';
}

std::vector<Eigen::Vector3d> read_points(const std::string& path, std::vector<Eigen::Vector3d>* colors) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Eigen::Vector3d> points;
  if (colors) colors->clear();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v[6];
    for (double& x : v)
      if (!(ls >> x)) throw IoError(path + " line " + std::to_string(lineno) + ": expected x y z r g b");
    const Eigen::Vector3d p(v[0], v[1], v[2]);
    if (!p.allFinite()) throw IoError(path + " line " + std::to_string(lineno) + ": non-finite position");
    points.push_back(p);
    if (colors) colors->emplace_back(v[3], v[4], v[5]);
  }
  return points;
}

void write_points(const std::string& path, const std::vector<Eigen::Vector3d>& points,
                  const std::vector<Eigen::Vector3d>& colors) {
  if (colors.size() != points.size()) throw ContractViolation("write_points: colour count differs");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z() << ' ' << colors[i].x() << ' '
        << colors[i].y() << ' ' << colors[i].z() << '\n';
  }
}

namespace {

void make_split(DatasetManifest& m, const SplitSpec& split) {
  const int n = static_cast<int>(m.views.size());
  std::set<int> test;
  if (split.test_indices) {
    for (int i : *split.test_indices) {
      if (i < 0 || i >= n) throw ContractViolation("split: test index " + std::to_string(i) + " out of range");
      test.insert(i);
    }
  } else if (split.every_nth > 0) {
    for (int i = 0; i < n; i += split.every_nth) test.insert(i);
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(split.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int count = static_cast<int>(std::lround(split.test_fraction * n));
    test.insert(order.begin(), order.begin() + std::clamp(count, 0, n));
  }
  m.test.assign(test.begin(), test.end());
  m.train.clear();
  for (int i = 0; i < n; ++i)
    if (!test.count(i)) m.train.push_back(i);
}

}  // namespace

DatasetManifest load_dataset(const std::string& dir, const SplitSpec& split) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw IoError("dataset directory " + dir + " does not exist");
  DatasetManifest m;
  m.root = dir;
  const std::vector<Camera> cameras = read_cameras((root / kCamerasFile).string());

  int images = 0;
  const fs::path image_dir = root / kImagesDir;
  if (!fs::is_directory(image_dir)) throw IoError("missing directory " + image_dir.string());
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.path().extension() == ".png") ++images;

  for (int i = 0; i < std::max<int>(images, static_cast<int>(cameras.size())); ++i) {
    const fs::path image = image_dir / (view_stem(i) + ".png");
    if (!fs::exists(image)) throw IoError("view " + std::to_string(i) + ": missing image " + image.string());
    if (i >= static_cast<int>(cameras.size())) {
      throw IoError("view " + std::to_string(i) + ": image " + image.string() + " has no camera entry");
    }
    ViewRecord rec;
    rec.image_path = image.string();
    rec.camera = cameras[i];
    const fs::path depth = root / kDepthDir / (view_stem(i) + ".pgm");
    if (fs::exists(depth)) rec.depth_path = depth.string();
    const fs::path mask = root / kMasksDir / (view_stem(i) + ".png");
    if (fs::exists(mask)) rec.mask_path = mask.string();
    m.views.push_back(std::move(rec));
  }

  // Decode everything once so corrupt files fault here, naming the path.
  for (std::size_t i = 0; i < m.views.size(); ++i) {
    const ViewData v = load_view(m, static_cast<int>(i));
    (void)v;
  }

  const fs::path points = root / kPointsFile;
  if (fs::exists(points)) m.points = read_points(points.string(), &m.point_colors);
  make_split(m, split);
  return m;
}

ViewData load_view(const DatasetManifest& manifest, int index) {
  if (index < 0 || index >= static_cast<int>(manifest.views.size())) {
    throw ContractViolation("view " + std::to_string(index) + " out of range");
  }
  const ViewRecord& rec = manifest.views[index];
  ViewData v;
  v.camera = rec.camera;
  v.image = read_image(rec.image_path, 3);
  auto check = [&](const ad::Tensor& t, const std::string& path) {
    if (t.size(2) != rec.camera.height || t.size(3) != rec.camera.width) {
      throw IoError("view " + std::to_string(index) + ": " + path + " size does not match its camera");
    }
  };
  check(v.image, rec.image_path);
  if (rec.depth_path) {
    v.depth = read_depth(*rec.depth_path);
    check(v.depth, *rec.depth_path);
  }
  if (rec.mask_path) {
    v.mask = read_image(*rec.mask_path, 1);
    check(v.mask, *rec.mask_path);
  }
  return v;
}

}  // namespace wildgs
