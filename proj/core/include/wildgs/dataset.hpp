#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wildgs/camera.hpp"
#include "wildgs/tensor.hpp"

namespace wildgs {

/// On-disk layout, relative to the dataset root.
inline constexpr const char* kImagesDir = "images";
inline constexpr const char* kDepthDir = "depth";
inline constexpr const char* kMasksDir = "gt_masks";
inline constexpr const char* kCamerasFile = "cameras.json";
inline constexpr const char* kPointsFile = "points.txt";
inline constexpr const char* kSpecFile = "spec.json";

/// "007" style zero-padded view stem.
std::string view_stem(int index);

struct ViewRecord {
  std::string image_path;
  Camera camera;
  std::optional<std::string> depth_path;
  std::optional<std::string> mask_path;
};

/// How held-out views are chosen: an explicit list wins, then every_nth
/// (views 0, n, 2n, ...), otherwise a seeded shuffle taking test_fraction.
struct SplitSpec {
  std::optional<std::vector<int>> test_indices;
  int every_nth = 8;
  std::uint64_t seed = 0;
  double test_fraction = 0.125;
};

struct DatasetManifest {
  std::string root;
  std::vector<ViewRecord> views;
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> point_colors;
  std::vector<int> train;
  std::vector<int> test;
};

/// Validates the layout: every camera has an image, every image a camera,
/// files decode, cameras are rigid. Faults name the path or view.
DatasetManifest load_dataset(const std::string& dir, const SplitSpec& split = {});

std::vector<Eigen::Vector3d> read_points(const std::string& path, std::vector<Eigen::Vector3d>* colors = nullptr);
void write_points(const std::string& path, const std::vector<Eigen::Vector3d>& points,
                  const std::vector<Eigen::Vector3d>& colors);

std::vector<Camera> read_cameras(const std::string& path);
void write_cameras(const std::string& path, const std::vector<Camera>& cameras);

/// Decoded view data, images as 1 x C x H x W tensors.
struct ViewData {
  ad::Tensor image;  // 1 x 3 x H x W
  ad::Tensor depth;  // 1 x 1 x H x W, undefined when absent
  ad::Tensor mask;   // 1 x 1 x H x W static = 1, undefined when absent
  Camera camera;
};

ViewData load_view(const DatasetManifest& manifest, int index);

}  // namespace wildgs
