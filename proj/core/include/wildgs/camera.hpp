#pragma once

#include <Eigen/Core>

namespace wildgs {

/// Pinhole camera. View space is x right, y down, z forward; pixel (i, j)
/// covers [j, j+1) x [i, i+1) so its centre is (j + 0.5, i + 0.5).
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws ContractViolation unless fx, fy > 0, the image is non-empty and
  /// the rotation is orthonormal (1e-9) with determinant +1.
  void validate() const;

  Eigen::Vector3d to_view(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d to_world(const Eigen::Vector3d& view) const {
    return rotation.transpose() * (view - translation);
  }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  /// Pixel coordinates of a view-space point (z > 0).
  Eigen::Vector2d project_view(const Eigen::Vector3d& view) const {
    return {fx * view.x() / view.z() + cx, fy * view.y() / view.z() + cy};
  }

  /// World point at view-space depth `z` behind pixel coordinate (u, v).
  Eigen::Vector3d unproject(double u, double v, double z) const {
    return to_world(Eigen::Vector3d((u - cx) / fx * z, (v - cy) / fy * z, z));
  }

  Eigen::Matrix4d world_to_camera() const;
  static Camera from_world_to_camera(const Eigen::Matrix4d& m, double fx, double fy, double cx, double cy,
                                     int width, int height);

  /// Camera at `eye` looking at `target`; `up` is the world up direction
  /// (image y points against it).
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                        double fx, double fy, int width, int height);
};

}  // namespace wildgs
