#include "wildgs/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "wildgs/errors.hpp"

namespace wildgs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractViolation("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ContractViolation("camera image size must be positive");
  const Eigen::Matrix3d should_be_identity = rotation * rotation.transpose();
  if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      rotation.determinant() < 0.0) {
    throw ContractViolation("camera rotation is not a proper orthonormal matrix");
  }
  if (!translation.allFinite()) throw ContractViolation("camera translation is not finite");
}

Eigen::Matrix4d Camera::world_to_camera() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Camera Camera::from_world_to_camera(const Eigen::Matrix4d& m, double fx, double fy, double cx, double cy,
                                    int width, int height) {
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.rotation = m.topLeftCorner<3, 3>();
  cam.translation = m.topRightCorner<3, 1>();
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw ContractViolation("world_to_camera bottom row must be 0 0 0 1");
  }
  cam.validate();
  return cam;
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double fx, double fy, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

}  // namespace wildgs
