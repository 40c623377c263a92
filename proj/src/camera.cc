#include "signmap/camera.h"

#include <cmath>

namespace signmap {

Mat3 CameraIntrinsics::calibration_matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void validate(const CameraIntrinsics& k) {
  if (k.width <= 0 || k.height <= 0) {
    throw ValidationError("camera " + std::to_string(k.camera_id) +
                          ": image size must be positive");
  }
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
    throw ValidationError("camera " + std::to_string(k.camera_id) +
                          ": focal length must be positive");
  }
  if (!(k.cx >= 0.0 && k.cx < k.width && k.cy >= 0.0 && k.cy < k.height)) {
    throw ValidationError("camera " + std::to_string(k.camera_id) +
                          ": principal point outside the image");
  }
}

CameraPose CameraPose::from_center(const Mat3& rotation_wc,
                                   const Vec3& center) {
  CameraPose pose;
  pose.rotation_wc = Eigen::Quaterniond(rotation_wc).normalized();
  pose.translation_wc = -(pose.rotation_wc * center);
  return pose;
}

void validate(const CameraPose& pose) {
  if (!pose.rotation_wc.coeffs().allFinite() ||
      !pose.translation_wc.allFinite()) {
    throw ValidationError("camera pose is not finite");
  }
  if (std::abs(pose.rotation_wc.norm() - 1.0) > 1e-9) {
    throw ValidationError("camera pose quaternion is not unit length");
  }
}

Vec3 camera_center(const CameraPose& pose) {
  return -(pose.rotation_wc.conjugate() * pose.translation_wc);
}

std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& k,
                                             const CameraPose& pose,
                                             const Vec3& p_world) {
  const Vec3 x = pose.to_camera(p_world);
  if (!(x.z() > kMinProjectionDepth)) return std::nullopt;
  const double u = k.fx * x.x() / x.z() + k.cx;
  const double v = k.fy * x.y() / x.z() + k.cy;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) {
    return std::nullopt;
  }
  return Eigen::Vector2d(u, v);
}

}  // namespace signmap
