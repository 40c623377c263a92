#pragma once

#include <Eigen/Geometry>

#include <optional>

#include "signmap/common.h"

namespace signmap {

enum class CameraModel { kSimplePinhole, kPinhole };

struct CameraIntrinsics {
  int camera_id = 0;
  CameraModel model = CameraModel::kPinhole;
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 calibration_matrix() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// Throws ValidationError on non-positive focal length or a principal point
// outside the image.
void validate(const CameraIntrinsics& k);

// World-to-camera pose as stored in the sparse model:
// x_cam = R_wc * x_world + t_wc.
struct CameraPose {
  Eigen::Quaterniond rotation_wc = Eigen::Quaterniond::Identity();
  Vec3 translation_wc = Vec3::Zero();

  Mat3 rotation_matrix() const { return rotation_wc.toRotationMatrix(); }
  Vec3 to_camera(const Vec3& p_world) const {
    return rotation_wc * p_world + translation_wc;
  }

  static CameraPose from_center(const Mat3& rotation_wc, const Vec3& center);

  bool operator==(const CameraPose& other) const {
    return rotation_wc.coeffs() == other.rotation_wc.coeffs() &&
           translation_wc == other.translation_wc;
  }
};

// Throws ValidationError unless the quaternion has unit norm within 1e-9.
void validate(const CameraPose& pose);

// C = -R^T t
Vec3 camera_center(const CameraPose& pose);

inline constexpr double kMinProjectionDepth = 1e-6;

// Pinhole projection. Empty when the point is at or behind z_min or lands
// outside [0, width) x [0, height).
std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& k,
                                             const CameraPose& pose,
                                             const Vec3& p_world);

}  // namespace signmap
