#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "signmap/camera.h"
#include "signmap/geodesy.h"

namespace signmap {

using ImageId = std::int64_t;
using Point3dId = std::int64_t;

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  std::optional<Point3dId> point3d_id;

  bool operator==(const Keypoint&) const = default;
};

struct ImageRecord {
  ImageId image_id = 0;
  std::string name;
  CameraPose pose;
  int camera_id = 0;
  std::vector<Keypoint> keypoints;

  bool operator==(const ImageRecord&) const = default;
};

struct TrackElement {
  ImageId image_id = 0;
  std::uint32_t keypoint_index = 0;

  bool operator==(const TrackElement&) const = default;
};

struct ScenePoint {
  Point3dId point3d_id = 0;
  Vec3 xyz = Vec3::Zero();
  std::array<std::uint8_t, 3> rgb{};
  double reproj_error = 0.0;
  std::vector<TrackElement> track;

  bool operator==(const ScenePoint& other) const {
    return point3d_id == other.point3d_id && xyz == other.xyz &&
           rgb == other.rgb && reproj_error == other.reproj_error &&
           track == other.track;
  }
};

// Sparse model: cameras, posed images with keypoints, and triangulated
// points. When geo-registered the world frame is the local ENU frame
// anchored at `enu_origin`.
struct Reconstruction {
  std::map<int, CameraIntrinsics> cameras;
  std::map<ImageId, ImageRecord> images;
  std::map<Point3dId, ScenePoint> points;
  std::optional<GeodeticCoord> enu_origin;

  bool geo_registered() const { return enu_origin.has_value(); }
  EnuFrame enu_frame() const;

  const ImageRecord* find_image(const std::string& name) const;
  const CameraIntrinsics& camera_of(const ImageRecord& image) const;

  bool operator==(const Reconstruction&) const = default;
};

// Checks referential integrity across cameras, images and points, track /
// keypoint bidirectional consistency and unique image names. Throws
// ValidationError naming the offending image and keypoint.
void validate(const Reconstruction& r);

}  // namespace signmap
