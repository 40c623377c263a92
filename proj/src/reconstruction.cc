#include "signmap/reconstruction.h"

#include <cmath>
#include <set>

namespace signmap {

EnuFrame Reconstruction::enu_frame() const {
  if (!enu_origin) {
    throw ValidationError("reconstruction is not geo-registered");
  }
  return EnuFrame(*enu_origin);
}

const ImageRecord* Reconstruction::find_image(const std::string& name) const {
  for (const auto& [id, image] : images) {
    if (image.name == name) return &image;
  }
  return nullptr;
}

const CameraIntrinsics& Reconstruction::camera_of(
    const ImageRecord& image) const {
  const auto it = cameras.find(image.camera_id);
  if (it == cameras.end()) {
    throw ValidationError("image '" + image.name + "' references unknown camera " +
                          std::to_string(image.camera_id));
  }
  return it->second;
}

void validate(const Reconstruction& r) {
  for (const auto& [id, camera] : r.cameras) {
    if (id != camera.camera_id) {
      throw ValidationError("camera map key mismatch for camera " +
                            std::to_string(camera.camera_id));
    }
    validate(camera);
  }

  std::set<std::string> names;
  for (const auto& [id, image] : r.images) {
    if (id != image.image_id) {
      throw ValidationError("image map key mismatch for image " +
                            std::to_string(image.image_id));
    }
    if (!names.insert(image.name).second) {
      throw ValidationError("duplicate image name '" + image.name + "'");
    }
    if (!r.cameras.contains(image.camera_id)) {
      throw ValidationError("image '" + image.name +
                            "' references unknown camera " +
                            std::to_string(image.camera_id));
    }
    validate(image.pose);
    for (size_t k = 0; k < image.keypoints.size(); ++k) {
      const Keypoint& kp = image.keypoints[k];
      if (!std::isfinite(kp.x) || !std::isfinite(kp.y)) {
        throw ValidationError("image '" + image.name + "' keypoint " +
                              std::to_string(k) + " is not finite");
      }
      if (!kp.point3d_id) continue;
      const auto pit = r.points.find(*kp.point3d_id);
      if (pit == r.points.end()) {
        throw ValidationError("image '" + image.name + "' keypoint " +
                              std::to_string(k) +
                              " references missing 3D point " +
                              std::to_string(*kp.point3d_id));
      }
      bool listed = false;
      for (const auto& el : pit->second.track) {
        if (el.image_id == id && el.keypoint_index == k) {
          listed = true;
          break;
        }
      }
      if (!listed) {
        throw ValidationError("image '" + image.name + "' keypoint " +
                              std::to_string(k) + " is not in the track of 3D point " +
                              std::to_string(*kp.point3d_id));
      }
    }
  }

  for (const auto& [id, point] : r.points) {
    if (id != point.point3d_id) {
      throw ValidationError("point map key mismatch for point " +
                            std::to_string(point.point3d_id));
    }
    if (!point.xyz.allFinite()) {
      throw ValidationError("3D point " + std::to_string(id) +
                            " is not finite");
    }
    for (const auto& el : point.track) {
      const auto iit = r.images.find(el.image_id);
      if (iit == r.images.end()) {
        throw ValidationError("3D point " + std::to_string(id) +
                              " track references missing image " +
                              std::to_string(el.image_id));
      }
      const auto& kps = iit->second.keypoints;
      if (el.keypoint_index >= kps.size() ||
          kps[el.keypoint_index].point3d_id != id) {
        throw ValidationError("3D point " + std::to_string(id) +
                              " track entry (image '" + iit->second.name +
                              "', keypoint " +
                              std::to_string(el.keypoint_index) +
                              ") does not link back");
      }
    }
  }

  if (r.enu_origin) validate(*r.enu_origin);
}

}  // namespace signmap
