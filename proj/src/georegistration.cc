#include "signmap/georegistration.h"

#include <vector>

namespace signmap {

Reconstruction transform_model(const Reconstruction& model,
                               const SimilarityTransform& t) {
  validate(t);
  Reconstruction out = model;
  for (auto& [id, image] : out.images) {
    const Vec3 center = t.apply(camera_center(image.pose));
    const Mat3 rotation = image.pose.rotation_matrix() * t.rotation.transpose();
    image.pose = CameraPose::from_center(rotation, center);
  }
  for (auto& [id, point] : out.points) {
    point.xyz = t.apply(point.xyz);
  }
  return out;
}

GeoRegistrationResult georegister(const Reconstruction& model,
                                  std::span<const GeoCorrespondence> refs) {
  if (refs.size() < 3) {
    throw ValidationError("geo-registration needs at least 3 reference images");
  }
  const EnuFrame frame(refs.front().coord);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const auto& ref : refs) {
    const ImageRecord* image = model.find_image(ref.image_name);
    if (image == nullptr) {
      throw ValidationError("geo-registration image '" + ref.image_name +
                            "' is not in the model");
    }
    src.push_back(camera_center(image->pose));
    dst.push_back(frame.project(ref.coord));
  }

  GeoRegistrationResult result;
  result.transform = estimate_similarity(src, dst);
  result.residual_rms_m = similarity_residual_rms(result.transform, src, dst);
  result.model = transform_model(model, result.transform);
  result.model.enu_origin = frame.origin();
  return result;
}

}  // namespace signmap
