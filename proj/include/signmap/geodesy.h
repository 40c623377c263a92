#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "signmap/common.h"

namespace signmap {

// WGS84 ellipsoid.
namespace wgs84 {
inline constexpr double kSemiMajorAxis = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kSemiMinorAxis = kSemiMajorAxis * (1.0 - kFlattening);
inline constexpr double kFirstEccentricitySq =
    kFlattening * (2.0 - kFlattening);
inline constexpr double kSecondEccentricitySq =
    kFirstEccentricitySq / (1.0 - kFirstEccentricitySq);
}  // namespace wgs84

struct GeodeticCoord {
  double lat_deg = 0.0;  // [-90, 90]
  double lon_deg = 0.0;  // (-180, 180]
  double alt_m = 0.0;    // above the ellipsoid

  bool operator==(const GeodeticCoord&) const = default;
};

// Throws ValidationError when the coordinate is out of range or not finite.
void validate(const GeodeticCoord& g);

struct EcefCoord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 vector() const { return {x, y, z}; }
  static EcefCoord from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
};

EcefCoord geodetic_to_ecef(const GeodeticCoord& g);

// Iterative Bowring inverse. Throws ValidationError within 1 km of the
// Earth's center where latitude is undefined.
GeodeticCoord ecef_to_geodetic(const EcefCoord& e);

// Local East-North-Up tangent frame. All metric thresholds of the engine
// are Euclidean meters in this frame.
class EnuFrame {
 public:
  explicit EnuFrame(const GeodeticCoord& origin);

  const GeodeticCoord& origin() const { return origin_; }
  // Rows are the east, north and up axes expressed in ECEF.
  const Mat3& basis() const { return basis_; }

  Vec3 project(const GeodeticCoord& g) const;
  GeodeticCoord unproject(const Vec3& enu) const;

  Vec3 project_ecef(const EcefCoord& e) const;
  EcefCoord unproject_ecef(const Vec3& enu) const;

  // East/north of a latitude/longitude pair taken at the origin altitude.
  // Used for records that carry no altitude.
  Eigen::Vector2d horizontal(double lat_deg, double lon_deg) const;

 private:
  GeodeticCoord origin_;
  Vec3 origin_ecef_;
  Mat3 basis_;
};

// x -> scale * rotation * x + translation
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform inverse() const;
};

// Throws ValidationError unless scale > 0 and rotation is proper orthonormal.
void validate(const SimilarityTransform& t);

Vec3 apply_similarity(const SimilarityTransform& t, const Vec3& p);

// Closed-form least-squares similarity (Umeyama) minimizing
// sum |s R src_i + t - dst_i|^2 with det(R) = +1.
//
// Requires at least three correspondences that are not collinear: the
// second singular value of the cross-covariance must exceed 1e-12 of the
// largest.
SimilarityTransform estimate_similarity(std::span<const Vec3> src,
                                        std::span<const Vec3> dst);

// Root mean square of |T(src_i) - dst_i|.
double similarity_residual_rms(const SimilarityTransform& t,
                               std::span<const Vec3> src,
                               std::span<const Vec3> dst);

// One row of the geo-registration correspondence file.
struct GeoCorrespondence {
  std::string image_name;
  GeodeticCoord coord;
};

// CSV with header `image_name,lat_deg,lon_deg,alt_m`.
std::vector<GeoCorrespondence> read_georegistration_csv(
    const std::filesystem::path& path);
void write_georegistration_csv(const std::filesystem::path& path,
                               std::span<const GeoCorrespondence> rows);

}  // namespace signmap
