#include "signmap/geodesy.h"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <sstream>

#include "signmap/csv.h"

namespace signmap {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

bool is_rotation(const Mat3& r, double tol) {
  return (r * r.transpose() - Mat3::Identity()).norm() < tol &&
         r.determinant() > 0.0;
}

}  // namespace

void validate(const GeodeticCoord& g) {
  if (!std::isfinite(g.lat_deg) || !std::isfinite(g.lon_deg) ||
      !std::isfinite(g.alt_m)) {
    throw ValidationError("geodetic coordinate is not finite");
  }
  if (g.lat_deg < -90.0 || g.lat_deg > 90.0) {
    throw ValidationError("latitude out of range: " + format_double(g.lat_deg));
  }
  if (g.lon_deg <= -180.0 || g.lon_deg > 180.0) {
    throw ValidationError("longitude out of range: " +
                          format_double(g.lon_deg));
  }
}

EcefCoord geodetic_to_ecef(const GeodeticCoord& g) {
  validate(g);
  const double lat = g.lat_deg * kDegToRad;
  const double lon = g.lon_deg * kDegToRad;
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  const double n = wgs84::kSemiMajorAxis /
                   std::sqrt(1.0 - wgs84::kFirstEccentricitySq * sin_lat * sin_lat);
  return {(n + g.alt_m) * cos_lat * std::cos(lon),
          (n + g.alt_m) * cos_lat * std::sin(lon),
          (n * (1.0 - wgs84::kFirstEccentricitySq) + g.alt_m) * sin_lat};
}

GeodeticCoord ecef_to_geodetic(const EcefCoord& e) {
  const double a = wgs84::kSemiMajorAxis;
  const double b = wgs84::kSemiMinorAxis;
  const double e2 = wgs84::kFirstEccentricitySq;
  const double ep2 = wgs84::kSecondEccentricitySq;

  if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.z)) {
    throw ValidationError("ECEF coordinate is not finite");
  }
  const double p = std::hypot(e.x, e.y);
  if (std::hypot(p, e.z) < 1000.0) {
    throw ValidationError("ECEF point too close to the Earth's center");
  }

  double lon = std::atan2(e.y, e.x);
  double lat;
  if (p < 1e-9) {
    lat = std::copysign(std::numbers::pi / 2.0, e.z);
  } else {
    // Bowring's initial guess, refined by fixed-point iteration on the
    // parametric latitude.
    double beta = std::atan2(e.z * a, p * b);
    lat = std::atan2(e.z + ep2 * b * std::pow(std::sin(beta), 3),
                     p - e2 * a * std::pow(std::cos(beta), 3));
    for (int i = 0; i < 8; ++i) {
      beta = std::atan2((1.0 - wgs84::kFlattening) * std::sin(lat),
                        std::cos(lat));
      const double next =
          std::atan2(e.z + ep2 * b * std::pow(std::sin(beta), 3),
                     p - e2 * a * std::pow(std::cos(beta), 3));
      const bool converged = std::abs(next - lat) < 1e-15;
      lat = next;
      if (converged) break;
    }
  }
  const double sin_lat = std::sin(lat);
  const double alt = p * std::cos(lat) + e.z * sin_lat -
                     a * std::sqrt(1.0 - e2 * sin_lat * sin_lat);

  double lon_deg = lon * kRadToDeg;
  if (lon_deg <= -180.0) lon_deg += 360.0;
  return {lat * kRadToDeg, lon_deg, alt};
}

EnuFrame::EnuFrame(const GeodeticCoord& origin) : origin_(origin) {
  validate(origin);
  origin_ecef_ = geodetic_to_ecef(origin).vector();
  const double lat = origin.lat_deg * kDegToRad;
  const double lon = origin.lon_deg * kDegToRad;
  const double sl = std::sin(lat), cl = std::cos(lat);
  const double so = std::sin(lon), co = std::cos(lon);
  basis_ << -so, co, 0.0,
            -sl * co, -sl * so, cl,
            cl * co, cl * so, sl;
}

Vec3 EnuFrame::project_ecef(const EcefCoord& e) const {
  return basis_ * (e.vector() - origin_ecef_);
}

EcefCoord EnuFrame::unproject_ecef(const Vec3& enu) const {
  return EcefCoord::from(basis_.transpose() * enu + origin_ecef_);
}

Vec3 EnuFrame::project(const GeodeticCoord& g) const {
  return project_ecef(geodetic_to_ecef(g));
}

GeodeticCoord EnuFrame::unproject(const Vec3& enu) const {
  return ecef_to_geodetic(unproject_ecef(enu));
}

Eigen::Vector2d EnuFrame::horizontal(double lat_deg, double lon_deg) const {
  return project({lat_deg, lon_deg, origin_.alt_m}).head<2>();
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

void validate(const SimilarityTransform& t) {
  if (!(t.scale > 0.0) || !std::isfinite(t.scale)) {
    throw ValidationError("similarity scale must be positive");
  }
  if (!is_rotation(t.rotation, 1e-9)) {
    throw ValidationError("similarity rotation is not a proper rotation");
  }
  if (!t.translation.allFinite()) {
    throw ValidationError("similarity translation is not finite");
  }
}

Vec3 apply_similarity(const SimilarityTransform& t, const Vec3& p) {
  return t.apply(p);
}

SimilarityTransform estimate_similarity(std::span<const Vec3> src,
                                        std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw ValidationError("similarity: correspondence lists differ in length");
  }
  const size_t n = src.size();
  if (n < 3) {
    throw ValidationError("similarity: need at least 3 correspondences, got " +
                          std::to_string(n));
  }

  Vec3 mean_src = Vec3::Zero();
  Vec3 mean_dst = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    if (!src[i].allFinite() || !dst[i].allFinite()) {
      throw ValidationError("similarity: non-finite correspondence");
    }
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= static_cast<double>(n);
  mean_dst /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double var_src = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 s = src[i] - mean_src;
    const Vec3 d = dst[i] - mean_dst;
    cov += d * s.transpose();
    var_src += s.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(1) > 1e-12 * sv(0))) {
    throw ValidationError(
        "similarity: degenerate (collinear or coincident) correspondences");
  }

  Vec3 sign = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    sign(2) = -1.0;
  }

  SimilarityTransform t;
  t.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  t.scale = sv.dot(sign) / var_src;
  t.translation = mean_dst - t.scale * (t.rotation * mean_src);
  return t;
}

double similarity_residual_rms(const SimilarityTransform& t,
                               std::span<const Vec3> src,
                               std::span<const Vec3> dst) {
  if (src.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(src.size()));
}

std::vector<GeoCorrespondence> read_georegistration_csv(
    const std::filesystem::path& path) {
  CsvReader csv(path, "image_name,lat_deg,lon_deg,alt_m");
  std::vector<GeoCorrespondence> rows;
  while (csv.next()) {
    GeoCorrespondence row;
    row.image_name = csv.fields()[0];
    if (row.image_name.empty()) csv.fail("empty image name");
    row.coord = {csv.number(1), csv.number(2), csv.number(3)};
    try {
      validate(row.coord);
    } catch (const ValidationError& e) {
      csv.fail(e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_georegistration_csv(const std::filesystem::path& path,
                               std::span<const GeoCorrespondence> rows) {
  std::ostringstream out;
  out << "image_name,lat_deg,lon_deg,alt_m\n";
  for (const auto& row : rows) {
    out << row.image_name << ',' << format_double(row.coord.lat_deg) << ','
        << format_double(row.coord.lon_deg) << ','
        << format_double(row.coord.alt_m) << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace signmap
