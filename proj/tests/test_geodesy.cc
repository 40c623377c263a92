#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "signmap/csv.h"
#include "signmap/geodesy.h"
#include "signmap/georegistration.h"
#include "test_support.h"

namespace signmap {
namespace {

using testing::random_rotation;
using testing::random_vec;
using testing::TempDir;

constexpr double kPi = std::numbers::pi;

// Textbook closed form, evaluated in long double.
Vec3 reference_ecef(double lat_deg, double lon_deg, double alt) {
  const long double a = 6378137.0L;
  const long double f = 1.0L / 298.257223563L;
  const long double e2 = f * (2 - f);
  const long double lat = lat_deg * 3.141592653589793238462643L / 180;
  const long double lon = lon_deg * 3.141592653589793238462643L / 180;
  const long double n = a / std::sqrt(1 - e2 * std::sin(lat) * std::sin(lat));
  return {static_cast<double>((n + alt) * std::cos(lat) * std::cos(lon)),
          static_cast<double>((n + alt) * std::cos(lat) * std::sin(lon)),
          static_cast<double>((n * (1 - e2) + alt) * std::sin(lat))};
}

TEST(Geodesy, EcefMatchesClosedForm) {
  const EcefCoord e = geodetic_to_ecef({60.19, 24.83, 20.0});
  const Vec3 ref = reference_ecef(60.19, 24.83, 20.0);
  EXPECT_NEAR(e.x, ref.x(), 1e-6);
  EXPECT_NEAR(e.y, ref.y(), 1e-6);
  EXPECT_NEAR(e.z, ref.z(), 1e-6);
}

TEST(Geodesy, EcefAxes) {
  const EcefCoord eq = geodetic_to_ecef({0.0, 0.0, 0.0});
  EXPECT_NEAR(eq.x, wgs84::kSemiMajorAxis, 1e-9);
  EXPECT_NEAR(eq.y, 0.0, 1e-9);
  EXPECT_NEAR(eq.z, 0.0, 1e-9);
  const EcefCoord pole = geodetic_to_ecef({90.0, 0.0, 0.0});
  EXPECT_NEAR(pole.x, 0.0, 1e-6);
  EXPECT_NEAR(pole.z, wgs84::kSemiMinorAxis, 1e-6);
  const EcefCoord east = geodetic_to_ecef({0.0, 90.0, 100.0});
  EXPECT_NEAR(east.y, wgs84::kSemiMajorAxis + 100.0, 1e-6);
}

TEST(Geodesy, RoundTripRandom) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-89.999, 89.999);
  std::uniform_real_distribution<double> lon(-179.999, 180.0);
  std::uniform_real_distribution<double> alt(-500.0, 20000.0);
  for (int i = 0; i < 1000; ++i) {
    const GeodeticCoord g{lat(rng), lon(rng), alt(rng)};
    const GeodeticCoord back = ecef_to_geodetic(geodetic_to_ecef(g));
    EXPECT_NEAR(back.lat_deg, g.lat_deg, 1e-9);
    EXPECT_NEAR(back.lon_deg, g.lon_deg, 1e-9);
    EXPECT_NEAR(back.alt_m, g.alt_m, 1e-6);
  }
}

TEST(Geodesy, PolesAndAntimeridian) {
  for (const GeodeticCoord g : {GeodeticCoord{90.0, 0.0, 5.0}, GeodeticCoord{-90.0, 0.0, 5.0},
                                GeodeticCoord{10.0, 180.0, 0.0}}) {
    const GeodeticCoord back = ecef_to_geodetic(geodetic_to_ecef(g));
    EXPECT_NEAR(back.lat_deg, g.lat_deg, 1e-9);
    EXPECT_NEAR(back.alt_m, g.alt_m, 1e-6);
    if (std::abs(g.lat_deg) < 90.0) EXPECT_NEAR(back.lon_deg, g.lon_deg, 1e-9);
  }
}

TEST(Geodesy, ValidationRanges) {
  EXPECT_THROW(validate(GeodeticCoord{90.5, 0.0, 0.0}), ValidationError);
  EXPECT_THROW(validate(GeodeticCoord{0.0, -180.0, 0.0}), ValidationError);
  EXPECT_THROW(validate(GeodeticCoord{0.0, 180.5, 0.0}), ValidationError);
  EXPECT_THROW(validate(GeodeticCoord{NAN, 0.0, 0.0}), ValidationError);
  EXPECT_NO_THROW(validate(GeodeticCoord{-90.0, 180.0, -100.0}));
  EXPECT_THROW(ecef_to_geodetic({10.0, 20.0, 30.0}), ValidationError);
}

TEST(Enu, OriginIsZero) {
  const EnuFrame frame({60.19, 24.83, 20.0});
  EXPECT_LT(frame.project({60.19, 24.83, 20.0}).norm(), 1e-9);
}

TEST(Enu, HandEvaluatedAxes) {
  const EnuFrame frame({0.0, 0.0, 0.0});
  // 10 m above the origin is straight up.
  const Vec3 up = frame.project({0.0, 0.0, 10.0});
  EXPECT_NEAR(up.x(), 0.0, 1e-9);
  EXPECT_NEAR(up.y(), 0.0, 1e-9);
  EXPECT_NEAR(up.z(), 10.0, 1e-9);
  // Basis rows: east, north, up.
  const Mat3& b = frame.basis();
  EXPECT_NEAR(b(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(b(1, 2), 1.0, 1e-12);
  EXPECT_NEAR(b(2, 0), 1.0, 1e-12);
}

// North offset of a small meridian step equals the meridian arc length.
TEST(Enu, NorthMatchesMeridianArc) {
  const double a = wgs84::kSemiMajorAxis;
  const double e2 = wgs84::kFirstEccentricitySq;
  const double dlat = 0.01;
  double arc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double phi = (i + 0.5) * dlat / n * kPi / 180.0;
    const double s = std::sin(phi);
    arc += a * (1 - e2) / std::pow(1 - e2 * s * s, 1.5) * (dlat / n * kPi / 180.0);
  }
  const EnuFrame frame({0.0, 0.0, 0.0});
  const Vec3 p = frame.project({dlat, 0.0, 0.0});
  EXPECT_NEAR(arc, 1105.74, 0.01);
  EXPECT_NEAR(p.y(), arc, 1e-3);
  EXPECT_NEAR(p.x(), 0.0, 1e-9);
}

TEST(Enu, RoundTripAndHorizontal) {
  const EnuFrame frame({60.19, 24.83, 20.0});
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = random_vec(rng, -5000, 5000);
    EXPECT_LT((frame.project(frame.unproject(p)) - p).norm(), 1e-6);
  }
  const GeodeticCoord g = frame.unproject({120.0, -45.0, 0.0});
  const Eigen::Vector2d h = frame.horizontal(g.lat_deg, g.lon_deg);
  EXPECT_NEAR(h.x(), 120.0, 1e-6);
  EXPECT_NEAR(h.y(), -45.0, 1e-6);
}

TEST(Similarity, RecoversRandomTransforms) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    SimilarityTransform t{scale(rng), random_rotation(rng), random_vec(rng, -1000, 1000)};
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 10; ++i) {
      src.push_back(random_vec(rng, -50, 50));
      dst.push_back(t.apply(src.back()));
    }
    const SimilarityTransform est = estimate_similarity(src, dst);
    EXPECT_NEAR(est.scale, t.scale, 1e-9 * t.scale);
    EXPECT_LT((est.rotation - t.rotation).norm(), 1e-9);
    EXPECT_LT((est.translation - t.translation).norm(), 1e-9 * (1 + t.translation.norm()));
    EXPECT_LT(similarity_residual_rms(est, src, dst), 1e-8);
  }
}

TEST(Similarity, ThreeCoplanarPointsSuffice) {
  const std::vector<Vec3> src = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  SimilarityTransform t{2.0, Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix(),
                        {5, 6, 7}};
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(t.apply(p));
  const SimilarityTransform est = estimate_similarity(src, dst);
  EXPECT_NEAR(est.scale, 2.0, 1e-12);
  EXPECT_LT((est.rotation - t.rotation).norm(), 1e-12);
}

TEST(Similarity, DegenerateInputsRejected) {
  const std::vector<Vec3> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  EXPECT_THROW(estimate_similarity(line, line), ValidationError);
  const std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(estimate_similarity(two, two), ValidationError);
  const std::vector<Vec3> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(estimate_similarity(three, line), ValidationError);
}

TEST(Similarity, InverseComposesToIdentity) {
  std::mt19937_64 rng(5);
  const SimilarityTransform t{3.5, random_rotation(rng), random_vec(rng, -10, 10)};
  const SimilarityTransform inv = t.inverse();
  const Vec3 p(1.0, -2.0, 3.0);
  EXPECT_LT((inv.apply(t.apply(p)) - p).norm(), 1e-12);
  EXPECT_LT((apply_similarity(t, p) - t.apply(p)).norm(), 0.0 + 1e-15);
}

TEST(GeoRegistrationCsv, RoundTripAndErrors) {
  TempDir dir;
  const std::vector<GeoCorrespondence> rows = {{"a.jpg", {60.1, 24.9, 12.5}},
                                               {"b.jpg", {60.2, 24.8, -3.0}}};
  write_georegistration_csv(dir / "g.csv", rows);
  const auto back = read_georegistration_csv(dir / "g.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].image_name, "b.jpg");
  EXPECT_EQ(back[1].coord, rows[1].coord);

  write_text_file(dir / "bad.csv", "image_name,lat_deg,lon_deg,alt_m\na.jpg,1,2,3\nb.jpg,x,2,3\n");
  try {
    read_georegistration_csv(dir / "bad.csv");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  write_text_file(dir / "hdr.csv", "name,lat,lon,alt\n");
  EXPECT_THROW(read_georegistration_csv(dir / "hdr.csv"), ParseError);
  EXPECT_THROW(read_georegistration_csv(dir / "missing.csv"), IoError);
}

TEST(GeoRegistration, RecoversModelFrame) {
  std::mt19937_64 rng(9);
  const GeodeticCoord origin{60.16, 24.92, 10.0};
  const EnuFrame frame(origin);
  const SimilarityTransform model_from_enu{0.7, random_rotation(rng), random_vec(rng, -20, 20)};
  Reconstruction model;
  model.cameras[1] = {1, CameraModel::kPinhole, 640, 480, 500, 500, 320, 240};
  std::vector<GeoCorrespondence> refs;
  for (int i = 0; i < 6; ++i) {
    const Vec3 enu = i == 0 ? Vec3::Zero() : random_vec(rng, -100, 100);
    ImageRecord image;
    image.image_id = i + 1;
    image.name = "im" + std::to_string(i);
    image.camera_id = 1;
    image.pose = CameraPose::from_center(random_rotation(rng), model_from_enu.apply(enu));
    model.images[image.image_id] = image;
    refs.push_back({image.name, i == 0 ? origin : frame.unproject(enu)});
  }
  const GeoRegistrationResult res = georegister(model, refs);
  ASSERT_TRUE(res.model.geo_registered());
  EXPECT_LT(res.residual_rms_m, 1e-6);
  for (int i = 0; i < 6; ++i) {
    const Vec3 c = camera_center(res.model.images.at(i + 1).pose);
    EXPECT_LT((c - frame.project(refs[i].coord)).norm(), 1e-6);
  }
  refs[2].image_name = "nope";
  EXPECT_THROW(georegister(model, refs), ValidationError);
}

}  // namespace
}  // namespace signmap
