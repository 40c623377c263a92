#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "signmap/csv.h"
#include "signmap/pose.h"
#include "test_support.h"

namespace signmap {
namespace {

using testing::random_rotation;
using testing::random_vec;
using testing::TempDir;

constexpr double kDeg = std::numbers::pi / 180.0;

double angle_between(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

Mat3 yaw(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix(); }

TEST(Gps, InterpolatesAndClamps) {
  const std::vector<GpsSample> trace = {{0.0, {60.0, 24.0, 0.0}}, {2.0, {60.2, 24.4, 10.0}}};
  const GpsSample mid = gps_at(trace, 0.5);
  EXPECT_NEAR(mid.coord.lat_deg, 60.05, 1e-12);
  EXPECT_NEAR(mid.coord.lon_deg, 24.1, 1e-12);
  EXPECT_NEAR(mid.coord.alt_m, 2.5, 1e-12);
  EXPECT_EQ(gps_at(trace, -1.0).coord, trace[0].coord);
  EXPECT_EQ(gps_at(trace, 9.0).coord, trace[1].coord);
  EXPECT_THROW(gps_at(std::vector<GpsSample>{}, 0.0), ValidationError);
}

TEST(Gps, FilesRoundTripAndOrder) {
  TempDir dir;
  const std::vector<GpsSample> trace = {{0.0, {60.1, 24.9, 1.0}}, {0.1, {60.1000001, 24.9, 1.5}}};
  write_gps_trace(dir / "gps.csv", trace);
  EXPECT_EQ(read_gps_trace(dir / "gps.csv"), trace);
  write_text_file(dir / "bad.csv", "t_s,lat_deg,lon_deg,alt_m\n1,60,24,0\n0.5,60,24,0\n");
  try {
    read_gps_trace(dir / "bad.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  const std::vector<FrameTime> frames = {{"a.jpg", 0.0}, {"b.jpg", 0.25}};
  write_frame_times(dir / "frames.csv", frames);
  const auto back = read_frame_times(dir / "frames.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].image_name, "b.jpg");
  EXPECT_EQ(back[1].t, 0.25);
}

TEST(RegisteredPoses, RoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(2);
  std::map<std::string, CameraPose> poses;
  for (int i = 0; i < 5; ++i) {
    poses["f" + std::to_string(i)] =
        CameraPose::from_center(random_rotation(rng), random_vec(rng, -10, 10));
  }
  write_registered_poses(dir / "r.csv", poses);
  EXPECT_EQ(read_registered_poses(dir / "r.csv"), poses);
}

// Fixed-mount chain: vehicle yaw changes each step; reference images come
// from a different camera rigidly mounted on a different vehicle.
struct Chain {
  std::vector<Mat3> vehicle;  // vehicle -> world
  Mat3 mount_cur;             // camera -> vehicle, current drive
  Mat3 mount_ref;             // camera -> vehicle, mapping drive

  Mat3 current_wc(size_t k) const { return (vehicle[k] * mount_cur).transpose(); }
  Mat3 reference_wc(size_t k) const { return (vehicle[k] * mount_ref).transpose(); }
};

Chain make_chain(std::mt19937_64& rng, int steps) {
  Chain c;
  c.mount_cur = random_rotation(rng);
  c.mount_ref = random_rotation(rng);
  std::normal_distribution<double> turn(0.0, 3.0 * kDeg);
  std::normal_distribution<double> tilt(0.0, 0.5 * kDeg);
  Mat3 v = random_rotation(rng);
  for (int k = 0; k <= steps; ++k) {
    c.vehicle.push_back(v);
    v = v * yaw(turn(rng)) * Eigen::AngleAxisd(tilt(rng), Vec3::UnitY()).toRotationMatrix();
  }
  return c;
}

TEST(Propagation, ExactOnFixedMountChains) {
  std::mt19937_64 rng(17);
  for (int chain = 0; chain < 20; ++chain) {
    const Chain c = make_chain(rng, 100);
    Mat3 r = c.current_wc(0);
    for (size_t k = 1; k <= 100; ++k) {
      r = propagate_orientation(r, c.reference_wc(k - 1), c.reference_wc(k));
      ASSERT_LT(angle_between(r, c.current_wc(k)), 1e-9) << "step " << k;
    }
  }
}

TEST(Propagation, JitterErrorGrowsAtMostLinearly) {
  std::mt19937_64 rng(23);
  const Chain c = make_chain(rng, 100);
  auto jittered = [&](size_t k) -> Mat3 {
    const Vec3 axis = random_vec(rng, -1, 1).normalized();
    return Eigen::AngleAxisd(0.1 * kDeg, axis).toRotationMatrix() * c.reference_wc(k);
  };
  Mat3 r = c.current_wc(0);
  Mat3 prev_ref = jittered(0);
  for (size_t k = 1; k <= 100; ++k) {
    const Mat3 cur_ref = jittered(k);
    r = propagate_orientation(r, prev_ref, cur_ref);
    prev_ref = cur_ref;
    EXPECT_LE(angle_between(r, c.current_wc(k)), 0.2 * kDeg * k + 1e-12);
  }
}

TEST(Propagation, RejectsNonRotations) {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = -1.0;
  EXPECT_THROW(propagate_orientation(bad, Mat3::Identity(), Mat3::Identity()), ValidationError);
  Mat3 near = Mat3::Identity();
  near(0, 1) = 1e-3;
  const Mat3 fixed = nearest_rotation(near);
  EXPECT_LT((fixed * fixed.transpose() - Mat3::Identity()).norm(), 1e-12);
}

Reconstruction line_of_references(int n) {
  Reconstruction r;
  r.cameras[1] = {1, CameraModel::kPinhole, 640, 480, 500, 500, 320, 240};
  r.enu_origin = GeodeticCoord{60.16, 24.92, 10.0};
  for (int i = 0; i < n; ++i) {
    ImageRecord image;
    image.image_id = 10 + i;
    image.name = "ref" + std::to_string(i);
    image.camera_id = 1;
    image.pose = CameraPose::from_center(yaw(i * 2.0 * kDeg), {i * 2.0, 0.0, 0.0});
    r.images[image.image_id] = image;
  }
  return r;
}

TEST(References, NearestMatchesBruteForce) {
  std::mt19937_64 rng(4);
  Reconstruction r = testing::random_reconstruction(rng, 10, 200);
  const ReferenceIndex index(r);
  for (int q = 0; q < 200; ++q) {
    const Vec3 p = random_vec(rng, -60, 60);
    ImageId best = -1;
    double best_d = 1e300;
    for (const auto& [id, image] : r.images) {
      const double d = (camera_center(image.pose) - p).norm();
      if (d < best_d) {
        best_d = d;
        best = id;
      }
    }
    EXPECT_EQ(index.nearest(p).image_id, best);
    EXPECT_EQ(nearest_reference(index, r, p).image_id, best);
  }
}

TEST(References, TieGoesToLowestId) {
  const Reconstruction r = line_of_references(3);
  const ReferenceIndex index(r);
  EXPECT_EQ(index.nearest({1.0, 0.0, 0.0}).image_id, 10);
  EXPECT_EQ(index.nearest({3.0, 5.0, 0.0}).image_id, 11);
}

TEST(Tracker, RegisteredAnchorsAndCadence) {
  const Reconstruction r = line_of_references(20);
  const ReferenceIndex index(r);
  const EnuFrame frame = r.enu_frame();
  PoseConfig cfg;
  cfg.reanchor_every = 3;
  PoseTracker tracker(index, frame, cfg);
  EXPECT_TRUE(tracker.needs_anchor());
  const CameraPose anchor = r.images.at(10).pose;
  const GpsSample gps0{0.0, frame.unproject({0.0, 0.0, 0.0})};
  EXPECT_THROW(PoseTracker(index, frame, cfg).next("x", gps0, std::nullopt), ValidationError);

  const PoseEstimate first = tracker.next("f0", gps0, anchor);
  EXPECT_EQ(first.source, PoseSource::kRegistered);
  EXPECT_FALSE(tracker.needs_anchor());
  for (int k = 1; k <= 3; ++k) {
    const PoseEstimate p =
        tracker.next("f" + std::to_string(k), {0.1 * k, frame.unproject({2.0 * k, 0, 0})},
                     std::nullopt);
    EXPECT_EQ(p.source, PoseSource::kPropagated);
    EXPECT_NEAR(p.center.x(), 2.0 * k, 1e-6);
    // Same camera as the references, so orientation follows them exactly.
    EXPECT_LT(angle_between(p.rotation_wc(), r.images.at(10 + k).pose.rotation_matrix()), 1e-9);
  }
  EXPECT_TRUE(tracker.needs_anchor());
  tracker.next("f4", {0.4, frame.unproject({8.0, 0, 0})}, r.images.at(14).pose);
  EXPECT_FALSE(tracker.needs_anchor());
}

TEST(Tracker, OffMapRejected) {
  const Reconstruction r = line_of_references(3);
  const ReferenceIndex index(r);
  const EnuFrame frame = r.enu_frame();
  PoseTracker tracker(index, frame);
  tracker.next("a", {0.0, frame.unproject({0, 0, 0})}, r.images.at(10).pose);
  EXPECT_THROW(tracker.next("b", {0.1, frame.unproject({500, 0, 0})}, std::nullopt),
               ValidationError);
}

}  // namespace
}  // namespace signmap
