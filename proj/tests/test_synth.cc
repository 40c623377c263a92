#include <gtest/gtest.h>

#include "signmap/csv.h"
#include "signmap/georegistration.h"
#include "signmap/synth.h"
#include "test_support.h"

namespace signmap {
namespace {

using testing::TempDir;

SyntheticScene small_scene(int signs = 3, std::uint64_t seed = 1) {
  RoadSceneOptions opts;
  opts.seed = seed;
  opts.num_signs = signs;
  SyntheticScene scene = make_road_scene(opts);
  scene.intrinsics = {1, CameraModel::kPinhole, 320, 240, 250, 250, 160, 120};
  return scene;
}

TEST(Synth, FacePointsCenteredOnSign) {
  SyntheticSign s;
  s.position = {5, 6, 7};
  s.facing = {0, 1};
  const auto pts = sign_face_points(s, 0.6);
  ASSERT_EQ(pts.size(), 9u);
  EXPECT_EQ(pts[4], s.position);
  EXPECT_NEAR((pts[0] - pts[8]).norm(), 0.6 * std::sqrt(2.0), 1e-12);
  for (const auto& p : pts) EXPECT_NEAR(p.y(), 6.0, 1e-12);  // planar, facing north
  s.face_points = 16;
  EXPECT_THROW(sign_face_points(s, 0.6), ValidationError);
}

TEST(Synth, ModelIsValidAndAligned) {
  const SceneRenderer r(small_scene());
  EXPECT_NO_THROW(validate(r.model()));
  EXPECT_FALSE(r.model().geo_registered());
  EXPECT_EQ(r.model().images.size(), r.map_frame_count());
  const GeoRegistrationResult reg = georegister(r.model(), r.georegistration());
  EXPECT_LT(reg.residual_rms_m, 1e-6);
  EXPECT_NEAR(reg.transform.scale * r.model_from_enu().scale, 1.0, 1e-9);
  for (const auto& [id, p] : r.model().points) EXPECT_LT(p.reproj_error, 1e-6);
  EXPECT_TRUE(r.warnings().empty());
}

TEST(Synth, DeterministicForSeed) {
  const SceneRenderer a(small_scene(3, 42));
  const SceneRenderer b(small_scene(3, 42));
  EXPECT_EQ(a.model(), b.model());
  EXPECT_EQ(a.map_detections(), b.map_detections());
  EXPECT_EQ(a.map_mask(5).class_ids, b.map_mask(5).class_ids);
  const SceneRenderer c(small_scene(3, 43));
  EXPECT_NE(a.model_from_enu().scale, c.model_from_enu().scale);
}

TEST(Synth, BundleBytesIdentical) {
  TempDir dir;
  SyntheticScene scene = small_scene(2, 9);
  scene.noise.gps_sigma = 1.0;
  scene.noise.keypoint_sigma = 0.3;
  scene.noise.distance_map_rel_sigma = 0.01;
  SceneRenderer(scene).write_bundle(dir / "a");
  SceneRenderer(scene).write_bundle(dir / "b");
  size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "a");
    ASSERT_EQ(read_text_file(e.path()), read_text_file(dir.path() / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);
}

TEST(Synth, MutateScene) {
  const SyntheticScene scene = residential_scenario(1);
  EXPECT_EQ(mutate_scene(scene, {}).signs.size(), scene.signs.size());
  const SyntheticScene after = mutate_scene(scene, scene.drive_changes);
  EXPECT_EQ(after.signs.size(), scene.signs.size() - 4);
  EXPECT_THROW(mutate_scene(scene, {{SceneEdit::Op::kRemove, "no-such-class", {0, 0, 0}}}),
               ValidationError);
  const SyntheticScene added =
      mutate_scene(scene, {{SceneEdit::Op::kAdd, "regulatory--stop--g1", {50, -4, 0.7}}});
  EXPECT_EQ(added.signs.size(), scene.signs.size() + 1);
  EXPECT_LT(added.signs.back().facing.x(), 0.0);  // faces oncoming traffic
}

TEST(Synth, SceneJsonRoundTrip) {
  TempDir dir;
  SyntheticScene scene = residential_scenario(4);
  scene.noise.gps_sigma = 2.5;
  scene.signs[0].triangulated = false;
  write_scene_json(scene, dir / "scene.json");
  const SyntheticScene back = read_scene_json(dir / "scene.json");
  EXPECT_EQ(back.seed, scene.seed);
  EXPECT_EQ(back.noise.gps_sigma, 2.5);
  ASSERT_EQ(back.signs.size(), scene.signs.size());
  EXPECT_EQ(back.signs[3].position, scene.signs[3].position);
  EXPECT_FALSE(back.signs[0].triangulated);
  ASSERT_EQ(back.trajectory.size(), scene.trajectory.size());
  EXPECT_EQ(back.trajectory[10].heading, scene.trajectory[10].heading);
  EXPECT_EQ(back.drive_changes.size(), 4u);
  EXPECT_EQ(back.mount, scene.mount);

  write_text_file(dir / "bad.json", "{\"signs\": [], \"trajectory\": []}");
  EXPECT_THROW(read_scene_json(dir / "bad.json"), ValidationError);
}

TEST(Synth, InvisibleSignWarnsButStaysInTruth) {
  SyntheticScene scene = small_scene(2);
  SyntheticSign hidden;
  hidden.class_name = "regulatory--stop--g1";
  hidden.position = {0, 5000, 0};
  scene.signs.push_back(hidden);
  const SceneRenderer r(scene);
  EXPECT_EQ(r.warnings().size(), 1u);
  EXPECT_EQ(r.map_truth().size(), 3u);
  EXPECT_EQ(r.signs_seen_in_map(), (std::vector<size_t>{0, 1}));
}

TEST(Synth, NoiseShowsUpWhereConfigured) {
  SyntheticScene scene = small_scene(2);
  scene.noise.gps_sigma = 3.0;
  scene.noise.keypoint_sigma = 0.5;
  const SceneRenderer noisy(scene);
  const SceneRenderer clean(small_scene(2));
  EXPECT_NE(noisy.drive_gps()[3].coord, clean.drive_gps()[3].coord);
  double err = 0.0;
  for (const auto& [id, p] : noisy.model().points) err += p.reproj_error;
  EXPECT_GT(err, 0.0);
  // Truth and registered poses are unaffected by GPS noise.
  EXPECT_EQ(noisy.drive_registered_poses(), clean.drive_registered_poses());
}

TEST(Synth, RegisteredPoseCadence) {
  SyntheticScene scene = small_scene(2);
  scene.reanchor_every = 7;
  const SceneRenderer r(scene);
  const size_t expected = (r.drive_frame_count() + 6) / 7;
  EXPECT_EQ(r.drive_registered_poses().size(), expected);
  EXPECT_TRUE(r.drive_registered_poses().contains(r.drive_image_name(7)));
}

TEST(Synth, ScenarioShapes) {
  const SyntheticScene res = residential_scenario(3);
  EXPECT_EQ(res.signs.size(), 10u);
  EXPECT_EQ(res.drive_changes.size(), 4u);
  const SyntheticScene campus = campus_scenario(3);
  EXPECT_EQ(campus.signs.size(), 20u);
  int faults = 0;
  for (const auto& s : campus.signs) faults += !s.map_detectable + !s.drive_detectable;
  EXPECT_EQ(faults, 3);
  EXPECT_TRUE(campus.drive_changes.empty());
}

}  // namespace
}  // namespace signmap
