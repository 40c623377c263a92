#include <gtest/gtest.h>

#include "signmap/csv.h"
#include "signmap/semantics.h"
#include "test_support.h"

namespace signmap {
namespace {

using testing::TempDir;

SegmentationMask filled(const std::string& name, int w, int h, ClassId value) {
  return {name, w, h, std::vector<ClassId>(static_cast<size_t>(w) * h, value)};
}

TEST(Pixel, RoundsAndRejectsOutside) {
  EXPECT_EQ(pixel_of(10.4, 20.6, 640, 480), std::make_pair(10, 21));
  EXPECT_EQ(pixel_of(639.7, 479.9, 640, 480), std::make_pair(639, 479));
  EXPECT_EQ(pixel_of(0.0, 0.0, 640, 480), std::make_pair(0, 0));
  EXPECT_FALSE(pixel_of(-0.4, 10, 640, 480));
  EXPECT_FALSE(pixel_of(640.0, 10, 640, 480));
  EXPECT_FALSE(pixel_of(NAN, 10, 640, 480));
}

TEST(Palette, ReadWrite) {
  TempDir dir;
  ClassPalette p;
  p.add(1, "building");
  p.add(7, "traffic-sign");
  p.write(dir / "palette.txt");
  EXPECT_EQ(read_text_file(dir / "palette.txt"), "0\tunlabeled\n1\tbuilding\n7\ttraffic-sign\n");
  const ClassPalette back = ClassPalette::read(dir / "palette.txt");
  EXPECT_EQ(back.id_of("traffic-sign"), std::optional<ClassId>(7));
  EXPECT_EQ(back.name_of(1), "building");
  write_text_file(dir / "bad.txt", "1 building\n");
  EXPECT_THROW(ClassPalette::read(dir / "bad.txt"), ParseError);
}

TEST(Matcher, FamilyAndOwnClass) {
  ClassPalette p;
  p.add(1, "building");
  p.add(2, "traffic-sign");
  p.add(3, "regulatory--stop--g1");
  const ClassMatcher m(p, {2});
  EXPECT_TRUE(m.matches("regulatory--stop--g1", 2));
  EXPECT_TRUE(m.matches("regulatory--stop--g1", 3));
  EXPECT_TRUE(m.matches("warning--roadworks--g1", 2));
  EXPECT_FALSE(m.matches("warning--roadworks--g1", 3));
  EXPECT_FALSE(m.matches("regulatory--stop--g1", 1));
  EXPECT_FALSE(m.matches("regulatory--stop--g1", kUnlabeled));
}

TEST(Pgm, RoundTrip8And16Bit) {
  TempDir dir;
  SegmentationMask m = filled("a.jpg", 5, 3, 1);
  m.at(4, 2) = 200;
  write_mask_pgm(m, dir / "a.pgm");
  const SegmentationMask back = read_mask_pgm(dir / "a.pgm", "a.jpg");
  EXPECT_EQ(back.class_ids, m.class_ids);
  EXPECT_EQ(read_text_file(dir / "a.pgm").substr(0, 2), "P5");

  m.at(0, 0) = 40000;
  write_mask_pgm(m, dir / "b.pgm");
  EXPECT_EQ(read_mask_pgm(dir / "b.pgm", "a.jpg").class_ids, m.class_ids);

  write_text_file(dir / "c.pgm", "P2\n1 1\n255\n0\n");
  EXPECT_THROW(read_mask_pgm(dir / "c.pgm", "c"), ValidationError);
  write_text_file(dir / "d.pgm", std::string("P5\n4 4\n255\n") + "ab");
  EXPECT_THROW(read_mask_pgm(dir / "d.pgm", "d"), ValidationError);
}

TEST(Detections, JsonlRoundTripAndScoreFilter) {
  TempDir dir;
  const std::vector<DetectionSet> sets = {
      {"a.jpg", {{"regulatory--stop--g1", 0.4, {1, 2, 30.5, 40}},
                 {"warning--roadworks--g1", 0.39, {0, 0, 5, 5}}}},
      {"b.jpg", {}}};
  write_detections_jsonl(dir / "d.jsonl", sets);
  const auto back = read_detections_jsonl(dir / "d.jsonl");
  EXPECT_EQ(back, sets);
  const DetectionSet kept = filter_by_score(back[0]);
  ASSERT_EQ(kept.detections.size(), 1u);
  EXPECT_EQ(kept.detections[0].class_name, "regulatory--stop--g1");

  write_text_file(dir / "bad.jsonl",
                  "{\"image_name\":\"a\",\"detections\":[]}\n"
                  "{\"image_name\":\"b\",\"detections\":[{\"class\":\"x\",\"score\":0.5,"
                  "\"bbox\":[5,0,1,1]}]}\n");
  try {
    read_detections_jsonl(dir / "bad.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Detections, Validation) {
  EXPECT_THROW(validate(Detection{"x", 1.5, {0, 0, 1, 1}}), ValidationError);
  EXPECT_THROW(validate(Detection{"x", 0.5, {2, 0, 1, 1}}), ValidationError);
  EXPECT_NO_THROW(validate(Detection{"x", 0.5, {1, 1, 2, 2}}));
  EXPECT_THROW(validate(Detection{"x", 0.5, {1, 1, 1, 1}}), ValidationError);
  const BoundingBox clamped = clamp_to_image({-5, -5, 700, 100}, 640, 480);
  EXPECT_EQ(clamped.xmin, 0.0);
  EXPECT_EQ(clamped.xmax, 639.0);
  EXPECT_TRUE(BoundingBox({0, 0, 10, 10}).contains(10, 10));
}

// Three images observe one point; masks vote 2, 2, 1.
Reconstruction voting_model() {
  Reconstruction r;
  r.cameras[1] = {1, CameraModel::kPinhole, 4, 4, 1, 1, 2, 2};
  for (int i = 1; i <= 3; ++i) {
    r.images[i] = {i, "i" + std::to_string(i), {}, 1, {{1, 1, 5}, {3, 3, 6}}};
  }
  r.points[5] = {5, {0, 0, 1}, {}, 0, {{1, 0}, {2, 0}, {3, 0}}};
  r.points[6] = {6, {0, 0, 1}, {}, 0, {{1, 1}, {2, 1}}};
  return r;
}

TEST(Segment, MajorityVote) {
  const Reconstruction r = voting_model();
  MaskSet masks;
  for (int i = 1; i <= 3; ++i) masks["i" + std::to_string(i)] = filled("i", 4, 4, 2);
  masks["i3"].at(1, 1) = 1;
  const PointLabeling l = segment_point_cloud(r, masks);
  EXPECT_EQ(l.labels.at(5), 2);
  EXPECT_EQ(l.observations_used, 5u);
}

TEST(Segment, TieGoesToModelWideMajorityThenLowerId) {
  const Reconstruction r = voting_model();
  MaskSet masks;
  masks["i1"] = filled("i1", 4, 4, 3);
  masks["i2"] = filled("i2", 4, 4, 7);
  masks["i3"] = filled("i3", 4, 4, 7);
  // Point 6 sees 3 once and 7 once; 7 wins on model-wide totals.
  EXPECT_EQ(segment_point_cloud(r, masks).labels.at(6), 7);
  masks["i2"] = filled("i2", 4, 4, 9);
  masks["i3"] = filled("i3", 4, 4, 0);
  // Point 6: 3 once, 9 once, totals equal -> lower id.
  EXPECT_EQ(segment_point_cloud(r, masks).labels.at(6), 3);
}

TEST(Segment, MissingMasksAndUnlabeled) {
  const Reconstruction r = voting_model();
  MaskSet masks;
  masks["i1"] = filled("i1", 4, 4, kUnlabeled);
  const PointLabeling l = segment_point_cloud(r, masks);
  EXPECT_EQ(l.labels.at(5), kUnlabeled);
  EXPECT_EQ(l.missing_mask_observations, 3u);
}

TEST(Segment, SupportingKeypoints) {
  const Reconstruction r = voting_model();
  ClassPalette p;
  p.add(2, "traffic-sign");
  const ClassMatcher m(p, {2});
  SegmentationMask mask = filled("i1", 4, 4, 1);
  mask.at(1, 1) = 2;
  const Detection det{"regulatory--stop--g1", 0.9, {0, 0, 3, 3}};
  EXPECT_EQ(keypoints_supporting(r.images.at(1), det, mask, m), std::vector<size_t>{0});
  const Detection small{"regulatory--stop--g1", 0.9, {2, 2, 3, 3}};
  EXPECT_TRUE(keypoints_supporting(r.images.at(1), small, mask, m).empty());
}

}  // namespace
}  // namespace signmap
