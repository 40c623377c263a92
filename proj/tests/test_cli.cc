#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "cli.h"
#include "signmap/csv.h"
#include "signmap/metadata.h"
#include "signmap/synth.h"
#include "test_support.h"

namespace signmap {
namespace {

using testing::TempDir;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "signmap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string s(const std::filesystem::path& p) { return p.string(); }

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"simulate", "--help"}).code, 0);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  const CliResult missing = run({"georegister", "model-only", "--out", "x"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("references"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--scenario", "road"}).code, 1);  // --out is required
}

TEST(Cli, ValidationAndIoErrors) {
  TempDir dir;
  EXPECT_EQ(run({"georegister", s(dir / "nope"), s(dir / "refs.csv"), "--out", s(dir / "o")}).code,
            2);
  write_text_file(dir / "cfg.json", "{\"t_d\": 5, \"colour\": 1}");
  const CliResult unknown = run({"simulate", "--scenario", "road", "--config", s(dir / "cfg.json"),
                           "--out", s(dir / "o")});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("colour"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--scenario", "mars", "--out", s(dir / "o")}).code, 1);
  write_text_file(dir / "m.csv", "");
  write_text_file(dir / "p.jsonl", "");
  EXPECT_EQ(run({"promote", s(dir / "m.csv"), s(dir / "p.jsonl"), "--out", s(dir / "o")}).code, 1);
  EXPECT_EQ(run({"eval", "--kind", "pose", s(dir / "m.csv"), "--out", s(dir / "o")}).code, 1);
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    RoadSceneOptions opts;
    opts.num_signs = 6;
    opts.seed = 5;
    SyntheticScene scene = make_road_scene(opts);
    scene.noise.gps_sigma = 1.0;
    write_scene_json(scene, *dir_ / "scene.json");
    ASSERT_EQ(run({"simulate", s(*dir_ / "scene.json"), "--out", s(*dir_ / "b")}).code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path b() { return dir_->path() / "b"; }
  static std::filesystem::path path(const std::string& name) { return dir_->path() / name; }

  static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, EndToEnd) {
  ASSERT_EQ(run({"georegister", s(b() / "model"), s(b() / "georegistration.csv"), "--out",
                 s(path("geo"))})
                .code,
            0);
  const auto reg = nlohmann::json::parse(read_text_file(path("geo") / "georegistration.json"));
  EXPECT_LT(reg["residual_rms_m"].get<double>(), 1e-6);

  const CliResult seg = run({"segment", s(path("geo") / "model"), s(b() / "masks"), "--palette",
                       s(b() / "palette.txt"), "--out", s(path("seg"))});
  ASSERT_EQ(seg.code, 0) << seg.err;
  EXPECT_EQ(split(read_text_file(path("seg") / "point_labels.csv"), '\n')[0],
            "point3d_id,class_id,class_name");

  const CliResult meta = run({"metadata-gen", s(path("geo") / "model"), s(b() / "detections.jsonl"),
                        s(b() / "masks"), "--palette", s(b() / "palette.txt"), "--sign-family",
                        "2", "--date", "2021-05-03", "--out", s(path("meta"))});
  ASSERT_EQ(meta.code, 0) << meta.err;
  EXPECT_EQ(read_metadata(path("meta") / "metadata.csv").size(), 6u);

  ASSERT_EQ(run({"eval", "--kind", "localization", s(path("meta") / "metadata.csv"),
                 s(b() / "truth_metadata.csv"), "--out", s(path("loc"))})
                .code,
            0);
  const auto loc = nlohmann::json::parse(read_text_file(path("loc") / "eval.json"));
  EXPECT_EQ(loc["matched"].get<int>(), 6);
  EXPECT_LT(loc["stats"]["median"].get<double>(), 1e-3);

  const CliResult det =
      run({"detect-changes", s(path("geo") / "model"), s(path("meta") / "metadata.csv"),
           s(b() / "drive"), "--vehicle-id", "v1", "--date", "2021-06-14", "--out",
           s(path("det"))});
  ASSERT_EQ(det.code, 0) << det.err;
  EXPECT_EQ(read_text_file(path("det") / "changes.jsonl"), "");
  EXPECT_EQ(split(read_text_file(path("det") / "poses.csv"), '\n')[0],
            "image_name,lat_deg,lon_deg,alt_m,qw,qx,qy,qz,source");

  ASSERT_EQ(run({"eval", "--kind", "pose", s(path("det") / "poses.csv"),
                 s(b() / "drive" / "gps_truth.csv"), "--out", s(path("pose"))})
                .code,
            0);
  const auto pose = nlohmann::json::parse(read_text_file(path("pose") / "eval.json"));
  // Positions follow the 1 m GPS noise.
  EXPECT_GT(pose["stats"]["median"].get<double>(), 0.3);
  EXPECT_LT(pose["stats"]["median"].get<double>(), 3.0);

  const CliResult labels = run({"labels-gen", s(path("geo") / "model"), "--image", "map_000010.jpg",
                          "--out", s(path("labels"))});
  ASSERT_EQ(labels.code, 0) << labels.err;
  EXPECT_TRUE(std::filesystem::exists(path("labels") / "map_000010.jpg.b3dm"));
  EXPECT_EQ(run({"labels-gen", s(path("geo") / "model"), "--image", "nope.jpg", "--out",
                 s(path("labels"))})
                .code,
            1);
}

TEST_F(CliPipeline, ReRunIsByteIdentical) {
  ASSERT_EQ(run({"simulate", s(path("scene.json")), "--out", s(path("b2"))}).code, 0);
  for (const char* f : {"model/points3D.txt", "model/images.txt", "detections.jsonl",
                        "drive/gps.csv", "truth_metadata.csv"}) {
    EXPECT_EQ(read_text_file(b() / f), read_text_file(path("b2") / f)) << f;
  }
}

TEST_F(CliPipeline, PromoteNeedsBothThresholds) {
  TempDir dir;
  write_text_file(dir / "p.jsonl", "");
  const std::string meta = s(b() / "truth_metadata.csv");
  EXPECT_EQ(run({"promote", meta, s(dir / "p.jsonl"), "--min-vehicles", "2", "--out",
                 s(dir / "o")})
                .code,
            1);
  const CliResult ok = run({"promote", meta, s(dir / "p.jsonl"), "--min-vehicles", "2", "--min-days",
                      "2", "--out", s(dir / "o")});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(read_metadata(dir / "o" / "metadata.csv").size(), 6u);
}

}  // namespace
}  // namespace signmap
