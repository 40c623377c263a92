#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "signmap/change.h"
#include "signmap/geodesy.h"
#include "signmap/metadata.h"
#include "signmap/metrics.h"
#include "signmap/pose.h"
#include "signmap/realtime.h"
#include "signmap/reconstruction.h"
#include "signmap/semantics.h"

namespace signmap {

// Synthetic ground truth for end-to-end checks of every pipeline stage.
//
// Coordinates are ENU meters around `origin`. The vehicle drives along
// `trajectory`; the same path is used for the mapping drive (which produces
// the sparse model) and the later drive (which produces the online inputs).
// Signs are planar grids of `face_points` points (odd square count, so the
// grid center is a point), facing `facing`.

struct SyntheticSign {
  std::string class_name;
  Vec3 position = Vec3::Zero();
  Eigen::Vector2d facing{1.0, 0.0};  // unit horizontal normal
  int face_points = 9;
  bool map_detectable = true;    // detector fires during the mapping drive
  bool drive_detectable = true;  // detector fires during the later drive
  bool triangulated = true;      // features matched during reconstruction
};

struct TrajectoryPose {
  Vec3 position = Vec3::Zero();              // camera center
  Eigen::Vector2d heading{1.0, 0.0};         // unit, direction of travel
};

struct NoiseConfig {
  double gps_sigma = 0.0;               // m, per axis, drive GPS trace
  double distance_map_rel_sigma = 0.0;  // multiplicative, per pixel
  double keypoint_sigma = 0.0;          // px, mapping keypoints
  double detection_dropout = 0.0;       // probability per (frame, sign)
  double pose_jitter_deg = 0.0;         // mapping model rotations
};

void validate(const NoiseConfig& noise);

struct SceneEdit {
  enum class Op { kAdd, kRemove };
  Op op = Op::kAdd;
  std::string class_name;
  Vec3 position = Vec3::Zero();
};

struct SyntheticScene {
  std::uint64_t seed = 1;
  GeodeticCoord origin{60.1600, 24.9200, 10.0};
  CameraIntrinsics intrinsics{1, CameraModel::kPinhole, 640, 480,
                              500.0, 500.0, 320.0, 240.0};
  // Camera -> vehicle rotation (vehicle: x forward, y left, z up).
  Mat3 mount = default_mount();
  // Mount of the camera used for the later drive.
  Mat3 drive_mount = default_mount();
  NoiseConfig noise;
  std::vector<SyntheticSign> signs;
  std::vector<TrajectoryPose> trajectory;
  std::vector<Vec3> background;  // building facade points
  std::vector<SceneEdit> drive_changes;
  double sign_size = 0.6;     // m, square face
  double max_range = 60.0;    // m, farthest rendered sign
  double frame_dt = 0.1;      // s
  int reanchor_every = 30;    // registered pose cadence on the drive
  std::string map_date = "2021-05-03";
  std::string drive_date = "2021-06-14";
  std::string vehicle_id = "vehicle-1";

  static Mat3 default_mount();
};

void validate(const SyntheticScene& scene);

// Applies add/remove edits. Removal takes the nearest sign of the class and
// fails when none lies within 1 m. Added signs face the nearest trajectory
// pose.
SyntheticScene mutate_scene(const SyntheticScene& scene,
                            const std::vector<SceneEdit>& script);

struct RoadSceneOptions {
  std::uint64_t seed = 1;
  int num_signs = 20;
  double sign_spacing = 25.0;     // m along the road
  double lateral_offset = 4.0;    // m, alternating sides
  double frame_spacing = 2.0;     // m between frames
  double curvature = 0.0015;      // 1/m amplitude of the gentle bends
  std::vector<std::string> classes;  // cycled; default: a set of sign types
};

// A gently curving road starting at the ENU origin with signs alternating
// on both sides and building facades behind them.
SyntheticScene make_road_scene(const RoadSceneOptions& opts);

// Ground-truth pose of the camera at a trajectory index.
CameraPose truth_pose(const SyntheticScene& scene, size_t frame,
                      const Mat3& mount);

// Deterministic generator keyed by (seed, stream, entity ids).
std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

struct TruthEntry {
  std::string class_name;
  Vec3 enu = Vec3::Zero();
};

// Renders every file-level input of the pipeline from a scene. Geometry is
// precomputed on construction; rasters are produced on demand.
class SceneRenderer {
 public:
  explicit SceneRenderer(SyntheticScene scene);

  const SyntheticScene& scene() const { return scene_; }
  const SyntheticScene& drive_scene() const { return drive_scene_; }
  EnuFrame scene_frame() const { return EnuFrame(scene_.origin); }

  // Sparse model in an arbitrary (unregistered) frame.
  const Reconstruction& model() const { return model_; }
  const SimilarityTransform& model_from_enu() const { return model_from_enu_; }
  const std::vector<GeoCorrespondence>& georegistration() const {
    return georegistration_;
  }

  const ClassPalette& palette() const { return palette_; }
  std::set<ClassId> sign_family() const { return {kSignClass}; }
  ClassMatcher matcher() const { return ClassMatcher(palette_, sign_family()); }

  size_t map_frame_count() const { return map_frames_.size(); }
  std::string map_image_name(size_t frame) const;
  const std::vector<DetectionSet>& map_detections() const { return map_detections_; }
  SegmentationMask map_mask(size_t frame) const;
  MaskSet map_masks() const;
  // Exact B at keypoint pixels and over sign faces, for a mapping frame.
  DistanceMap map_distance_map(size_t frame) const;

  size_t drive_frame_count() const { return drive_frames_.size(); }
  std::string drive_image_name(size_t frame) const;
  std::vector<FrameTime> drive_frame_times() const;
  const std::vector<GpsSample>& drive_gps() const { return drive_gps_; }
  // Truth camera centers of the drive as a noise-free trace.
  std::vector<GpsSample> drive_truth_trace() const;
  // Registered poses every `reanchor_every` frames, in the ENU frame anchored
  // at the first geo-registration correspondence.
  const std::map<std::string, CameraPose>& drive_registered_poses() const {
    return drive_registered_;
  }
  const std::map<std::string, DetectionSet>& drive_detections() const {
    return drive_detections_;
  }
  DistanceMap drive_distance_map(size_t frame) const;
  DistanceMap drive_distance_map(const std::string& image_name) const;
  DistanceMapSource drive_distance_maps() const;

  // Sign positions (centroid of each sign's face points).
  std::vector<TruthEntry> map_truth() const;
  std::vector<TruthEntry> drive_truth() const;
  // Signs visible in at least one mapping frame.
  std::vector<size_t> signs_seen_in_map() const;
  std::vector<std::string> warnings() const { return warnings_; }

  // Truth as metadata records / change lists for the evaluators.
  std::vector<MetadataEntry> truth_entries(const std::vector<TruthEntry>& truth,
                                           const std::string& date) const;
  std::vector<TruthChange> truth_changes() const;
  std::vector<MetadataEntry> truth_unchanged() const;

  // Writes the bundle directory:
  //   scene.json, palette.txt, georegistration.csv, model/, masks/,
  //   detections.jsonl, truth_metadata.csv, truth_changes.jsonl,
  //   drive/{frames.csv, gps.csv, registered_poses.csv, detections.jsonl,
  //          distance_maps/}
  void write_bundle(const std::filesystem::path& dir) const;

  static constexpr ClassId kBuildingClass = 1;
  static constexpr ClassId kSignClass = 2;

  struct ProjectedSign {
    size_t sign = 0;
    std::vector<Eigen::Vector2d> points;  // exact projections, grid order
    std::array<Eigen::Vector2d, 4> corners;
    BoundingBox bbox;
    double distance = 0.0;
  };
  struct FrameKeypoint {
    Eigen::Vector2d xy;      // as stored (noisy on the mapping drive)
    Vec3 world;              // ENU point
    bool is_sign = false;
    size_t owner = 0;        // sign index or background index
    size_t face_index = 0;
  };
  struct FrameRender {
    CameraPose pose;         // truth, ENU world
    std::vector<ProjectedSign> signs;
    std::vector<FrameKeypoint> keypoints;
  };

 private:
  std::vector<FrameRender> render_drive(const SyntheticScene& scene,
                                        const Mat3& mount, bool mapping) const;
  void build_model();
  void build_drive();
  SegmentationMask rasterize_mask(const FrameRender& frame,
                                  const std::string& name) const;
  DistanceMap rasterize_distance(const SyntheticScene& scene,
                                 const FrameRender& frame,
                                 const std::string& name, bool noisy,
                                 size_t frame_index) const;

  SyntheticScene scene_;
  SyntheticScene drive_scene_;
  ClassPalette palette_;
  std::vector<FrameRender> map_frames_;
  std::vector<FrameRender> drive_frames_;
  Reconstruction model_;
  SimilarityTransform model_from_enu_;
  std::vector<GeoCorrespondence> georegistration_;
  std::vector<DetectionSet> map_detections_;
  std::vector<GpsSample> drive_gps_;
  std::map<std::string, CameraPose> drive_registered_;
  std::map<std::string, DetectionSet> drive_detections_;
  std::vector<std::string> warnings_;
};

// Face points of a sign in ENU, row-major grid order.
std::vector<Vec3> sign_face_points(const SyntheticSign& sign, double size);

// Scene description file (UTF-8 JSON).
SyntheticScene read_scene_json(const std::filesystem::path& path);
void write_scene_json(const SyntheticScene& scene,
                      const std::filesystem::path& path);

// Residential-shaped before/after pair: `num_signs` signs, the first
// `num_removed` of every other sign removed for the drive.
SyntheticScene residential_scenario(std::uint64_t seed, int num_signs = 10,
                                    int num_removed = 4);

// Campus-shaped scenario: 20 unchanged signs with three perception faults
// (two signs missed while mapping, one missed on the drive).
SyntheticScene campus_scenario(std::uint64_t seed);

}  // namespace signmap
