#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signmap/pose.h"
#include "signmap/reconstruction.h"
#include "signmap/semantics.h"

namespace signmap {

// Per-pixel camera-frame offsets B = (lateral, height, depth), i.e. camera
// x (right), y (down), z (forward). Unlabeled pixels hold NaN.
struct DistanceMap {
  std::string image_name;
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;  // row-major

  static DistanceMap unlabeled(std::string image_name, int width, int height);

  const Vec3& at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  Vec3& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  bool labeled(int x, int y) const { return !std::isnan(at(x, y).z()); }
  size_t labeled_count() const;
};

// Binary layout: magic "B3DM", u32 LE width, u32 LE height, then
// width * height little-endian f32 triples, row-major.
DistanceMap read_distance_map(const std::filesystem::path& path,
                              const std::string& image_name);
void write_distance_map(const DistanceMap& map,
                        const std::filesystem::path& path);

// P = R^T B + C. Throws ValidationError for unlabeled or non-positive depth.
Vec3 pixel_to_wcs(const PoseEstimate& pose, const Vec3& b);

// Training labels from the sparse model: B = R_wc (P - C) at each keypoint
// with a 3D point, written at the rounded keypoint pixel. Collisions keep the
// nearer point.
DistanceMap generate_sparse_labels(const Reconstruction& r,
                                   const ImageRecord& image);

struct RangeGate {
  double u_min = 3.0;
  double u_max = 50.0;

  bool admits(double range) const { return range >= u_min && range <= u_max; }
};

void validate(const RangeGate& gate);

struct Localization {
  std::string class_name;
  Vec3 enu = Vec3::Zero();
  double range = 0.0;  // |B|
};

// Reads B at the bounding-box center (falling back to the nearest labeled
// pixel inside the box), drops it when |B| is outside the gate and projects
// the rest into the world frame.
std::optional<Localization> locate_detection(const Detection& det,
                                             const DistanceMap& dmap,
                                             const PoseEstimate& pose,
                                             const RangeGate& gate);

struct ObservationTrack {
  std::string class_name;
  Vec3 mean_enu = Vec3::Zero();
  int count = 0;
  std::string first_seen;
  std::string last_seen;
};

struct Observation {
  std::string class_name;
  Vec3 enu = Vec3::Zero();
  std::string date;
};

inline constexpr double kDefaultAssociationRadius = 10.0;

// Folds the observation into the nearest same-class track within `r_assoc`
// (ties go to the older track) or starts a new track. Returns the index of
// the track that received the observation.
size_t update_tracks(std::vector<ObservationTrack>& tracks,
                     const Observation& obs,
                     double r_assoc = kDefaultAssociationRadius);

// Merges same-class tracks whose means lie within `r_assoc`, closest pair
// first, into count-weighted means. The merged track keeps the lower index.
void finalize_tracks(std::vector<ObservationTrack>& tracks,
                     double r_assoc = kDefaultAssociationRadius);

struct TraversalConfig {
  RangeGate gate;
  double r_assoc = kDefaultAssociationRadius;
  double score_threshold = kDefaultScoreThreshold;
  PoseConfig pose;
};

struct TraversalResult {
  std::vector<PoseEstimate> poses;
  std::vector<ObservationTrack> tracks;
  size_t detections_seen = 0;
  size_t detections_gated = 0;     // outside the range gate
  size_t detections_unlocated = 0; // no labeled pixel in the box
  size_t anchors_missed = 0;       // re-anchor due but no registered pose
};

using DistanceMapSource = std::function<DistanceMap(const std::string&)>;

// Runs pose estimation, localization and tracking over one drive. Distance
// maps are requested only for frames that keep at least one detection.
TraversalResult run_traversal(
    const Reconstruction& map, std::span<const FrameTime> frames,
    std::span<const GpsSample> gps,
    const std::map<std::string, DetectionSet>& detections,
    const std::map<std::string, CameraPose>& registered,
    const DistanceMapSource& distance_maps, const TraversalConfig& cfg,
    const std::string& date);

}  // namespace signmap
