#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signmap/camera.h"
#include "signmap/geodesy.h"
#include "signmap/reconstruction.h"

namespace signmap {

struct GpsSample {
  double t = 0.0;  // seconds, non-decreasing within a trace
  GeodeticCoord coord;

  bool operator==(const GpsSample&) const = default;
};

// CSV `t_s,lat_deg,lon_deg,alt_m`. Throws ParseError when timestamps go
// backwards.
std::vector<GpsSample> read_gps_trace(const std::filesystem::path& path);
void write_gps_trace(const std::filesystem::path& path,
                     std::span<const GpsSample> trace);

struct FrameTime {
  std::string image_name;
  double t = 0.0;
};

// CSV `image_name,t_s`.
std::vector<FrameTime> read_frame_times(const std::filesystem::path& path);
void write_frame_times(const std::filesystem::path& path,
                       std::span<const FrameTime> frames);

// Position at time t: linear interpolation between the bracketing samples,
// the nearest end sample outside the trace.
GpsSample gps_at(std::span<const GpsSample> trace, double t);

// Poses supplied by an external registration step, in the
// geo-registered model frame. CSV `image_name,qw,qx,qy,qz,tx,ty,tz`
// (world-to-camera, same convention as the sparse model).
std::map<std::string, CameraPose> read_registered_poses(
    const std::filesystem::path& path);
void write_registered_poses(const std::filesystem::path& path,
                            const std::map<std::string, CameraPose>& poses);

enum class PoseSource { kRegistered, kPropagated };

struct PoseEstimate {
  std::string image_name;
  Mat3 rotation_cw = Mat3::Identity();  // camera -> world
  Vec3 center = Vec3::Zero();           // ENU meters
  PoseSource source = PoseSource::kRegistered;

  Mat3 rotation_wc() const { return rotation_cw.transpose(); }
};

// Reference images of the map with their ENU camera centers.
class ReferenceIndex {
 public:
  explicit ReferenceIndex(const Reconstruction& r);

  bool empty() const { return refs_.empty(); }
  size_t size() const { return refs_.size(); }

  struct Reference {
    ImageId image_id;
    Vec3 center;
    Mat3 rotation_wc;
  };

  // Reference whose center is nearest; ties go to the lowest image id.
  // Throws ValidationError on an empty index.
  const Reference& nearest(const Vec3& position) const;

 private:
  std::vector<Reference> refs_;  // ascending image id
};

const ImageRecord& nearest_reference(const ReferenceIndex& index,
                                     const Reconstruction& r,
                                     const Vec3& position);

// R_t = R_{t-1} * R'_{t-1}^T * R'_t on world-to-camera rotations, projected
// back onto SO(3). Throws ValidationError when an input deviates from
// orthonormality by more than 1e-6.
Mat3 propagate_orientation(const Mat3& r_prev, const Mat3& ref_prev,
                           const Mat3& ref_cur);

// Nearest rotation (polar decomposition).
Mat3 nearest_rotation(const Mat3& m);

struct PoseConfig {
  double max_ref_distance = 50.0;  // meters; farther means off-map
  int reanchor_every = 30;         // frames between registered anchors
};

// The registered pose when one is given, otherwise GPS
// position and propagated orientation. Throws ValidationError when
// neither is possible or the vehicle is off the map.
PoseEstimate estimate_pose(const std::string& image_name, const GpsSample& gps,
                           const ReferenceIndex& index, const EnuFrame& frame,
                           const std::optional<PoseEstimate>& prev,
                           const std::optional<CameraPose>& registered,
                           const PoseConfig& cfg = {});

// Sequential estimator for one trace.
class PoseTracker {
 public:
  PoseTracker(const ReferenceIndex& index, EnuFrame frame, PoseConfig cfg = {});

  // True before the first frame and once `reanchor_every` propagated frames
  // have passed since the last registered pose.
  bool needs_anchor() const;

  PoseEstimate next(const std::string& image_name, const GpsSample& gps,
                    const std::optional<CameraPose>& registered);

  const std::optional<PoseEstimate>& last() const { return prev_; }

 private:
  const ReferenceIndex* index_;
  EnuFrame frame_;
  PoseConfig cfg_;
  std::optional<PoseEstimate> prev_;
  int since_anchor_ = 0;
};

}  // namespace signmap
