#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signmap/camera.h"
#include "signmap/metadata.h"
#include "signmap/realtime.h"

namespace signmap {

struct ChangeDetectConfig {
  double match_radius_r = 20.0;  // meters
  RangeGate gate;
  double score_threshold = kDefaultScoreThreshold;
  int min_track_count = 2;
  int removal_min_visible_frames = 5;
  double fov_margin_deg = 5.0;
};

void validate(const ChangeDetectConfig& cfg);

enum class ChangeKind { kAppeared, kRemoved };

std::string to_string(ChangeKind kind);
ChangeKind parse_change_kind(const std::string& text);

struct Sighting {
  std::string vehicle_id;
  std::string date;

  bool operator==(const Sighting&) const = default;
  auto operator<=>(const Sighting&) const = default;
};

struct ChangeEvent {
  ChangeKind kind = ChangeKind::kAppeared;
  std::string class_name;
  GeodeticCoord position;
  Sighting evidence;
  int observation_count = 0;
  std::optional<double> distance_to_nearest_same_class;
};

struct PendingChange {
  ChangeEvent event;
  std::vector<Sighting> log;  // unique entries, in arrival order
};

// Working copy of the semantic layer plus unconfirmed changes.
struct TemporaryLayer {
  MetadataStore base;
  std::vector<PendingChange> pending;
};

TemporaryLayer make_temporary_layer(const MetadataStore& semantic);

struct PermanenceConfig {
  int min_vehicles = 0;
  int min_days = 0;
};

void validate(const PermanenceConfig& cfg);

// Greedy nearest-first one-to-one assignment of tracks (with at least
// `min_track_count` observations) to same-class entries within R, using
// horizontal distance. Element i holds the entry index matched to track i.
std::vector<std::optional<size_t>> match_tracks(
    std::span<const ObservationTrack> tracks, const MetadataStore& store,
    const ChangeDetectConfig& cfg);

// Tracks that match no same-class entry within R.
std::vector<ChangeEvent> detect_appearances(
    std::span<const ObservationTrack> tracks, const TemporaryLayer& layer,
    const ChangeDetectConfig& cfg, const std::string& vehicle_id,
    const std::string& date);

// Number of poses that had the entry inside the horizontal field of view
// (plus margin) and inside the range gate.
int visible_frames(const Eigen::Vector2d& entry_en,
                   std::span<const PoseEstimate> poses,
                   const CameraIntrinsics& intrinsics,
                   const ChangeDetectConfig& cfg);

// Entries seen by at least `removal_min_visible_frames` poses yet matched by
// no track.
std::vector<ChangeEvent> detect_removals(
    std::span<const ObservationTrack> tracks, const TemporaryLayer& layer,
    std::span<const PoseEstimate> poses, const CameraIntrinsics& intrinsics,
    const ChangeDetectConfig& cfg, const std::string& vehicle_id,
    const std::string& date);

// Appends events to the pending list; an equivalent pending change (same
// kind and class, within R) collects the sighting instead.
TemporaryLayer apply_to_temporary(const TemporaryLayer& layer,
                                  std::span<const ChangeEvent> events,
                                  const std::string& vehicle_id,
                                  const std::string& date,
                                  double match_radius_r = 20.0);

struct PromotionResult {
  MetadataStore semantic;
  TemporaryLayer layer;
  int promoted_appearances = 0;
  int promoted_removals = 0;
  std::vector<std::string> warnings;
};

// Commits pending changes confirmed by enough distinct vehicles over enough
// distinct days. The returned layer's base is a copy of the new semantic
// store.
PromotionResult promote_permanent(const TemporaryLayer& layer,
                                  const PermanenceConfig& pcfg,
                                  const MetadataStore& semantic,
                                  double match_radius_r = 20.0);

// One JSON object per line:
// {"kind", "class", "lat_deg", "lon_deg", "vehicle_id", "date",
//  "nearest_same_class_m"}
void write_change_report(const std::filesystem::path& path,
                         std::span<const ChangeEvent> events);
std::vector<ChangeEvent> read_change_report(const std::filesystem::path& path);

// Pending changes with their sighting logs, one JSON object per line.
void write_pending(const std::filesystem::path& path,
                   std::span<const PendingChange> pending);
std::vector<PendingChange> read_pending(const std::filesystem::path& path);

}  // namespace signmap
