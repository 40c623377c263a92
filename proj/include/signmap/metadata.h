#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signmap/geodesy.h"
#include "signmap/reconstruction.h"
#include "signmap/semantics.h"

namespace signmap {

using Rgb = std::array<std::uint8_t, 3>;

// One record of the semantic map layer.
struct MetadataEntry {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  std::string class_name;
  Rgb color{};
  std::string date_detected;  // YYYY-MM-DD

  bool operator==(const MetadataEntry&) const = default;
};

void validate(const MetadataEntry& e);

// Throws ValidationError unless `date` is a calendar date in YYYY-MM-DD form.
void validate_date(const std::string& date);

struct MetadataStore {
  std::vector<MetadataEntry> entries;
  std::optional<EnuFrame> enu_frame;  // needed for metric queries

  const EnuFrame& frame() const;
  // East/north of an entry in the store's frame.
  Eigen::Vector2d horizontal(const MetadataEntry& e) const;
};

struct MetadataGenConfig {
  double t_d = 5.0;          // same-class clustering threshold, meters
  int min_support = 3;       // supporting keypoints per detection
  double score_threshold = kDefaultScoreThreshold;
};

void validate(const MetadataGenConfig& cfg);

struct Candidate {
  std::string class_name;
  Vec3 enu = Vec3::Zero();
  Vec3 rgb = Vec3::Zero();  // mean color of the supporting points
};

struct CandidateReport {
  std::vector<Candidate> candidates;
  size_t detections_seen = 0;
  size_t detections_unsupported = 0;  // fewer than min_support keypoints
  size_t images_without_mask = 0;
};

// One candidate per detection: the centroid of the 3D points behind its
// supporting keypoints. Detections with fewer than `min_support` supporting
// keypoints cannot be located and yield nothing. Throws ValidationError when
// the model is not geo-registered or a detection names an unknown image.
CandidateReport candidate_points(const Reconstruction& r,
                                 std::span<const DetectionSet> detections,
                                 const MaskSet& masks,
                                 const ClassMatcher& matcher,
                                 const MetadataGenConfig& cfg);

struct CandidateCluster {
  std::string class_name;
  Vec3 enu = Vec3::Zero();
  Vec3 rgb = Vec3::Zero();
  std::vector<size_t> members;  // candidate indices, ascending
};

// Per-class single-linkage agglomeration: candidates within t_d of each
// other (transitively) form one cluster placed at the member centroid.
// Clusters are ordered by their lowest member index.
std::vector<CandidateCluster> cluster_positions(std::span<const Candidate> cands,
                                                double t_d);

std::vector<MetadataEntry> cluster_candidates(std::span<const Candidate> cands,
                                              const MetadataGenConfig& cfg,
                                              const EnuFrame& frame,
                                              const std::string& date);

MetadataStore generate_metadata(const Reconstruction& r,
                                std::span<const DetectionSet> detections,
                                const MaskSet& masks,
                                const ClassMatcher& matcher,
                                const MetadataGenConfig& cfg,
                                const std::string& date,
                                CandidateReport* report = nullptr);

// CSV `lat_deg,lon_deg,class_name,color,date_detected`, color as #RRGGBB,
// coordinates with 9 decimals.
std::vector<MetadataEntry> read_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path,
                    std::span<const MetadataEntry> entries);

std::string format_color(const Rgb& c);
Rgb parse_color(const std::string& text);

}  // namespace signmap
