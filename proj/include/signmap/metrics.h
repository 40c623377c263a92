#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "signmap/change.h"
#include "signmap/metadata.h"
#include "signmap/pose.h"
#include "signmap/realtime.h"

namespace signmap {

struct ErrorStats {
  double median = 0.0;
  double std_dev = 0.0;  // population
  double mean = 0.0;
  size_t n = 0;
};

// Empty input gives all zeros with n = 0.
ErrorStats summarize(std::span<const double> values);

struct ChannelError {
  double abs_error = 0.0;
  double rel_error = 0.0;
  size_t n = 0;             // labeled pixels compared
  size_t n_rel = 0;         // pixels entering the relative error
  size_t zero_gt_excluded = 0;
};

// Channels in B order: lateral, height, depth.
struct PixelErrors {
  std::array<ChannelError, 3> channel;
  size_t missing_predictions = 0;  // GT labeled but prediction NaN

  const ChannelError& lateral() const { return channel[0]; }
  const ChannelError& height() const { return channel[1]; }
  const ChannelError& depth() const { return channel[2]; }
};

// Mean absolute and relative error pooled over every GT-labeled pixel of
// every image pair. GT components equal to zero are left out of the
// relative error. Throws ValidationError on size mismatch.
PixelErrors pixel_errors(
    std::span<const std::pair<const DistanceMap*, const DistanceMap*>> pred_gt);
PixelErrors pixel_errors(const DistanceMap& pred, const DistanceMap& gt);

// Distance of each estimated camera center to the nearest reference sample
// (in the given ENU frame), in estimate order.
std::vector<double> pose_errors(std::span<const PoseEstimate> estimates,
                                std::span<const GpsSample> reference,
                                const EnuFrame& frame);
ErrorStats pose_error_vs_trace(std::span<const PoseEstimate> estimates,
                               std::span<const GpsSample> reference,
                               const EnuFrame& frame);

struct LocalizationEval {
  ErrorStats stats;
  std::vector<std::pair<size_t, size_t>> matches;  // (pred, truth)
  std::vector<double> distances;                   // per match, meters
  std::vector<size_t> unmatched_pred;
  std::vector<size_t> unmatched_truth;
};

// Greedy nearest-first one-to-one matching of same-class entries within
// `match_radius` (horizontal distance in `frame`).
LocalizationEval localization_error_stats(std::span<const MetadataEntry> predicted,
                                          std::span<const MetadataEntry> truth,
                                          const EnuFrame& frame,
                                          double match_radius);

struct ConfusionMatrix {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  size_t tn = 0;

  size_t total() const { return tp + fp + fn + tn; }
  // (tp + tn) / total; 0 for an empty matrix.
  double accuracy() const {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / total();
  }
};

struct TruthChange {
  ChangeKind kind = ChangeKind::kAppeared;
  std::string class_name;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

// TP: true changes reported (same kind and class, within radius, one-to-one).
// FN: true changes missed. FP: reports matching no true change. TN: unchanged
// signs with no same-class report within radius.
ConfusionMatrix change_confusion(std::span<const ChangeEvent> reported,
                                 std::span<const TruthChange> truth_changes,
                                 std::span<const MetadataEntry> truth_unchanged,
                                 const EnuFrame& frame, double match_radius);

}  // namespace signmap
