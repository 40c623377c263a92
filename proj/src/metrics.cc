#include "signmap/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace signmap {

ErrorStats summarize(std::span<const double> values) {
  ErrorStats s;
  s.n = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[mid]
                                    : 0.5 * (sorted[mid - 1] + sorted[mid]);
  double sum = 0.0;
  for (const double v : sorted) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (const double v : sorted) sq += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

PixelErrors pixel_errors(
    std::span<const std::pair<const DistanceMap*, const DistanceMap*>> pred_gt) {
  PixelErrors out;
  std::array<double, 3> abs_sum{};
  std::array<double, 3> rel_sum{};
  for (const auto& [pred, gt] : pred_gt) {
    if (pred->width != gt->width || pred->height != gt->height) {
      throw ValidationError("distance map sizes differ for '" + gt->image_name +
                            "'");
    }
    for (size_t i = 0; i < gt->pixels.size(); ++i) {
      const Vec3& g = gt->pixels[i];
      if (!g.allFinite()) continue;
      const Vec3& p = pred->pixels[i];
      if (!p.allFinite()) {
        ++out.missing_predictions;
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        ChannelError& ch = out.channel[c];
        ++ch.n;
        abs_sum[c] += std::abs(p(c) - g(c));
        if (g(c) == 0.0) {
          ++ch.zero_gt_excluded;
          continue;
        }
        ++ch.n_rel;
        rel_sum[c] += std::abs(p(c) / g(c) - 1.0);
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    ChannelError& ch = out.channel[c];
    ch.abs_error = ch.n ? abs_sum[c] / static_cast<double>(ch.n) : 0.0;
    ch.rel_error = ch.n_rel ? rel_sum[c] / static_cast<double>(ch.n_rel) : 0.0;
  }
  return out;
}

PixelErrors pixel_errors(const DistanceMap& pred, const DistanceMap& gt) {
  const std::pair<const DistanceMap*, const DistanceMap*> pair{&pred, &gt};
  return pixel_errors(std::span(&pair, 1));
}

std::vector<double> pose_errors(std::span<const PoseEstimate> estimates,
                                std::span<const GpsSample> reference,
                                const EnuFrame& frame) {
  if (estimates.empty() || reference.empty()) {
    throw ValidationError("pose evaluation needs estimates and a reference trace");
  }
  std::vector<Vec3> ref;
  ref.reserve(reference.size());
  for (const auto& s : reference) ref.push_back(frame.project(s.coord));
  std::vector<double> errors;
  errors.reserve(estimates.size());
  for (const auto& est : estimates) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : ref) best = std::min(best, (r - est.center).squaredNorm());
    errors.push_back(std::sqrt(best));
  }
  return errors;
}

ErrorStats pose_error_vs_trace(std::span<const PoseEstimate> estimates,
                               std::span<const GpsSample> reference,
                               const EnuFrame& frame) {
  const auto errors = pose_errors(estimates, reference, frame);
  return summarize(errors);
}

LocalizationEval localization_error_stats(std::span<const MetadataEntry> predicted,
                                          std::span<const MetadataEntry> truth,
                                          const EnuFrame& frame,
                                          double match_radius) {
  std::vector<Eigen::Vector2d> pred_en, truth_en;
  for (const auto& e : predicted) pred_en.push_back(frame.horizontal(e.lat_deg, e.lon_deg));
  for (const auto& e : truth) truth_en.push_back(frame.horizontal(e.lat_deg, e.lon_deg));

  std::vector<std::tuple<double, size_t, size_t>> pairs;
  for (size_t p = 0; p < predicted.size(); ++p) {
    for (size_t t = 0; t < truth.size(); ++t) {
      if (predicted[p].class_name != truth[t].class_name) continue;
      const double d = (pred_en[p] - truth_en[t]).norm();
      if (d <= match_radius) pairs.emplace_back(d, p, t);
    }
  }
  std::sort(pairs.begin(), pairs.end());

  LocalizationEval eval;
  std::vector<bool> pred_used(predicted.size(), false);
  std::vector<bool> truth_used(truth.size(), false);
  for (const auto& [d, p, t] : pairs) {
    if (pred_used[p] || truth_used[t]) continue;
    pred_used[p] = truth_used[t] = true;
    eval.matches.emplace_back(p, t);
    eval.distances.push_back(d);
  }
  for (size_t p = 0; p < predicted.size(); ++p) {
    if (!pred_used[p]) eval.unmatched_pred.push_back(p);
  }
  for (size_t t = 0; t < truth.size(); ++t) {
    if (!truth_used[t]) eval.unmatched_truth.push_back(t);
  }
  eval.stats = summarize(eval.distances);
  return eval;
}

ConfusionMatrix change_confusion(std::span<const ChangeEvent> reported,
                                 std::span<const TruthChange> truth_changes,
                                 std::span<const MetadataEntry> truth_unchanged,
                                 const EnuFrame& frame, double match_radius) {
  std::vector<Eigen::Vector2d> rep_en;
  for (const auto& ev : reported) {
    rep_en.push_back(frame.horizontal(ev.position.lat_deg, ev.position.lon_deg));
  }

  std::vector<std::tuple<double, size_t, size_t>> pairs;
  for (size_t r = 0; r < reported.size(); ++r) {
    for (size_t t = 0; t < truth_changes.size(); ++t) {
      const TruthChange& tc = truth_changes[t];
      if (tc.kind != reported[r].kind || tc.class_name != reported[r].class_name) {
        continue;
      }
      const double d =
          (rep_en[r] - frame.horizontal(tc.lat_deg, tc.lon_deg)).norm();
      if (d <= match_radius) pairs.emplace_back(d, r, t);
    }
  }
  std::sort(pairs.begin(), pairs.end());

  ConfusionMatrix cm;
  std::vector<bool> rep_used(reported.size(), false);
  std::vector<bool> truth_used(truth_changes.size(), false);
  for (const auto& [d, r, t] : pairs) {
    if (rep_used[r] || truth_used[t]) continue;
    rep_used[r] = truth_used[t] = true;
    ++cm.tp;
  }
  cm.fn = truth_changes.size() - cm.tp;
  cm.fp = reported.size() - cm.tp;

  for (const auto& entry : truth_unchanged) {
    const Eigen::Vector2d en = frame.horizontal(entry.lat_deg, entry.lon_deg);
    bool reported_here = false;
    for (size_t r = 0; r < reported.size() && !reported_here; ++r) {
      reported_here = reported[r].class_name == entry.class_name &&
                      (rep_en[r] - en).norm() <= match_radius;
    }
    if (!reported_here) ++cm.tn;
  }
  return cm;
}

}  // namespace signmap
