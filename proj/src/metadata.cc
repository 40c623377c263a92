#include "signmap/metadata.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "signmap/csv.h"

namespace signmap {
namespace {

Rgb to_rgb(const Vec3& mean) {
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(
        std::clamp(std::lround(mean(c)), 0L, 255L));
  }
  return out;
}

// Union-find with union by lower index, so every root is the smallest
// member of its set.
class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }
  size_t find(size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<size_t> parent_;
};

}  // namespace

void validate_date(const std::string& date) {
  std::istringstream in(date);
  std::chrono::year_month_day ymd;
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  if (date.size() != 10 || !(in >> y >> dash1 >> m >> dash2 >> d) ||
      dash1 != '-' || dash2 != '-') {
    throw ValidationError("date '" + date + "' is not YYYY-MM-DD");
  }
  ymd = std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d};
  if (!ymd.ok()) throw ValidationError("date '" + date + "' does not exist");
}

void validate(const MetadataEntry& e) {
  validate(GeodeticCoord{e.lat_deg, e.lon_deg, 0.0});
  if (e.class_name.empty() || e.class_name.find(',') != std::string::npos) {
    throw ValidationError("invalid class name '" + e.class_name + "'");
  }
  validate_date(e.date_detected);
}

const EnuFrame& MetadataStore::frame() const {
  if (!enu_frame) throw ValidationError("metadata store has no ENU frame");
  return *enu_frame;
}

Eigen::Vector2d MetadataStore::horizontal(const MetadataEntry& e) const {
  return frame().horizontal(e.lat_deg, e.lon_deg);
}

void validate(const MetadataGenConfig& cfg) {
  if (!(cfg.t_d > 0.0)) throw ValidationError("t_d must be positive");
  if (cfg.min_support < 1) throw ValidationError("min_support must be >= 1");
  if (!(cfg.score_threshold >= 0.0 && cfg.score_threshold <= 1.0)) {
    throw ValidationError("score threshold outside [0, 1]");
  }
}

CandidateReport candidate_points(const Reconstruction& r,
                                 std::span<const DetectionSet> detections,
                                 const MaskSet& masks,
                                 const ClassMatcher& matcher,
                                 const MetadataGenConfig& cfg) {
  validate(cfg);
  if (!r.geo_registered()) {
    throw ValidationError("metadata generation needs a geo-registered model");
  }
  CandidateReport report;
  for (const DetectionSet& set : detections) {
    const ImageRecord* image = r.find_image(set.image_name);
    if (image == nullptr) {
      throw ValidationError("detections reference unknown image '" +
                            set.image_name + "'");
    }
    const auto mit = masks.find(set.image_name);
    if (mit == masks.end()) {
      if (!set.detections.empty()) ++report.images_without_mask;
      report.detections_seen += set.detections.size();
      report.detections_unsupported += set.detections.size();
      continue;
    }
    for (const Detection& det : set.detections) {
      ++report.detections_seen;
      const auto support =
          keypoints_supporting(*image, det, mit->second, matcher);
      if (support.size() < static_cast<size_t>(cfg.min_support)) {
        ++report.detections_unsupported;
        continue;
      }
      Candidate cand;
      cand.class_name = det.class_name;
      for (const size_t k : support) {
        const ScenePoint& p = r.points.at(*image->keypoints[k].point3d_id);
        cand.enu += p.xyz;
        cand.rgb += Vec3(p.rgb[0], p.rgb[1], p.rgb[2]);
      }
      cand.enu /= static_cast<double>(support.size());
      cand.rgb /= static_cast<double>(support.size());
      report.candidates.push_back(std::move(cand));
    }
  }
  return report;
}

std::vector<CandidateCluster> cluster_positions(std::span<const Candidate> cands,
                                                double t_d) {
  if (!(t_d > 0.0)) throw ValidationError("t_d must be positive");
  const size_t n = cands.size();
  DisjointSets sets(n);
  const double t_d_sq = t_d * t_d;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (cands[i].class_name == cands[j].class_name &&
          (cands[i].enu - cands[j].enu).squaredNorm() <= t_d_sq) {
        sets.unite(i, j);
      }
    }
  }

  std::vector<CandidateCluster> clusters;
  std::vector<size_t> slot(n, n);
  for (size_t i = 0; i < n; ++i) {
    const size_t root = sets.find(i);
    if (slot[root] == n) {
      slot[root] = clusters.size();
      clusters.push_back({cands[i].class_name, Vec3::Zero(), Vec3::Zero(), {}});
    }
    clusters[slot[root]].members.push_back(i);
  }
  for (auto& cluster : clusters) {
    for (const size_t i : cluster.members) {
      cluster.enu += cands[i].enu;
      cluster.rgb += cands[i].rgb;
    }
    const double count = static_cast<double>(cluster.members.size());
    cluster.enu /= count;
    cluster.rgb /= count;
  }
  return clusters;
}

std::vector<MetadataEntry> cluster_candidates(std::span<const Candidate> cands,
                                              const MetadataGenConfig& cfg,
                                              const EnuFrame& frame,
                                              const std::string& date) {
  validate(cfg);
  validate_date(date);
  std::vector<MetadataEntry> entries;
  for (const auto& cluster : cluster_positions(cands, cfg.t_d)) {
    const GeodeticCoord g = frame.unproject(cluster.enu);
    entries.push_back(
        {g.lat_deg, g.lon_deg, cluster.class_name, to_rgb(cluster.rgb), date});
  }
  return entries;
}

MetadataStore generate_metadata(const Reconstruction& r,
                                std::span<const DetectionSet> detections,
                                const MaskSet& masks,
                                const ClassMatcher& matcher,
                                const MetadataGenConfig& cfg,
                                const std::string& date,
                                CandidateReport* report) {
  std::vector<DetectionSet> filtered;
  filtered.reserve(detections.size());
  for (const auto& set : detections) {
    filtered.push_back(filter_by_score(set, cfg.score_threshold));
  }
  CandidateReport local = candidate_points(r, filtered, masks, matcher, cfg);
  MetadataStore store;
  store.enu_frame = r.enu_frame();
  store.entries = cluster_candidates(local.candidates, cfg, *store.enu_frame, date);
  if (report) *report = std::move(local);
  return store;
}

std::string format_color(const Rgb& c) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out = "#";
  for (const auto v : c) {
    out.push_back(kHex[v >> 4]);
    out.push_back(kHex[v & 0xf]);
  }
  return out;
}

Rgb parse_color(const std::string& text) {
  if (text.size() != 7 || text[0] != '#') {
    throw ValidationError("color '" + text + "' is not #RRGGBB");
  }
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    int value = 0;
    for (int k = 0; k < 2; ++k) {
      const char ch = text[1 + 2 * c + k];
      int digit;
      if (ch >= '0' && ch <= '9') {
        digit = ch - '0';
      } else if (ch >= 'a' && ch <= 'f') {
        digit = ch - 'a' + 10;
      } else if (ch >= 'A' && ch <= 'F') {
        digit = ch - 'A' + 10;
      } else {
        throw ValidationError("color '" + text + "' is not #RRGGBB");
      }
      value = value * 16 + digit;
    }
    out[c] = static_cast<std::uint8_t>(value);
  }
  return out;
}

std::vector<MetadataEntry> read_metadata(const std::filesystem::path& path) {
  CsvReader csv(path, "lat_deg,lon_deg,class_name,color,date_detected");
  std::vector<MetadataEntry> entries;
  while (csv.next()) {
    MetadataEntry e;
    e.lat_deg = csv.number(0);
    e.lon_deg = csv.number(1);
    e.class_name = csv.fields()[2];
    e.date_detected = csv.fields()[4];
    try {
      e.color = parse_color(csv.fields()[3]);
      validate(e);
    } catch (const ValidationError& err) {
      csv.fail(err.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_metadata(const std::filesystem::path& path,
                    std::span<const MetadataEntry> entries) {
  std::ostringstream out;
  out << "lat_deg,lon_deg,class_name,color,date_detected\n";
  for (const auto& e : entries) {
    validate(e);
    out << format_fixed(e.lat_deg, 9) << ',' << format_fixed(e.lon_deg, 9)
        << ',' << e.class_name << ',' << format_color(e.color) << ','
        << e.date_detected << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace signmap
