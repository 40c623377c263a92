#include "signmap/realtime.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "signmap/csv.h"

namespace signmap {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMagic[4] = {'B', '3', 'D', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

}  // namespace

DistanceMap DistanceMap::unlabeled(std::string image_name, int width,
                                   int height) {
  DistanceMap map;
  map.image_name = std::move(image_name);
  map.width = width;
  map.height = height;
  map.pixels.assign(static_cast<size_t>(width) * height,
                    Vec3(kNaN, kNaN, kNaN));
  return map;
}

size_t DistanceMap::labeled_count() const {
  size_t n = 0;
  for (const auto& b : pixels) n += !std::isnan(b.z());
  return n;
}

DistanceMap read_distance_map(const std::filesystem::path& path,
                              const std::string& image_name) {
  static_assert(std::numeric_limits<float>::is_iec559);
  const std::string data = read_text_file(path);
  const std::string source = path.filename().string();
  if (data.size() < 12 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw ParseError(source, 1, "not a B3DM distance map");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(data.data());
  const std::uint32_t width = get_u32(raw + 4);
  const std::uint32_t height = get_u32(raw + 8);
  const size_t count = static_cast<size_t>(width) * height;
  if (width == 0 || height == 0 || data.size() != 12 + count * 12) {
    throw ParseError(source, 1, "B3DM size does not match its header");
  }
  DistanceMap map;
  map.image_name = image_name;
  map.width = static_cast<int>(width);
  map.height = static_cast<int>(height);
  map.pixels.resize(count);
  const unsigned char* p = raw + 12;
  for (size_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) {
      map.pixels[i](c) = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
  }
  return map;
}

void write_distance_map(const DistanceMap& map,
                        const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  out.reserve(12 + map.pixels.size() * 12);
  put_u32(out, static_cast<std::uint32_t>(map.width));
  put_u32(out, static_cast<std::uint32_t>(map.height));
  for (const auto& b : map.pixels) {
    for (int c = 0; c < 3; ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(b(c))));
    }
  }
  write_text_file(path, out);
}

Vec3 pixel_to_wcs(const PoseEstimate& pose, const Vec3& b) {
  if (!b.allFinite()) throw ValidationError("distance map pixel is unlabeled");
  if (!(b.z() > 0.0)) throw ValidationError("distance map depth must be positive");
  return pose.rotation_cw * b + pose.center;
}

DistanceMap generate_sparse_labels(const Reconstruction& r,
                                   const ImageRecord& image) {
  const CameraIntrinsics& cam = r.camera_of(image);
  DistanceMap map = DistanceMap::unlabeled(image.name, cam.width, cam.height);
  for (const Keypoint& kp : image.keypoints) {
    if (!kp.point3d_id) continue;
    const auto px = pixel_of(kp.x, kp.y, cam.width, cam.height);
    if (!px) continue;
    const Vec3 b = image.pose.to_camera(r.points.at(*kp.point3d_id).xyz);
    if (!(b.z() > 0.0)) continue;
    Vec3& slot = map.at(px->first, px->second);
    if (std::isnan(slot.z()) || b.z() < slot.z()) slot = b;
  }
  return map;
}

void validate(const RangeGate& gate) {
  if (!(gate.u_min >= 0.0 && gate.u_min < gate.u_max)) {
    throw ValidationError("range gate needs 0 <= u_min < u_max");
  }
}

std::optional<Localization> locate_detection(const Detection& det,
                                             const DistanceMap& dmap,
                                             const PoseEstimate& pose,
                                             const RangeGate& gate) {
  validate(gate);
  BoundingBox box;
  try {
    box = clamp_to_image(det.bbox, dmap.width, dmap.height);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
  const int cx = std::clamp(static_cast<int>(std::lround(box.center_x())), 0,
                            dmap.width - 1);
  const int cy = std::clamp(static_cast<int>(std::lround(box.center_y())), 0,
                            dmap.height - 1);

  const Vec3* b = nullptr;
  if (dmap.labeled(cx, cy)) {
    b = &dmap.at(cx, cy);
  } else {
    const int x0 = static_cast<int>(std::ceil(box.xmin));
    const int x1 = static_cast<int>(std::floor(box.xmax));
    const int y0 = static_cast<int>(std::ceil(box.ymin));
    const int y1 = static_cast<int>(std::floor(box.ymax));
    long best = std::numeric_limits<long>::max();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!dmap.labeled(x, y)) continue;
        const long d = long{x - cx} * (x - cx) + long{y - cy} * (y - cy);
        if (d < best) {
          best = d;
          b = &dmap.at(x, y);
        }
      }
    }
  }
  if (b == nullptr || !(b->z() > 0.0)) return std::nullopt;
  const double range = b->norm();
  if (!gate.admits(range)) return std::nullopt;
  return Localization{det.class_name, pixel_to_wcs(pose, *b), range};
}

size_t update_tracks(std::vector<ObservationTrack>& tracks,
                     const Observation& obs, double r_assoc) {
  if (!obs.enu.allFinite()) throw ValidationError("observation is not finite");
  size_t best = tracks.size();
  double best_dist = r_assoc;
  for (size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].class_name != obs.class_name) continue;
    const double d = (tracks[i].mean_enu - obs.enu).norm();
    if (d < best_dist || (d == best_dist && best == tracks.size())) {
      best = i;
      best_dist = d;
    }
  }
  if (best == tracks.size()) {
    tracks.push_back({obs.class_name, obs.enu, 1, obs.date, obs.date});
    return best;
  }
  ObservationTrack& t = tracks[best];
  t.mean_enu += (obs.enu - t.mean_enu) / static_cast<double>(t.count + 1);
  ++t.count;
  if (obs.date < t.first_seen) t.first_seen = obs.date;
  if (obs.date > t.last_seen) t.last_seen = obs.date;
  return best;
}

void finalize_tracks(std::vector<ObservationTrack>& tracks, double r_assoc) {
  while (true) {
    size_t a = tracks.size(), b = tracks.size();
    double best = r_assoc;
    for (size_t i = 0; i < tracks.size(); ++i) {
      for (size_t j = i + 1; j < tracks.size(); ++j) {
        if (tracks[i].class_name != tracks[j].class_name) continue;
        const double d = (tracks[i].mean_enu - tracks[j].mean_enu).norm();
        if (d <= best && (d < best || a == tracks.size())) {
          a = i;
          b = j;
          best = d;
        }
      }
    }
    if (a == tracks.size()) return;
    ObservationTrack& keep = tracks[a];
    const ObservationTrack& gone = tracks[b];
    const double n = keep.count + gone.count;
    keep.mean_enu = (keep.count * keep.mean_enu + gone.count * gone.mean_enu) / n;
    keep.count += gone.count;
    keep.first_seen = std::min(keep.first_seen, gone.first_seen);
    keep.last_seen = std::max(keep.last_seen, gone.last_seen);
    tracks.erase(tracks.begin() + static_cast<long>(b));
  }
}

TraversalResult run_traversal(
    const Reconstruction& map, std::span<const FrameTime> frames,
    std::span<const GpsSample> gps,
    const std::map<std::string, DetectionSet>& detections,
    const std::map<std::string, CameraPose>& registered,
    const DistanceMapSource& distance_maps, const TraversalConfig& cfg,
    const std::string& date) {
  validate(cfg.gate);
  const ReferenceIndex index(map);
  PoseTracker tracker(index, map.enu_frame(), cfg.pose);
  TraversalResult result;

  for (const FrameTime& frame : frames) {
    std::optional<CameraPose> reg;
    if (const auto it = registered.find(frame.image_name);
        it != registered.end()) {
      reg = it->second;
    } else if (tracker.needs_anchor() && tracker.last()) {
      ++result.anchors_missed;
    }
    const PoseEstimate pose =
        tracker.next(frame.image_name, gps_at(gps, frame.t), reg);
    result.poses.push_back(pose);

    const auto dit = detections.find(frame.image_name);
    if (dit == detections.end()) continue;
    const DetectionSet kept = filter_by_score(dit->second, cfg.score_threshold);
    if (kept.detections.empty()) continue;

    const DistanceMap dmap = distance_maps(frame.image_name);
    for (const Detection& det : kept.detections) {
      ++result.detections_seen;
      const auto loc = locate_detection(det, dmap, pose, cfg.gate);
      if (!loc) {
        // Distinguish "nothing to read" from "read but gated out".
        const auto ungated = locate_detection(det, dmap, pose, {0.0, 1e300});
        ++(ungated ? result.detections_gated : result.detections_unlocated);
        continue;
      }
      update_tracks(result.tracks, {loc->class_name, loc->enu, date},
                    cfg.r_assoc);
    }
  }
  finalize_tracks(result.tracks, cfg.r_assoc);
  return result;
}

}  // namespace signmap
