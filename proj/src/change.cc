#include "signmap/change.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <tuple>

#include <json.hpp>

#include "signmap/csv.h"

namespace signmap {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Vector2d horizontal_of(const EnuFrame& frame, const GeodeticCoord& g) {
  return frame.horizontal(g.lat_deg, g.lon_deg);
}

bool equivalent(const ChangeEvent& a, const ChangeEvent& b,
                const EnuFrame& frame, double radius) {
  return a.kind == b.kind && a.class_name == b.class_name &&
         (horizontal_of(frame, a.position) - horizontal_of(frame, b.position))
                 .norm() <= radius;
}

// Nearest same-class entry within `radius`, by horizontal distance.
std::optional<size_t> nearest_entry(const MetadataStore& store,
                                    const std::string& class_name,
                                    const Eigen::Vector2d& en, double radius) {
  std::optional<size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < store.entries.size(); ++i) {
    if (store.entries[i].class_name != class_name) continue;
    const double d = (store.horizontal(store.entries[i]) - en).norm();
    if (d <= radius && d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

}  // namespace

void validate(const ChangeDetectConfig& cfg) {
  if (!(cfg.match_radius_r > 0.0)) {
    throw ValidationError("match radius R must be positive");
  }
  validate(cfg.gate);
  if (!(cfg.score_threshold >= 0.0 && cfg.score_threshold <= 1.0)) {
    throw ValidationError("score threshold outside [0, 1]");
  }
  if (cfg.min_track_count < 1) throw ValidationError("min_track_count must be >= 1");
  if (cfg.removal_min_visible_frames < 1) {
    throw ValidationError("removal_min_visible_frames must be >= 1");
  }
  if (!(cfg.fov_margin_deg >= 0.0)) throw ValidationError("fov margin must be >= 0");
}

std::string to_string(ChangeKind kind) {
  return kind == ChangeKind::kAppeared ? "appeared" : "removed";
}

ChangeKind parse_change_kind(const std::string& text) {
  if (text == "appeared") return ChangeKind::kAppeared;
  if (text == "removed") return ChangeKind::kRemoved;
  throw ValidationError("unknown change kind '" + text + "'");
}

TemporaryLayer make_temporary_layer(const MetadataStore& semantic) {
  return TemporaryLayer{semantic, {}};
}

void validate(const PermanenceConfig& cfg) {
  if (cfg.min_vehicles < 1 || cfg.min_days < 1) {
    throw ValidationError("permanence thresholds must both be >= 1");
  }
}

std::vector<std::optional<size_t>> match_tracks(
    std::span<const ObservationTrack> tracks, const MetadataStore& store,
    const ChangeDetectConfig& cfg) {
  validate(cfg);
  std::vector<Eigen::Vector2d> entry_en;
  entry_en.reserve(store.entries.size());
  for (const auto& e : store.entries) entry_en.push_back(store.horizontal(e));

  std::vector<std::tuple<double, size_t, size_t>> pairs;
  for (size_t t = 0; t < tracks.size(); ++t) {
    if (tracks[t].count < cfg.min_track_count) continue;
    for (size_t e = 0; e < store.entries.size(); ++e) {
      if (store.entries[e].class_name != tracks[t].class_name) continue;
      const double d = (tracks[t].mean_enu.head<2>() - entry_en[e]).norm();
      if (d <= cfg.match_radius_r) pairs.emplace_back(d, t, e);
    }
  }
  std::sort(pairs.begin(), pairs.end());

  std::vector<std::optional<size_t>> assignment(tracks.size());
  std::vector<bool> entry_taken(store.entries.size(), false);
  for (const auto& [d, t, e] : pairs) {
    if (assignment[t] || entry_taken[e]) continue;
    assignment[t] = e;
    entry_taken[e] = true;
  }
  return assignment;
}

std::vector<ChangeEvent> detect_appearances(
    std::span<const ObservationTrack> tracks, const TemporaryLayer& layer,
    const ChangeDetectConfig& cfg, const std::string& vehicle_id,
    const std::string& date) {
  const MetadataStore& store = layer.base;
  const EnuFrame& frame = store.frame();
  const auto assignment = match_tracks(tracks, store, cfg);

  std::vector<ChangeEvent> events;
  for (size_t t = 0; t < tracks.size(); ++t) {
    const ObservationTrack& track = tracks[t];
    if (track.count < cfg.min_track_count || assignment[t]) continue;
    ChangeEvent ev;
    ev.kind = ChangeKind::kAppeared;
    ev.class_name = track.class_name;
    ev.position = frame.unproject(track.mean_enu);
    ev.evidence = {vehicle_id, date};
    ev.observation_count = track.count;
    for (const auto& e : store.entries) {
      if (e.class_name != track.class_name) continue;
      const double d = (store.horizontal(e) - track.mean_enu.head<2>()).norm();
      if (!ev.distance_to_nearest_same_class ||
          d < *ev.distance_to_nearest_same_class) {
        ev.distance_to_nearest_same_class = d;
      }
    }
    events.push_back(std::move(ev));
  }
  return events;
}

int visible_frames(const Eigen::Vector2d& entry_en,
                   std::span<const PoseEstimate> poses,
                   const CameraIntrinsics& intrinsics,
                   const ChangeDetectConfig& cfg) {
  const double half_fov =
      std::atan2(std::max(intrinsics.cx, intrinsics.width - intrinsics.cx),
                 intrinsics.fx) +
      cfg.fov_margin_deg * kDegToRad;
  int count = 0;
  for (const auto& pose : poses) {
    const Eigen::Vector2d to_entry = entry_en - pose.center.head<2>();
    const double range = to_entry.norm();
    if (!cfg.gate.admits(range)) continue;
    const Eigen::Vector2d forward = pose.rotation_cw.col(2).head<2>();
    if (forward.norm() < 1e-9) continue;  // camera looking straight up/down
    const double cos_angle = forward.dot(to_entry) / (forward.norm() * range);
    if (std::acos(std::clamp(cos_angle, -1.0, 1.0)) <= half_fov) ++count;
  }
  return count;
}

std::vector<ChangeEvent> detect_removals(
    std::span<const ObservationTrack> tracks, const TemporaryLayer& layer,
    std::span<const PoseEstimate> poses, const CameraIntrinsics& intrinsics,
    const ChangeDetectConfig& cfg, const std::string& vehicle_id,
    const std::string& date) {
  const MetadataStore& store = layer.base;
  const EnuFrame& frame = store.frame();
  const auto assignment = match_tracks(tracks, store, cfg);
  std::vector<bool> matched(store.entries.size(), false);
  for (const auto& a : assignment) {
    if (a) matched[*a] = true;
  }

  std::vector<ChangeEvent> events;
  for (size_t e = 0; e < store.entries.size(); ++e) {
    if (matched[e]) continue;
    const MetadataEntry& entry = store.entries[e];
    const int seen = visible_frames(store.horizontal(entry), poses, intrinsics, cfg);
    if (seen < cfg.removal_min_visible_frames) continue;
    ChangeEvent ev;
    ev.kind = ChangeKind::kRemoved;
    ev.class_name = entry.class_name;
    ev.position = {entry.lat_deg, entry.lon_deg, frame.origin().alt_m};
    ev.evidence = {vehicle_id, date};
    ev.observation_count = seen;
    events.push_back(std::move(ev));
  }
  return events;
}

TemporaryLayer apply_to_temporary(const TemporaryLayer& layer,
                                  std::span<const ChangeEvent> events,
                                  const std::string& vehicle_id,
                                  const std::string& date,
                                  double match_radius_r) {
  validate_date(date);
  TemporaryLayer out = layer;
  const EnuFrame& frame = out.base.frame();
  const Sighting sighting{vehicle_id, date};
  for (const ChangeEvent& ev : events) {
    auto it = std::find_if(out.pending.begin(), out.pending.end(),
                           [&](const PendingChange& p) {
                             return equivalent(p.event, ev, frame, match_radius_r);
                           });
    if (it == out.pending.end()) {
      out.pending.push_back({ev, {sighting}});
      continue;
    }
    if (std::find(it->log.begin(), it->log.end(), sighting) == it->log.end()) {
      it->log.push_back(sighting);
    }
  }
  return out;
}

PromotionResult promote_permanent(const TemporaryLayer& layer,
                                  const PermanenceConfig& pcfg,
                                  const MetadataStore& semantic,
                                  double match_radius_r) {
  validate(pcfg);
  PromotionResult result;
  result.semantic = semantic;
  const EnuFrame& frame = semantic.frame();

  for (const PendingChange& p : layer.pending) {
    std::set<std::string> vehicles;
    std::set<std::string> days;
    for (const auto& s : p.log) {
      vehicles.insert(s.vehicle_id);
      days.insert(s.date);
    }
    const bool confirmed =
        static_cast<int>(vehicles.size()) >= pcfg.min_vehicles &&
        static_cast<int>(days.size()) >= pcfg.min_days;
    if (!confirmed) {
      result.layer.pending.push_back(p);
      continue;
    }
    const ChangeEvent& ev = p.event;
    if (ev.kind == ChangeKind::kAppeared) {
      result.semantic.entries.push_back({ev.position.lat_deg,
                                         ev.position.lon_deg, ev.class_name,
                                         Rgb{0, 0, 0}, *days.begin()});
      ++result.promoted_appearances;
    } else {
      const auto target = nearest_entry(result.semantic, ev.class_name,
                                        horizontal_of(frame, ev.position),
                                        match_radius_r);
      if (!target) {
        result.warnings.push_back("removal of '" + ev.class_name +
                                  "' dropped: entry no longer exists");
        continue;
      }
      result.semantic.entries.erase(result.semantic.entries.begin() +
                                    static_cast<std::ptrdiff_t>(*target));
      ++result.promoted_removals;
    }
  }
  result.layer.base = result.semantic;
  return result;
}

namespace {

json event_json(const ChangeEvent& ev) {
  json obj;
  obj["kind"] = to_string(ev.kind);
  obj["class"] = ev.class_name;
  obj["lat_deg"] = ev.position.lat_deg;
  obj["lon_deg"] = ev.position.lon_deg;
  obj["vehicle_id"] = ev.evidence.vehicle_id;
  obj["date"] = ev.evidence.date;
  obj["nearest_same_class_m"] = ev.distance_to_nearest_same_class
                                    ? json(*ev.distance_to_nearest_same_class)
                                    : json(nullptr);
  return obj;
}

ChangeEvent event_from_json(const json& obj) {
  ChangeEvent ev;
  ev.kind = parse_change_kind(obj.at("kind").get<std::string>());
  ev.class_name = obj.at("class").get<std::string>();
  ev.position.lat_deg = obj.at("lat_deg").get<double>();
  ev.position.lon_deg = obj.at("lon_deg").get<double>();
  ev.position.alt_m = obj.value("alt_m", 0.0);
  validate(ev.position);
  ev.evidence.vehicle_id = obj.at("vehicle_id").get<std::string>();
  ev.evidence.date = obj.at("date").get<std::string>();
  validate_date(ev.evidence.date);
  ev.observation_count = obj.value("observations", 0);
  const auto& nearest = obj.at("nearest_same_class_m");
  if (!nearest.is_null()) ev.distance_to_nearest_same_class = nearest.get<double>();
  return ev;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  const auto lines = split(read_text_file(path), '\n');
  const std::string source = path.filename().string();
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(source, static_cast<int>(i + 1), e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(source, static_cast<int>(i + 1), e.what());
    }
  }
}

}  // namespace

void write_change_report(const std::filesystem::path& path,
                         std::span<const ChangeEvent> events) {
  std::string out;
  for (const auto& ev : events) {
    out += event_json(ev).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<ChangeEvent> read_change_report(const std::filesystem::path& path) {
  std::vector<ChangeEvent> events;
  for_each_json_line(path, [&](const json& obj) {
    events.push_back(event_from_json(obj));
  });
  return events;
}

void write_pending(const std::filesystem::path& path,
                   std::span<const PendingChange> pending) {
  std::string out;
  for (const auto& p : pending) {
    json obj = event_json(p.event);
    obj["alt_m"] = p.event.position.alt_m;
    obj["observations"] = p.event.observation_count;
    obj["log"] = json::array();
    for (const auto& s : p.log) {
      obj["log"].push_back({{"vehicle_id", s.vehicle_id}, {"date", s.date}});
    }
    out += obj.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<PendingChange> read_pending(const std::filesystem::path& path) {
  std::vector<PendingChange> pending;
  for_each_json_line(path, [&](const json& obj) {
    PendingChange p;
    p.event = event_from_json(obj);
    for (const auto& s : obj.at("log")) {
      Sighting sighting{s.at("vehicle_id").get<std::string>(),
                        s.at("date").get<std::string>()};
      validate_date(sighting.date);
      if (std::find(p.log.begin(), p.log.end(), sighting) != p.log.end()) {
        throw ValidationError("duplicate sighting in pending log");
      }
      p.log.push_back(std::move(sighting));
    }
    if (p.log.empty()) throw ValidationError("pending change without sightings");
    pending.push_back(std::move(p));
  });
  return pending;
}

}  // namespace signmap
