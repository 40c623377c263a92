#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "signmap/change.h"
#include "signmap/csv.h"
#include "signmap/georegistration.h"
#include "signmap/metadata.h"
#include "signmap/metrics.h"
#include "signmap/model_io.h"
#include "signmap/pose.h"
#include "signmap/realtime.h"
#include "signmap/semantics.h"
#include "signmap/synth.h"

namespace signmap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Every tunable of the pipeline. Values come from the defaults below, then
// the --config file, then command line flags.
struct PipelineConfig {
  MetadataGenConfig metadata;
  ChangeDetectConfig change;
  double r_assoc = kDefaultAssociationRadius;
  PoseConfig pose;
  std::optional<int> min_vehicles;
  std::optional<int> min_days;
  std::optional<GeodeticCoord> enu_origin;
  std::string date;
  std::string vehicle_id;
  std::set<ClassId> sign_family;
};

template <typename T>
void take(const json& j, const char* key, T* dst) {
  if (j.contains(key)) *dst = j.at(key).get<T>();
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path + ": config must be a JSON object");
  static const std::set<std::string> known = {
      "t_d", "min_support", "score_threshold", "match_radius_r", "gate_min_m",
      "gate_max_m", "r_assoc", "min_track_count", "removal_min_visible_frames",
      "fov_margin_deg", "max_ref_distance", "reanchor_every", "min_vehicles",
      "min_days", "enu_origin", "date", "vehicle_id", "sign_family"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ValidationError(path + ": unknown config key '" + key + "'");
    }
  }
  try {
    take(j, "t_d", &cfg.metadata.t_d);
    take(j, "min_support", &cfg.metadata.min_support);
    take(j, "score_threshold", &cfg.metadata.score_threshold);
    cfg.change.score_threshold = cfg.metadata.score_threshold;
    take(j, "match_radius_r", &cfg.change.match_radius_r);
    take(j, "gate_min_m", &cfg.change.gate.u_min);
    take(j, "gate_max_m", &cfg.change.gate.u_max);
    take(j, "r_assoc", &cfg.r_assoc);
    take(j, "min_track_count", &cfg.change.min_track_count);
    take(j, "removal_min_visible_frames", &cfg.change.removal_min_visible_frames);
    take(j, "fov_margin_deg", &cfg.change.fov_margin_deg);
    take(j, "max_ref_distance", &cfg.pose.max_ref_distance);
    take(j, "reanchor_every", &cfg.pose.reanchor_every);
    if (j.contains("min_vehicles")) cfg.min_vehicles = j.at("min_vehicles").get<int>();
    if (j.contains("min_days")) cfg.min_days = j.at("min_days").get<int>();
    if (j.contains("enu_origin")) {
      const auto& o = j.at("enu_origin");
      cfg.enu_origin = GeodeticCoord{o.at("lat_deg").get<double>(),
                                     o.at("lon_deg").get<double>(),
                                     o.value("alt_m", 0.0)};
    }
    take(j, "date", &cfg.date);
    take(j, "vehicle_id", &cfg.vehicle_id);
    if (j.contains("sign_family")) {
      for (const auto& id : j.at("sign_family")) cfg.sign_family.insert(id.get<ClassId>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return cfg;
}

// Flag values; unset flags leave the config untouched.
struct Overrides {
  std::optional<double> t_d;
  std::optional<int> min_support;
  std::optional<double> score_threshold;
  std::optional<double> match_radius_r;
  std::optional<double> gate_min;
  std::optional<double> gate_max;
  std::optional<double> r_assoc;
  std::optional<int> reanchor_every;
  std::optional<int> min_vehicles;
  std::optional<int> min_days;
  std::optional<std::string> date;
  std::optional<std::string> vehicle_id;
  std::vector<int> sign_family;
};

void apply(const Overrides& o, PipelineConfig* cfg) {
  if (o.t_d) cfg->metadata.t_d = *o.t_d;
  if (o.min_support) cfg->metadata.min_support = *o.min_support;
  if (o.score_threshold) {
    cfg->metadata.score_threshold = *o.score_threshold;
    cfg->change.score_threshold = *o.score_threshold;
  }
  if (o.match_radius_r) cfg->change.match_radius_r = *o.match_radius_r;
  if (o.gate_min) cfg->change.gate.u_min = *o.gate_min;
  if (o.gate_max) cfg->change.gate.u_max = *o.gate_max;
  if (o.r_assoc) cfg->r_assoc = *o.r_assoc;
  if (o.reanchor_every) cfg->pose.reanchor_every = *o.reanchor_every;
  if (o.min_vehicles) cfg->min_vehicles = *o.min_vehicles;
  if (o.min_days) cfg->min_days = *o.min_days;
  if (o.date) cfg->date = *o.date;
  if (o.vehicle_id) cfg->vehicle_id = *o.vehicle_id;
  if (!o.sign_family.empty()) {
    cfg->sign_family.clear();
    for (int id : o.sign_family) {
      if (id < 1 || id > 65535) throw ValidationError("sign family ids must be in [1, 65535]");
      cfg->sign_family.insert(static_cast<ClassId>(id));
    }
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
}

std::string require_date(const PipelineConfig& cfg) {
  if (cfg.date.empty()) throw ValidationError("a --date (YYYY-MM-DD) is required");
  validate_date(cfg.date);
  return cfg.date;
}

Reconstruction load_registered_model(const fs::path& dir,
                                     const PipelineConfig& cfg,
                                     std::ostream& err) {
  std::vector<std::string> warnings;
  Reconstruction r = parse_model(dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  if (cfg.enu_origin) r.enu_origin = cfg.enu_origin;
  if (!r.geo_registered()) {
    throw ValidationError(dir.string() +
                          ": model is not geo-registered (run georegister or set enu_origin)");
  }
  return r;
}

MaskSet load_masks(const fs::path& dir) {
  require_dir(dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  MaskSet masks;
  for (const auto& f : files) {
    const std::string name = f.stem().string();
    masks.emplace(name, read_mask_pgm(f, name));
  }
  return masks;
}

std::string fmt(double v) { return format_double(v); }

json stats_json(const ErrorStats& s) {
  return {{"median", s.median}, {"std_dev", s.std_dev}, {"mean", s.mean}, {"n", s.n}};
}

void write_json(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_poses_csv(const fs::path& path, std::span<const PoseEstimate> poses,
                     const EnuFrame& frame) {
  std::string out = "image_name,lat_deg,lon_deg,alt_m,qw,qx,qy,qz,source\n";
  for (const auto& p : poses) {
    const GeodeticCoord g = frame.unproject(p.center);
    const Eigen::Quaterniond q(p.rotation_wc());
    out += p.image_name + ',' + format_fixed(g.lat_deg, 9) + ',' +
           format_fixed(g.lon_deg, 9) + ',' + format_fixed(g.alt_m, 4) + ',' +
           fmt(q.w()) + ',' + fmt(q.x()) + ',' + fmt(q.y()) + ',' + fmt(q.z()) + ',' +
           (p.source == PoseSource::kRegistered ? "registered" : "propagated") + '\n';
  }
  write_text_file(path, out);
}

std::vector<PoseEstimate> read_poses_csv(const fs::path& path, const EnuFrame& frame) {
  CsvReader csv(path, "image_name,lat_deg,lon_deg,alt_m,qw,qx,qy,qz,source");
  std::vector<PoseEstimate> poses;
  while (csv.next()) {
    if (csv.fields().size() != 9) csv.fail("expected 9 fields");
    PoseEstimate p;
    p.image_name = csv.fields()[0];
    p.center = frame.project({csv.number(1), csv.number(2), csv.number(3)});
    const Eigen::Quaterniond q(csv.number(4), csv.number(5), csv.number(6), csv.number(7));
    p.rotation_cw = q.normalized().toRotationMatrix().transpose();
    const std::string& source = csv.fields()[8];
    if (source != "registered" && source != "propagated") csv.fail("bad pose source");
    p.source = source == "registered" ? PoseSource::kRegistered : PoseSource::kPropagated;
    poses.push_back(std::move(p));
  }
  return poses;
}

void write_tracks_csv(const fs::path& path, std::span<const ObservationTrack> tracks,
                      const EnuFrame& frame) {
  std::string out = "class_name,lat_deg,lon_deg,alt_m,count,first_seen,last_seen\n";
  for (const auto& t : tracks) {
    const GeodeticCoord g = frame.unproject(t.mean_enu);
    out += t.class_name + ',' + format_fixed(g.lat_deg, 9) + ',' +
           format_fixed(g.lon_deg, 9) + ',' + format_fixed(g.alt_m, 4) + ',' +
           std::to_string(t.count) + ',' + t.first_seen + ',' + t.last_seen + '\n';
  }
  write_text_file(path, out);
}

std::vector<TruthChange> read_truth_changes(const fs::path& path) {
  std::vector<TruthChange> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({parse_change_kind(j.at("kind").get<std::string>()),
                     j.at("class").get<std::string>(), j.at("lat_deg").get<double>(),
                     j.at("lon_deg").get<double>()});
    } catch (const json::exception& e) {
      throw ParseError(path.filename().string(), line_no, e.what());
    }
  }
  return out;
}

// Metric frame for stores that carry only lat/lon.
EnuFrame store_frame(const PipelineConfig& cfg, std::span<const MetadataEntry> entries,
                     std::span<const PendingChange> pending = {}) {
  if (cfg.enu_origin) return EnuFrame(*cfg.enu_origin);
  if (!entries.empty()) return EnuFrame({entries[0].lat_deg, entries[0].lon_deg, 0.0});
  if (!pending.empty()) {
    const auto& p = pending[0].event.position;
    return EnuFrame({p.lat_deg, p.lon_deg, 0.0});
  }
  return EnuFrame({0.0, 0.0, 0.0});
}

// --- subcommands ----------------------------------------------------------

struct Io {
  std::ostream& out;
  std::ostream& err;
};

int cmd_georegister(const PipelineConfig&, const fs::path& model_dir,
                    const fs::path& refs_csv, const fs::path& out_dir, Io io) {
  std::vector<std::string> warnings;
  const Reconstruction model = parse_model(model_dir, &warnings);
  for (const auto& w : warnings) io.err << "warning: " << w << '\n';
  const auto refs = read_georegistration_csv(refs_csv);
  const GeoRegistrationResult res = georegister(model, refs);
  ensure_dir(out_dir);
  write_model(res.model, out_dir / "model");
  const Mat3& R = res.transform.rotation;
  json t = {{"scale", res.transform.scale},
            {"rotation", {{R(0, 0), R(0, 1), R(0, 2)},
                          {R(1, 0), R(1, 1), R(1, 2)},
                          {R(2, 0), R(2, 1), R(2, 2)}}},
            {"translation", {res.transform.translation.x(), res.transform.translation.y(),
                             res.transform.translation.z()}},
            {"residual_rms_m", res.residual_rms_m},
            {"enu_origin", {{"lat_deg", res.model.enu_origin->lat_deg},
                            {"lon_deg", res.model.enu_origin->lon_deg},
                            {"alt_m", res.model.enu_origin->alt_m}}},
            {"correspondences", refs.size()}};
  write_json(out_dir / "georegistration.json", t);
  io.out << "georegistered " << model.images.size() << " images, "
         << model.points.size() << " points from " << refs.size()
         << " correspondences; scale " << fmt(res.transform.scale)
         << ", residual rms " << fmt(res.residual_rms_m) << " m\n";
  return 0;
}

int cmd_segment(const PipelineConfig&, const fs::path& model_dir,
                const fs::path& masks_dir, const fs::path& palette_path,
                const fs::path& out_dir, Io io) {
  std::vector<std::string> warnings;
  const Reconstruction model = parse_model(model_dir, &warnings);
  for (const auto& w : warnings) io.err << "warning: " << w << '\n';
  const MaskSet masks = load_masks(masks_dir);
  std::optional<ClassPalette> palette;
  if (!palette_path.empty()) palette = ClassPalette::read(palette_path);
  const PointLabeling labels = segment_point_cloud(model, masks);
  std::string out = "point3d_id,class_id,class_name\n";
  std::map<ClassId, size_t> histogram;
  for (const auto& [id, cls] : labels.labels) {
    ++histogram[cls];
    std::string name;
    if (palette && palette->contains(cls)) name = palette->name_of(cls);
    out += std::to_string(id) + ',' + std::to_string(cls) + ',' + name + '\n';
  }
  ensure_dir(out_dir);
  write_text_file(out_dir / "point_labels.csv", out);
  io.out << "labeled " << labels.labels.size() << " of " << model.points.size()
         << " points from " << labels.observations_used << " observations ("
         << labels.missing_mask_observations << " without mask, "
         << labels.out_of_bounds_observations << " out of bounds)\n";
  for (const auto& [cls, n] : histogram) {
    io.out << "  class " << cls;
    if (palette && palette->contains(cls)) io.out << " (" << palette->name_of(cls) << ")";
    io.out << ": " << n << '\n';
  }
  return 0;
}

int cmd_metadata_gen(const PipelineConfig& cfg, const fs::path& model_dir,
                     const fs::path& detections_path, const fs::path& masks_dir,
                     const fs::path& palette_path, const fs::path& out_dir, Io io) {
  const std::string date = require_date(cfg);
  validate(cfg.metadata);
  const Reconstruction model = load_registered_model(model_dir, cfg, io.err);
  const auto detections = read_detections_jsonl(detections_path);
  const MaskSet masks = load_masks(masks_dir);
  const ClassPalette palette = ClassPalette::read(palette_path);
  if (cfg.sign_family.empty()) {
    throw ValidationError("a sign family (--sign-family ids) is required");
  }
  const ClassMatcher matcher(palette, cfg.sign_family);
  CandidateReport report;
  const MetadataStore store =
      generate_metadata(model, detections, masks, matcher, cfg.metadata, date, &report);
  ensure_dir(out_dir);
  write_metadata(out_dir / "metadata.csv", store.entries);
  io.out << "metadata: " << store.entries.size() << " entries from "
         << report.candidates.size() << " candidates (" << report.detections_seen
         << " detections, " << report.detections_unsupported << " unsupported, "
         << report.images_without_mask << " images without mask)\n";
  return 0;
}

int cmd_labels_gen(const PipelineConfig& cfg, const fs::path& model_dir,
                   const std::vector<std::string>& images, const fs::path& out_dir,
                   Io io) {
  std::vector<std::string> warnings;
  Reconstruction model = parse_model(model_dir, &warnings);
  for (const auto& w : warnings) io.err << "warning: " << w << '\n';
  if (cfg.enu_origin) model.enu_origin = cfg.enu_origin;
  std::vector<const ImageRecord*> selected;
  if (images.empty()) {
    for (const auto& [id, image] : model.images) selected.push_back(&image);
  } else {
    for (const auto& name : images) {
      const ImageRecord* image = model.find_image(name);
      if (!image) throw ValidationError("model has no image named '" + name + "'");
      selected.push_back(image);
    }
  }
  ensure_dir(out_dir);
  size_t labeled = 0;
  for (const ImageRecord* image : selected) {
    const DistanceMap map = generate_sparse_labels(model, *image);
    labeled += map.labeled_count();
    write_distance_map(map, out_dir / (image->name + ".b3dm"));
  }
  io.out << "wrote " << selected.size() << " distance maps, " << labeled
         << " labeled pixels\n";
  return 0;
}

int cmd_detect_changes(const PipelineConfig& cfg, const fs::path& model_dir,
                       const fs::path& metadata_path, const fs::path& drive_dir,
                       const fs::path& pending_path, const fs::path& out_dir, Io io) {
  const std::string date = require_date(cfg);
  if (cfg.vehicle_id.empty()) throw ValidationError("a --vehicle-id is required");
  validate(cfg.change);
  require_dir(drive_dir);
  const Reconstruction model = load_registered_model(model_dir, cfg, io.err);
  if (model.cameras.empty()) throw ValidationError("map model has no cameras");
  const EnuFrame frame = model.enu_frame();

  MetadataStore semantic{read_metadata(metadata_path), frame};
  TemporaryLayer layer = make_temporary_layer(semantic);
  if (!pending_path.empty()) layer.pending = read_pending(pending_path);

  const auto frames = read_frame_times(drive_dir / "frames.csv");
  const auto gps = read_gps_trace(drive_dir / "gps.csv");
  if (gps.empty()) throw ValidationError("gps.csv has no samples");
  std::map<std::string, CameraPose> registered;
  if (fs::exists(drive_dir / "registered_poses.csv")) {
    registered = read_registered_poses(drive_dir / "registered_poses.csv");
  }
  std::map<std::string, DetectionSet> detections;
  for (auto& set : read_detections_jsonl(drive_dir / "detections.jsonl")) {
    const std::string name = set.image_name;
    detections[name] = std::move(set);
  }
  const fs::path dmap_dir = drive_dir / "distance_maps";
  const DistanceMapSource source = [&](const std::string& name) {
    return read_distance_map(dmap_dir / (name + ".b3dm"), name);
  };

  TraversalConfig tcfg;
  tcfg.gate = cfg.change.gate;
  tcfg.r_assoc = cfg.r_assoc;
  tcfg.score_threshold = cfg.change.score_threshold;
  tcfg.pose = cfg.pose;
  const TraversalResult trav =
      run_traversal(model, frames, gps, detections, registered, source, tcfg, date);

  const CameraIntrinsics& intrinsics = model.cameras.begin()->second;
  auto events = detect_appearances(trav.tracks, layer, cfg.change, cfg.vehicle_id, date);
  const auto removals = detect_removals(trav.tracks, layer, trav.poses, intrinsics,
                                        cfg.change, cfg.vehicle_id, date);
  events.insert(events.end(), removals.begin(), removals.end());
  const TemporaryLayer updated = apply_to_temporary(layer, events, cfg.vehicle_id, date,
                                                    cfg.change.match_radius_r);

  ensure_dir(out_dir);
  write_change_report(out_dir / "changes.jsonl", events);
  write_pending(out_dir / "pending.jsonl", updated.pending);
  write_poses_csv(out_dir / "poses.csv", trav.poses, frame);
  write_tracks_csv(out_dir / "tracks.csv", trav.tracks, frame);

  io.out << "traversal: " << trav.poses.size() << " frames, " << trav.detections_seen
         << " detections (" << trav.detections_gated << " gated, "
         << trav.detections_unlocated << " unlocated), " << trav.tracks.size()
         << " tracks, " << trav.anchors_missed << " missed anchors\n";
  io.out << "changes: " << events.size() - removals.size() << " appeared, "
         << removals.size() << " removed; " << updated.pending.size()
         << " pending in temporary layer\n";
  return 0;
}

int cmd_promote(const PipelineConfig& cfg, const fs::path& metadata_path,
                const fs::path& pending_path, const fs::path& out_dir, Io io) {
  if (!cfg.min_vehicles || !cfg.min_days) {
    throw ValidationError("promote requires --min-vehicles and --min-days");
  }
  const PermanenceConfig pcfg{*cfg.min_vehicles, *cfg.min_days};
  validate(pcfg);
  auto entries = read_metadata(metadata_path);
  auto pending = read_pending(pending_path);
  const EnuFrame frame = store_frame(cfg, entries, pending);
  MetadataStore semantic{std::move(entries), frame};
  TemporaryLayer layer = make_temporary_layer(semantic);
  layer.pending = std::move(pending);
  const PromotionResult res =
      promote_permanent(layer, pcfg, semantic, cfg.change.match_radius_r);
  for (const auto& w : res.warnings) io.err << "warning: " << w << '\n';
  ensure_dir(out_dir);
  write_metadata(out_dir / "metadata.csv", res.semantic.entries);
  write_pending(out_dir / "pending.jsonl", res.layer.pending);
  io.out << "promoted " << res.promoted_appearances << " appearances and "
         << res.promoted_removals << " removals; " << res.semantic.entries.size()
         << " entries, " << res.layer.pending.size() << " still pending\n";
  return 0;
}

int cmd_eval(const PipelineConfig& cfg, const std::string& kind,
             const std::vector<std::string>& inputs, double radius,
             const fs::path& out_dir, Io io) {
  auto need = [&](size_t n) {
    if (inputs.size() != n) {
      throw ValidationError("eval --kind " + kind + " takes " + std::to_string(n) +
                            " input paths, got " + std::to_string(inputs.size()));
    }
  };
  json report = {{"kind", kind}};
  std::string csv;

  if (kind == "pose") {
    need(2);
    const auto reference = read_gps_trace(inputs[1]);
    if (reference.empty()) throw ValidationError("reference trace is empty");
    const EnuFrame frame(cfg.enu_origin ? *cfg.enu_origin : reference.front().coord);
    const auto estimates = read_poses_csv(inputs[0], frame);
    if (estimates.empty()) throw ValidationError("no pose estimates");
    const auto errors = pose_errors(estimates, reference, frame);
    report["stats"] = stats_json(summarize(errors));
    csv = "image_name,error_m\n";
    for (size_t i = 0; i < errors.size(); ++i) {
      csv += estimates[i].image_name + ',' + fmt(errors[i]) + '\n';
    }
    io.out << "pose error: median " << fmt(report["stats"]["median"].get<double>())
           << " m over " << errors.size() << " estimates\n";
  } else if (kind == "localization") {
    need(2);
    const auto pred = read_metadata(inputs[0]);
    const auto truth = read_metadata(inputs[1]);
    const EnuFrame frame = store_frame(cfg, truth.empty() ? pred : truth);
    const LocalizationEval ev = localization_error_stats(pred, truth, frame, radius);
    report["stats"] = stats_json(ev.stats);
    report["matched"] = ev.matches.size();
    report["unmatched_pred"] = ev.unmatched_pred;
    report["unmatched_truth"] = ev.unmatched_truth;
    csv = "pred_index,truth_index,class_name,error_m\n";
    for (size_t i = 0; i < ev.matches.size(); ++i) {
      const auto [p, t] = ev.matches[i];
      csv += std::to_string(p) + ',' + std::to_string(t) + ',' + pred[p].class_name + ',' +
             fmt(ev.distances[i]) + '\n';
    }
    io.out << "localization: " << ev.matches.size() << " of " << truth.size()
           << " truth entries matched, median " << fmt(ev.stats.median) << " m, "
           << ev.unmatched_pred.size() << " unmatched predictions\n";
  } else if (kind == "changes") {
    need(3);
    const auto reported = read_change_report(inputs[0]);
    const auto truth_changes = read_truth_changes(inputs[1]);
    const auto unchanged = read_metadata(inputs[2]);
    const EnuFrame frame = store_frame(cfg, unchanged);
    const ConfusionMatrix cm =
        change_confusion(reported, truth_changes, unchanged, frame, radius);
    report["confusion"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
    report["accuracy"] = cm.accuracy();
    csv = "kind,class,lat_deg,lon_deg\n";
    for (const auto& e : reported) {
      csv += to_string(e.kind) + ',' + e.class_name + ',' +
             format_fixed(e.position.lat_deg, 9) + ',' +
             format_fixed(e.position.lon_deg, 9) + '\n';
    }
    io.out << "changes: tp " << cm.tp << " fp " << cm.fp << " fn " << cm.fn << " tn "
           << cm.tn << ", accuracy " << fmt(cm.accuracy()) << '\n';
  } else if (kind == "pixels") {
    need(2);
    const fs::path pred_dir = inputs[0];
    const fs::path gt_dir = inputs[1];
    require_dir(pred_dir);
    require_dir(gt_dir);
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".b3dm") {
        gt_files.push_back(entry.path());
      }
    }
    std::sort(gt_files.begin(), gt_files.end());
    std::vector<DistanceMap> preds, gts;
    for (const auto& f : gt_files) {
      const std::string name = f.stem().string();
      gts.push_back(read_distance_map(f, name));
      preds.push_back(read_distance_map(pred_dir / f.filename(), name));
    }
    std::vector<std::pair<const DistanceMap*, const DistanceMap*>> pairs;
    csv = "image_name,channel,abs_error,rel_error,n\n";
    static const char* kChannels[] = {"lateral", "height", "depth"};
    for (size_t i = 0; i < gts.size(); ++i) {
      pairs.emplace_back(&preds[i], &gts[i]);
      const PixelErrors one = pixel_errors(preds[i], gts[i]);
      for (int c = 0; c < 3; ++c) {
        csv += gts[i].image_name + ',' + kChannels[c] + ',' +
               fmt(one.channel[c].abs_error) + ',' + fmt(one.channel[c].rel_error) + ',' +
               std::to_string(one.channel[c].n) + '\n';
      }
    }
    const PixelErrors all = pixel_errors(pairs);
    for (int c = 0; c < 3; ++c) {
      report[kChannels[c]] = {{"abs_error", all.channel[c].abs_error},
                              {"rel_error", all.channel[c].rel_error},
                              {"n", all.channel[c].n},
                              {"zero_gt_excluded", all.channel[c].zero_gt_excluded}};
    }
    report["missing_predictions"] = all.missing_predictions;
    report["images"] = gts.size();
    io.out << "pixels: " << gts.size() << " images, depth abs "
           << fmt(all.depth().abs_error) << " m, rel " << fmt(all.depth().rel_error) << '\n';
  } else {
    throw ValidationError("unknown eval kind '" + kind +
                          "' (expected pose, localization, changes or pixels)");
  }
  ensure_dir(out_dir);
  write_json(out_dir / "eval.json", report);
  write_text_file(out_dir / "errors.csv", csv);
  return 0;
}

int cmd_simulate(const std::optional<std::uint64_t>& seed, const std::string& scene_path,
                 const std::string& scenario, const fs::path& out_dir, Io io) {
  SyntheticScene scene;
  const std::uint64_t s = seed.value_or(1);
  if (!scene_path.empty()) {
    scene = read_scene_json(scene_path);
    if (seed) scene.seed = *seed;
  } else if (scenario == "residential") {
    scene = residential_scenario(s);
  } else if (scenario == "campus") {
    scene = campus_scenario(s);
  } else if (scenario == "road") {
    RoadSceneOptions opts;
    opts.seed = s;
    scene = make_road_scene(opts);
  } else {
    throw ValidationError("simulate needs a scene file or --scenario residential|campus|road");
  }
  const SceneRenderer renderer(std::move(scene));
  for (const auto& w : renderer.warnings()) io.err << "warning: " << w << '\n';
  ensure_dir(out_dir);
  renderer.write_bundle(out_dir);
  io.out << "rendered " << renderer.scene().signs.size() << " signs, "
         << renderer.map_frame_count() << " mapping frames, "
         << renderer.drive_frame_count() << " drive frames, "
         << renderer.drive_scene().signs.size() << " signs on the drive\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  return run_cli(argc, argv, std::cout, std::cerr);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic traffic-sign map builder and updater", "signmap"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  Overrides ov;

  auto common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Random seed (u64)");
    auto* o = sub->add_option("--out", out_dir, "Output directory");
    if (needs_out) o->required();
  };
  auto thresholds = [&](CLI::App* sub) {
    sub->add_option("--score-threshold", ov.score_threshold,
                    "Minimum detection score (default 0.4)");
    sub->add_option("--date", ov.date, "Observation date YYYY-MM-DD");
  };

  std::string a, b, c, d;
  std::string palette;
  std::vector<std::string> images;

  auto* geo = app.add_subcommand("georegister", "Align a sparse model with WGS84 references");
  geo->add_option("model", a, "Model directory")->required();
  geo->add_option("references", b, "Geo-registration CSV")->required();
  common(geo);

  auto* seg = app.add_subcommand("segment", "Label model points from segmentation masks");
  seg->add_option("model", a, "Model directory")->required();
  seg->add_option("masks", b, "Directory of <image>.pgm masks")->required();
  seg->add_option("--palette", palette, "Class palette (id<TAB>name)");
  common(seg);

  auto* meta = app.add_subcommand("metadata-gen", "Generate the semantic metadata layer");
  meta->add_option("model", a, "Geo-registered model directory")->required();
  meta->add_option("detections", b, "Detections JSONL")->required();
  meta->add_option("masks", c, "Directory of <image>.pgm masks")->required();
  meta->add_option("--palette", palette, "Class palette (id<TAB>name)")->required();
  meta->add_option("--sign-family", ov.sign_family, "Mask class ids counted as sign pixels");
  meta->add_option("--t-d", ov.t_d, "Same-class clustering distance, m (default 5)");
  meta->add_option("--min-support", ov.min_support, "Keypoints needed per detection (default 3)");
  thresholds(meta);
  common(meta);

  auto* labels = app.add_subcommand("labels-gen", "Write sparse distance-map labels");
  labels->add_option("model", a, "Model directory")->required();
  labels->add_option("--image", images, "Restrict to these image names");
  common(labels);

  auto* detect = app.add_subcommand("detect-changes", "Detect map changes from one drive");
  detect->add_option("model", a, "Geo-registered map model directory")->required();
  detect->add_option("metadata", b, "Semantic layer CSV")->required();
  detect->add_option("drive", c, "Drive directory")->required();
  detect->add_option("--pending", d, "Pending events JSONL of the temporary layer");
  detect->add_option("--vehicle-id", ov.vehicle_id, "Vehicle identifier");
  detect->add_option("--match-radius", ov.match_radius_r, "Match radius R, m (default 20)");
  detect->add_option("--gate-min", ov.gate_min, "Range gate minimum, m (default 3)");
  detect->add_option("--gate-max", ov.gate_max, "Range gate maximum, m (default 50)");
  detect->add_option("--r-assoc", ov.r_assoc, "Track association radius, m (default 10)");
  detect->add_option("--reanchor-every", ov.reanchor_every,
                     "Frames between registered poses (default 30)");
  thresholds(detect);
  common(detect);

  auto* promote = app.add_subcommand("promote", "Promote confirmed changes to the map");
  promote->add_option("metadata", a, "Semantic layer CSV")->required();
  promote->add_option("pending", b, "Pending events JSONL")->required();
  promote->add_option("--min-vehicles", ov.min_vehicles, "Distinct vehicles required");
  promote->add_option("--min-days", ov.min_days, "Distinct days required");
  promote->add_option("--match-radius", ov.match_radius_r, "Match radius R, m (default 20)");
  common(promote);

  std::string kind;
  std::vector<std::string> inputs;
  double radius = 20.0;
  auto* eval = app.add_subcommand("eval", "Evaluate outputs against references");
  eval->add_option("--kind", kind, "pose | localization | changes | pixels")->required();
  eval->add_option("inputs", inputs, "Input paths (depend on --kind)")->required();
  eval->add_option("--radius", radius, "Match radius, m (default 20)");
  common(eval);

  std::string scenario;
  auto* sim = app.add_subcommand("simulate", "Render a synthetic input bundle");
  sim->add_option("scene", a, "Scene JSON file");
  sim->add_option("--scenario", scenario, "Built-in scene: residential | campus | road");
  common(sim);

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands()[0];
    err << sub->help();
    return 1;
  }

  const Io io{out, err};
  try {
    PipelineConfig cfg = load_config(config_path);
    apply(ov, &cfg);
    const fs::path o = out_dir;
    if (geo->parsed()) return cmd_georegister(cfg, a, b, o, io);
    if (seg->parsed()) return cmd_segment(cfg, a, b, palette, o, io);
    if (meta->parsed()) return cmd_metadata_gen(cfg, a, b, c, palette, o, io);
    if (labels->parsed()) return cmd_labels_gen(cfg, a, images, o, io);
    if (detect->parsed()) return cmd_detect_changes(cfg, a, b, c, d, o, io);
    if (promote->parsed()) return cmd_promote(cfg, a, b, o, io);
    if (eval->parsed()) return cmd_eval(cfg, kind, inputs, radius, o, io);
    if (sim->parsed()) return cmd_simulate(seed, a, scenario, o, io);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace signmap
