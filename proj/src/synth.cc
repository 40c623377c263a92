#include "signmap/synth.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include <json.hpp>

#include "signmap/csv.h"
#include "signmap/model_io.h"

namespace signmap {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNearPlane = 1.0;           // m, closest rendered depth
constexpr double kBackgroundExtraRange = 20.0;
constexpr Rgb kSignColor{220, 30, 30};

// RNG streams.
enum Stream : std::uint64_t {
  kModelTransform = 1,
  kKeypointNoise,
  kDropoutMap,
  kDropoutDrive,
  kGpsNoise,
  kDistanceNoise,
  kPoseJitter,
  kBackgroundLayout,
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Mat3 yaw_rotation(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 vehicle_to_world(const Eigen::Vector2d& heading) {
  return yaw_rotation(std::atan2(heading.y(), heading.x()));
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Convex quadrilateral test, corners in order.
bool inside_quad(const std::array<Eigen::Vector2d, 4>& q, double x, double y) {
  const Eigen::Vector2d p(x, y);
  int positive = 0;
  int negative = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross2(q[(i + 1) % 4] - q[i], p - q[i]);
    if (c > 0) ++positive;
    if (c < 0) ++negative;
  }
  return positive == 0 || negative == 0;
}

bool boxes_overlap(const BoundingBox& a, const BoundingBox& b) {
  return a.xmin <= b.xmax && b.xmin <= a.xmax && a.ymin <= b.ymax &&
         b.ymin <= a.ymax;
}

std::int64_t pixel_key(int x, int y) {
  return (static_cast<std::int64_t>(y) << 32) | static_cast<std::uint32_t>(x);
}

int grid_side(int face_points) {
  const int k = static_cast<int>(std::lround(std::sqrt(face_points)));
  if (k * k != face_points || k % 2 == 0 || k < 3) {
    throw ValidationError("face_points must be an odd square >= 9, got " +
                          std::to_string(face_points));
  }
  return k;
}

std::string frame_name(const std::string& prefix, size_t index) {
  std::string digits = std::to_string(index + 1);
  digits.insert(0, 6 - std::min<size_t>(6, digits.size()), '0');
  return prefix + digits + ".jpg";
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-9) v = Vec3(n(rng), n(rng), n(rng));
  return v.normalized();
}

const std::vector<std::string>& default_classes() {
  static const std::vector<std::string> classes = {
      "regulatory--no-parking--g1",
      "regulatory--roundabout--g1",
      "regulatory--turn-right--g1",
      "regulatory--no-stopping--g1",
      "information--parking--g1",
      "warning--roadworks--g1",
      "regulatory--stop--g1",
      "regulatory--keep-left--g1",
      "warning--t-roads--g1",
      "regulatory--keep-right--g1",
      "information--pedestrians-crossing--g1",
      "shared-path-pedestrians-and-bicycles--g1",
      "information--dead-end-except-bicycles--g1",
      "complementary--obstacle-delineator--g2",
      "complementary--one-direction-right--g1",
      "regulatory--pass-on-either-side--g1",
      "regulatory--maximum-speed-limit-40--g1",
      "regulatory--maximum-speed-limit-30--g1",
      "regulatory--end-of-maximum-speed-limit-40--g1",
      "regulatory--no-pedestrians-or-bicycles--g2",
      "junction-with-a-side-road-perpendicular-right--g1",
      "regulatory--no-motor-vehicles--g6",
  };
  return classes;
}

}  // namespace

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return std::mt19937_64(h);
}

void validate(const NoiseConfig& noise) {
  if (!(noise.gps_sigma >= 0.0 && noise.distance_map_rel_sigma >= 0.0 &&
        noise.keypoint_sigma >= 0.0 && noise.pose_jitter_deg >= 0.0)) {
    throw ValidationError("noise magnitudes must be >= 0");
  }
  if (!(noise.detection_dropout >= 0.0 && noise.detection_dropout <= 1.0)) {
    throw ValidationError("detection dropout must be in [0, 1]");
  }
}

Mat3 SyntheticScene::default_mount() {
  // Camera x right, y down, z forward in vehicle axes.
  Mat3 m;
  m << 0.0, 0.0, 1.0,
       -1.0, 0.0, 0.0,
       0.0, -1.0, 0.0;
  return m;
}

void validate(const SyntheticScene& scene) {
  validate(scene.origin);
  validate(scene.intrinsics);
  validate(scene.noise);
  for (const Mat3* m : {&scene.mount, &scene.drive_mount}) {
    if ((*m * m->transpose() - Mat3::Identity()).norm() > 1e-9 ||
        m->determinant() < 0.0) {
      throw ValidationError("camera mount must be a rotation");
    }
  }
  if (scene.trajectory.empty()) throw ValidationError("scene has no trajectory");
  for (const auto& p : scene.trajectory) {
    if (!p.position.allFinite() || std::abs(p.heading.norm() - 1.0) > 1e-9) {
      throw ValidationError("trajectory headings must be unit vectors");
    }
  }
  for (const auto& s : scene.signs) {
    grid_side(s.face_points);
    if (s.class_name.empty() || !s.position.allFinite() ||
        std::abs(s.facing.norm() - 1.0) > 1e-9) {
      throw ValidationError("invalid sign '" + s.class_name + "'");
    }
  }
  if (!(scene.sign_size > 0.0) || !(scene.max_range > 0.0) ||
      !(scene.frame_dt > 0.0) || scene.reanchor_every < 1) {
    throw ValidationError("scene sizes, range, frame_dt and cadence must be positive");
  }
  validate_date(scene.map_date);
  validate_date(scene.drive_date);
}

std::vector<Vec3> sign_face_points(const SyntheticSign& sign, double size) {
  const int k = grid_side(sign.face_points);
  const Vec3 normal(sign.facing.x(), sign.facing.y(), 0.0);
  const Vec3 up = Vec3::UnitZ();
  const Vec3 right = up.cross(normal);
  const double spacing = size / (k - 1);
  const double half = (k - 1) / 2.0;
  std::vector<Vec3> points;
  points.reserve(static_cast<size_t>(k) * k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      points.push_back(sign.position + (c - half) * spacing * right +
                       (half - r) * spacing * up);
    }
  }
  return points;
}

CameraPose truth_pose(const SyntheticScene& scene, size_t frame,
                      const Mat3& mount) {
  const TrajectoryPose& p = scene.trajectory.at(frame);
  const Mat3 rotation_cw = vehicle_to_world(p.heading) * mount;
  return CameraPose::from_center(rotation_cw.transpose(), p.position);
}

SyntheticScene mutate_scene(const SyntheticScene& scene,
                            const std::vector<SceneEdit>& script) {
  SyntheticScene out = scene;
  for (const SceneEdit& edit : script) {
    if (edit.op == SceneEdit::Op::kRemove) {
      auto best = out.signs.end();
      double best_dist = 1.0;
      for (auto it = out.signs.begin(); it != out.signs.end(); ++it) {
        if (it->class_name != edit.class_name) continue;
        const double d = (it->position - edit.position).norm();
        if (d <= best_dist) {
          best = it;
          best_dist = d;
        }
      }
      if (best == out.signs.end()) {
        throw ValidationError("no '" + edit.class_name +
                              "' sign within 1 m of the removal position");
      }
      out.signs.erase(best);
    } else {
      SyntheticSign sign;
      sign.class_name = edit.class_name;
      sign.position = edit.position;
      const TrajectoryPose* nearest = nullptr;
      for (const auto& p : out.trajectory) {
        if (!nearest || (p.position - edit.position).squaredNorm() <
                            (nearest->position - edit.position).squaredNorm()) {
          nearest = &p;
        }
      }
      if (nearest) sign.facing = -nearest->heading;
      out.signs.push_back(std::move(sign));
    }
  }
  return out;
}

SyntheticScene make_road_scene(const RoadSceneOptions& opts) {
  if (opts.num_signs < 0 || !(opts.sign_spacing > 0.0) ||
      !(opts.frame_spacing > 0.0)) {
    throw ValidationError("invalid road scene options");
  }
  const auto& classes = opts.classes.empty() ? default_classes() : opts.classes;
  SyntheticScene scene;
  scene.seed = opts.seed;

  constexpr double kMargin = 40.0;
  constexpr double kPeriod = 300.0;
  constexpr double kStep = 0.05;
  const double length =
      2.0 * kMargin + std::max(0, opts.num_signs - 1) * opts.sign_spacing;

  auto heading_angle = [&](double s) {
    return opts.curvature * kPeriod / (2.0 * std::numbers::pi) *
           (1.0 - std::cos(2.0 * std::numbers::pi * s / kPeriod));
  };
  // Arc-length integration of the centerline (camera height, z = 0).
  std::vector<Eigen::Vector2d> samples{{0.0, 0.0}};
  const int steps = static_cast<int>(std::ceil(length / kStep));
  for (int i = 0; i < steps; ++i) {
    const double mid = (i + 0.5) * kStep;
    const double a = heading_angle(mid);
    samples.push_back(samples.back() + kStep * Eigen::Vector2d(std::cos(a), std::sin(a)));
  }
  auto at = [&](double s, Vec3* pos, Eigen::Vector2d* heading) {
    const size_t i = std::min(samples.size() - 1,
                              static_cast<size_t>(std::lround(s / kStep)));
    const double a = heading_angle(s);
    *pos = Vec3(samples[i].x(), samples[i].y(), 0.0);
    *heading = Eigen::Vector2d(std::cos(a), std::sin(a));
  };

  for (double s = 0.0; s <= length + 1e-9; s += opts.frame_spacing) {
    TrajectoryPose p;
    at(s, &p.position, &p.heading);
    scene.trajectory.push_back(p);
  }

  for (int k = 0; k < opts.num_signs; ++k) {
    const double s = kMargin + k * opts.sign_spacing;
    Vec3 pos;
    Eigen::Vector2d heading;
    at(s, &pos, &heading);
    const Eigen::Vector2d left(-heading.y(), heading.x());
    const double side = k % 2 == 0 ? -1.0 : 1.0;  // right side first
    SyntheticSign sign;
    sign.class_name = classes[static_cast<size_t>(k) % classes.size()];
    sign.position = pos + Vec3(side * opts.lateral_offset * left.x(),
                               side * opts.lateral_offset * left.y(), 0.7);
    sign.facing = -heading;
    scene.signs.push_back(sign);
  }

  auto rng = keyed_rng(opts.seed, kBackgroundLayout);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (double s = 0.0; s <= length; s += 3.0) {
    Vec3 pos;
    Eigen::Vector2d heading;
    at(s, &pos, &heading);
    const Eigen::Vector2d left(-heading.y(), heading.x());
    for (const double side : {-1.0, 1.0}) {
      for (const double z : {-1.0, 1.5, 4.0}) {
        const double lateral = 12.0 + jitter(rng);
        scene.background.push_back(pos + Vec3(side * lateral * left.x(),
                                              side * lateral * left.y(),
                                              z + jitter(rng)));
      }
    }
  }
  return scene;
}

SyntheticScene residential_scenario(std::uint64_t seed, int num_signs,
                                    int num_removed) {
  RoadSceneOptions opts;
  opts.seed = seed;
  opts.num_signs = num_signs;
  opts.sign_spacing = 30.0;
  SyntheticScene scene = make_road_scene(opts);
  for (int k = 0; k < num_removed; ++k) {
    const auto& sign = scene.signs.at(static_cast<size_t>(2 * k + 1));
    scene.drive_changes.push_back(
        {SceneEdit::Op::kRemove, sign.class_name, sign.position});
  }
  return scene;
}

SyntheticScene campus_scenario(std::uint64_t seed) {
  RoadSceneOptions opts;
  opts.seed = seed;
  opts.num_signs = 20;
  SyntheticScene scene = make_road_scene(opts);
  // Missed while mapping: these show up as appearances on the drive.
  scene.signs[4].map_detectable = false;
  scene.signs[11].map_detectable = false;
  // Missed on the drive: reported as a removal.
  scene.signs[15].drive_detectable = false;
  return scene;
}

// --- rendering ------------------------------------------------------------

SceneRenderer::SceneRenderer(SyntheticScene scene) : scene_(std::move(scene)) {
  validate(scene_);
  palette_.add(kBuildingClass, "building");
  palette_.add(kSignClass, "traffic-sign");
  drive_scene_ = mutate_scene(scene_, scene_.drive_changes);
  build_model();
  build_drive();
}

std::string SceneRenderer::map_image_name(size_t frame) const {
  return frame_name("map_", frame);
}

std::string SceneRenderer::drive_image_name(size_t frame) const {
  return frame_name("drive_", frame);
}

std::vector<SceneRenderer::FrameRender> SceneRenderer::render_drive(
    const SyntheticScene& scene, const Mat3& mount, bool mapping) const {
  const CameraIntrinsics& cam = scene.intrinsics;
  std::vector<std::vector<Vec3>> faces;
  for (const auto& sign : scene.signs) {
    faces.push_back(sign_face_points(sign, scene.sign_size));
  }

  std::vector<FrameRender> frames;
  frames.reserve(scene.trajectory.size());
  for (size_t f = 0; f < scene.trajectory.size(); ++f) {
    FrameRender frame;
    frame.pose = truth_pose(scene, f, mount);
    const Vec3 center = scene.trajectory[f].position;

    std::vector<ProjectedSign> visible;
    for (size_t s = 0; s < scene.signs.size(); ++s) {
      const SyntheticSign& sign = scene.signs[s];
      const Vec3 to_camera = center - sign.position;
      if (sign.facing.dot(to_camera.head<2>()) <= 0.0) continue;
      const double distance = to_camera.norm();
      if (distance > scene.max_range) continue;
      ProjectedSign ps;
      ps.sign = s;
      ps.distance = distance;
      bool all_in = true;
      for (const Vec3& p : faces[s]) {
        const auto uv = project_point(cam, frame.pose, p);
        if (!uv || frame.pose.to_camera(p).z() < kNearPlane) {
          all_in = false;
          break;
        }
        ps.points.push_back(*uv);
      }
      if (!all_in) continue;
      const int k = grid_side(sign.face_points);
      ps.corners = {ps.points[0], ps.points[k - 1], ps.points[k * k - 1],
                    ps.points[(k - 1) * k]};
      const Eigen::Vector2d c = ps.points[(k * k) / 2];
      double hw = 0.0, hh = 0.0;
      for (const auto& corner : ps.corners) {
        hw = std::max(hw, std::abs(corner.x() - c.x()));
        hh = std::max(hh, std::abs(corner.y() - c.y()));
      }
      // Pad so rounding never leaves a corner point outside the box.
      hw += 1e-6;
      hh += 1e-6;
      ps.bbox = {c.x() - hw, c.y() - hh, c.x() + hw, c.y() + hh};
      visible.push_back(std::move(ps));
    }

    // Nearer signs hide farther ones whose boxes overlap theirs.
    std::sort(visible.begin(), visible.end(),
              [](const ProjectedSign& a, const ProjectedSign& b) {
                return a.distance < b.distance ||
                       (a.distance == b.distance && a.sign < b.sign);
              });
    for (auto& ps : visible) {
      const bool hidden = std::any_of(
          frame.signs.begin(), frame.signs.end(),
          [&](const ProjectedSign& kept) { return boxes_overlap(kept.bbox, ps.bbox); });
      if (!hidden) frame.signs.push_back(std::move(ps));
    }
    std::sort(frame.signs.begin(), frame.signs.end(),
              [](const ProjectedSign& a, const ProjectedSign& b) { return a.sign < b.sign; });

    std::unordered_set<std::int64_t> sign_pixels;
    const bool noisy = mapping && scene.noise.keypoint_sigma > 0.0;
    for (const auto& ps : frame.signs) {
      auto rng = keyed_rng(scene.seed, kKeypointNoise, f, ps.sign);
      std::normal_distribution<double> noise(0.0, noisy ? scene.noise.keypoint_sigma : 1.0);
      for (size_t j = 0; j < ps.points.size(); ++j) {
        Eigen::Vector2d xy = ps.points[j];
        if (noisy) xy += Eigen::Vector2d(noise(rng), noise(rng));
        const auto px = pixel_of(xy.x(), xy.y(), cam.width, cam.height);
        if (!px) continue;
        sign_pixels.insert(pixel_key(px->first, px->second));
        frame.keypoints.push_back({xy, faces[ps.sign][j], true, ps.sign, j});
      }
    }

    auto in_sign_region = [&](int x, int y) {
      if (sign_pixels.contains(pixel_key(x, y))) return true;
      for (const auto& ps : frame.signs) {
        if (x < ps.bbox.xmin - 1 || x > ps.bbox.xmax + 1 ||
            y < ps.bbox.ymin - 1 || y > ps.bbox.ymax + 1) {
          continue;
        }
        if (inside_quad(ps.corners, x, y)) return true;
      }
      return false;
    };

    auto bg_rng = keyed_rng(scene.seed, kKeypointNoise, f, ~std::uint64_t{0});
    std::normal_distribution<double> bg_noise(0.0, noisy ? scene.noise.keypoint_sigma : 1.0);
    for (size_t b = 0; b < scene.background.size(); ++b) {
      const Vec3& p = scene.background[b];
      const Vec3 x = frame.pose.to_camera(p);
      if (x.z() < kNearPlane || x.norm() > scene.max_range + kBackgroundExtraRange) {
        continue;
      }
      const auto uv = project_point(cam, frame.pose, p);
      if (!uv) continue;
      Eigen::Vector2d xy = *uv;
      if (noisy) xy += Eigen::Vector2d(bg_noise(bg_rng), bg_noise(bg_rng));
      const auto px = pixel_of(xy.x(), xy.y(), cam.width, cam.height);
      if (!px || in_sign_region(px->first, px->second)) continue;
      frame.keypoints.push_back({xy, p, false, b, 0});
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

void SceneRenderer::build_model() {
  map_frames_ = render_drive(scene_, scene_.mount, true);

  {
    auto rng = keyed_rng(scene_.seed, kModelTransform);
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    std::uniform_real_distribution<double> offset(-100.0, 100.0);
    std::normal_distribution<double> n(0.0, 1.0);
    model_from_enu_.scale = scale(rng);
    model_from_enu_.rotation =
        Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    model_from_enu_.translation = Vec3(offset(rng), offset(rng), offset(rng));
  }
  const SimilarityTransform& g = model_from_enu_;

  model_.cameras[scene_.intrinsics.camera_id] = scene_.intrinsics;

  // Observation lists keyed by (is_sign, owner, face_index).
  using Key = std::tuple<bool, size_t, size_t>;
  std::map<Key, std::vector<TrackElement>> observations;
  for (size_t f = 0; f < map_frames_.size(); ++f) {
    const auto& kps = map_frames_[f].keypoints;
    for (size_t k = 0; k < kps.size(); ++k) {
      const auto& kp = kps[k];
      if (kp.is_sign && !scene_.signs[kp.owner].triangulated) continue;
      observations[{kp.is_sign, kp.owner, kp.face_index}].push_back(
          {static_cast<ImageId>(f + 1), static_cast<std::uint32_t>(k)});
    }
  }
  std::map<Key, Point3dId> ids;
  Point3dId next_id = 1;
  for (const auto& [key, obs] : observations) {
    if (obs.size() >= 2) ids[key] = next_id++;
  }

  std::normal_distribution<double> jitter(0.0, scene_.noise.pose_jitter_deg * kDegToRad);
  for (size_t f = 0; f < map_frames_.size(); ++f) {
    const FrameRender& frame = map_frames_[f];
    ImageRecord image;
    image.image_id = static_cast<ImageId>(f + 1);
    image.name = map_image_name(f);
    image.camera_id = scene_.intrinsics.camera_id;
    Mat3 rotation = frame.pose.rotation_matrix() * g.rotation.transpose();
    if (scene_.noise.pose_jitter_deg > 0.0) {
      auto rng = keyed_rng(scene_.seed, kPoseJitter, f);
      const Vec3 axis = random_unit(rng);
      rotation = Eigen::AngleAxisd(jitter(rng), axis).toRotationMatrix() * rotation;
    }
    image.pose = CameraPose::from_center(
        rotation, g.apply(camera_center(frame.pose)));
    for (const auto& kp : frame.keypoints) {
      Keypoint out{kp.xy.x(), kp.xy.y(), std::nullopt};
      const auto it = ids.find({kp.is_sign, kp.owner, kp.face_index});
      if (it != ids.end() &&
          !(kp.is_sign && !scene_.signs[kp.owner].triangulated)) {
        out.point3d_id = it->second;
      }
      image.keypoints.push_back(out);
    }
    model_.images[image.image_id] = std::move(image);
  }

  for (const auto& [key, id] : ids) {
    const auto& [is_sign, owner, face] = key;
    ScenePoint point;
    point.point3d_id = id;
    const auto& obs = observations.at(key);
    const FrameKeypoint& first =
        map_frames_[static_cast<size_t>(obs.front().image_id - 1)]
            .keypoints[obs.front().keypoint_index];
    point.xyz = g.apply(first.world);
    point.rgb = is_sign ? kSignColor : Rgb{120, 120, 120};
    point.track = obs;
    double err = 0.0;
    for (const auto& el : obs) {
      const ImageRecord& image = model_.images.at(el.image_id);
      const Keypoint& kp = image.keypoints[el.keypoint_index];
      const Vec3 x = image.pose.to_camera(point.xyz);
      const Eigen::Vector2d uv(scene_.intrinsics.fx * x.x() / x.z() + scene_.intrinsics.cx,
                               scene_.intrinsics.fy * x.y() / x.z() + scene_.intrinsics.cy);
      err += (uv - Eigen::Vector2d(kp.x, kp.y)).norm();
    }
    point.reproj_error = err / static_cast<double>(obs.size());
    model_.points[id] = std::move(point);
  }
  validate(model_);

  const EnuFrame frame = scene_frame();
  const size_t n = map_frames_.size();
  for (size_t f = 0; f < n; ++f) {
    if (f % 10 != 0 && f + 1 != n) continue;
    const Vec3 c = scene_.trajectory[f].position;
    GeodeticCoord coord =
        (f == 0 && c.isZero()) ? scene_.origin : frame.unproject(c);
    georegistration_.push_back({map_image_name(f), coord});
  }

  std::vector<bool> seen(scene_.signs.size(), false);
  for (size_t f = 0; f < n; ++f) {
    DetectionSet set;
    set.image_name = map_image_name(f);
    for (const auto& ps : map_frames_[f].signs) {
      seen[ps.sign] = true;
      const SyntheticSign& sign = scene_.signs[ps.sign];
      if (!sign.map_detectable) continue;
      if (scene_.noise.detection_dropout > 0.0) {
        auto rng = keyed_rng(scene_.seed, kDropoutMap, f, ps.sign);
        if (std::bernoulli_distribution(scene_.noise.detection_dropout)(rng)) continue;
      }
      set.detections.push_back({sign.class_name, 1.0, ps.bbox});
    }
    map_detections_.push_back(std::move(set));
  }
  for (size_t s = 0; s < seen.size(); ++s) {
    if (!seen[s]) {
      warnings_.push_back("sign " + std::to_string(s) + " ('" +
                          scene_.signs[s].class_name +
                          "') is never visible from the mapping drive");
    }
  }
}

void SceneRenderer::build_drive() {
  drive_frames_ = render_drive(drive_scene_, scene_.drive_mount, false);
  const EnuFrame frame = scene_frame();
  const EnuFrame registered_frame(georegistration_.front().coord);
  const bool same_frame = registered_frame.origin() == scene_.origin;
  const Mat3 to_registered =
      registered_frame.basis() * frame.basis().transpose();

  for (size_t f = 0; f < drive_frames_.size(); ++f) {
    const Vec3 center = drive_scene_.trajectory[f].position;
    Vec3 noisy = center;
    if (scene_.noise.gps_sigma > 0.0) {
      auto rng = keyed_rng(scene_.seed, kGpsNoise, f);
      std::normal_distribution<double> n(0.0, scene_.noise.gps_sigma);
      noisy += Vec3(n(rng), n(rng), n(rng));
    }
    drive_gps_.push_back({static_cast<double>(f) * scene_.frame_dt,
                          (f == 0 && noisy.isZero()) ? scene_.origin
                                                     : frame.unproject(noisy)});

    const std::string name = drive_image_name(f);
    if (f % static_cast<size_t>(scene_.reanchor_every) == 0) {
      const CameraPose& truth = drive_frames_[f].pose;
      if (same_frame) {
        drive_registered_[name] = truth;
      } else {
        const Vec3 c = registered_frame.project(frame.unproject(center));
        const Mat3 r_wc = truth.rotation_matrix() * to_registered.transpose();
        drive_registered_[name] = CameraPose::from_center(r_wc, c);
      }
    }

    DetectionSet set;
    set.image_name = name;
    for (const auto& ps : drive_frames_[f].signs) {
      const SyntheticSign& sign = drive_scene_.signs[ps.sign];
      if (!sign.drive_detectable) continue;
      if (scene_.noise.detection_dropout > 0.0) {
        auto rng = keyed_rng(scene_.seed, kDropoutDrive, f, ps.sign);
        if (std::bernoulli_distribution(scene_.noise.detection_dropout)(rng)) continue;
      }
      set.detections.push_back({sign.class_name, 1.0, ps.bbox});
    }
    drive_detections_[name] = std::move(set);
  }
}

SegmentationMask SceneRenderer::rasterize_mask(const FrameRender& frame,
                                               const std::string& name) const {
  const CameraIntrinsics& cam = scene_.intrinsics;
  SegmentationMask mask;
  mask.image_name = name;
  mask.width = cam.width;
  mask.height = cam.height;
  mask.class_ids.assign(static_cast<size_t>(cam.width) * cam.height, kBuildingClass);
  for (const auto& ps : frame.signs) {
    const int x0 = std::max(0, static_cast<int>(std::floor(ps.bbox.xmin)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(ps.bbox.xmax)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ps.bbox.ymin)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ps.bbox.ymax)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (inside_quad(ps.corners, x, y)) mask.at(x, y) = kSignClass;
      }
    }
  }
  for (const auto& kp : frame.keypoints) {
    if (!kp.is_sign) continue;
    const auto px = pixel_of(kp.xy.x(), kp.xy.y(), cam.width, cam.height);
    if (px) mask.at(px->first, px->second) = kSignClass;
  }
  return mask;
}

DistanceMap SceneRenderer::rasterize_distance(const SyntheticScene& scene,
                                              const FrameRender& frame,
                                              const std::string& name,
                                              bool noisy,
                                              size_t frame_index) const {
  const CameraIntrinsics& cam = scene.intrinsics;
  DistanceMap map = DistanceMap::unlabeled(name, cam.width, cam.height);
  const Mat3 r_wc = frame.pose.rotation_matrix();

  for (const auto& ps : frame.signs) {
    const SyntheticSign& sign = scene.signs[ps.sign];
    const Vec3 normal_c = r_wc * Vec3(sign.facing.x(), sign.facing.y(), 0.0);
    const double plane_offset = normal_c.dot(frame.pose.to_camera(sign.position));
    const int x0 = std::max(0, static_cast<int>(std::floor(ps.bbox.xmin)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(ps.bbox.xmax)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ps.bbox.ymin)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ps.bbox.ymax)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside_quad(ps.corners, x, y)) continue;
        const Vec3 ray((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
        const double denom = normal_c.dot(ray);
        if (std::abs(denom) < 1e-12) continue;
        const double t = plane_offset / denom;
        if (t > 0.0) map.at(x, y) = t * ray;
      }
    }
  }

  // Keypoint pixels carry the exact offset of their point; collisions keep
  // the nearer one.
  std::unordered_set<std::int64_t> written;
  for (const auto& kp : frame.keypoints) {
    const auto px = pixel_of(kp.xy.x(), kp.xy.y(), cam.width, cam.height);
    if (!px) continue;
    const Vec3 b = frame.pose.to_camera(kp.world);
    Vec3& slot = map.at(px->first, px->second);
    const auto key = pixel_key(px->first, px->second);
    if (!written.contains(key) || b.z() < slot.z()) {
      slot = b;
      written.insert(key);
    }
  }

  if (noisy && scene.noise.distance_map_rel_sigma > 0.0) {
    auto rng = keyed_rng(scene.seed, kDistanceNoise, frame_index);
    std::normal_distribution<double> n(0.0, scene.noise.distance_map_rel_sigma);
    for (auto& b : map.pixels) {
      if (!std::isnan(b.z())) b *= std::max(0.05, 1.0 + n(rng));
    }
  }
  return map;
}

SegmentationMask SceneRenderer::map_mask(size_t frame) const {
  return rasterize_mask(map_frames_.at(frame), map_image_name(frame));
}

MaskSet SceneRenderer::map_masks() const {
  MaskSet masks;
  for (size_t f = 0; f < map_frames_.size(); ++f) {
    masks.emplace(map_image_name(f), map_mask(f));
  }
  return masks;
}

DistanceMap SceneRenderer::map_distance_map(size_t frame) const {
  return rasterize_distance(scene_, map_frames_.at(frame), map_image_name(frame),
                            false, frame);
}

std::vector<FrameTime> SceneRenderer::drive_frame_times() const {
  std::vector<FrameTime> frames;
  for (size_t f = 0; f < drive_frames_.size(); ++f) {
    frames.push_back({drive_image_name(f), static_cast<double>(f) * scene_.frame_dt});
  }
  return frames;
}

std::vector<GpsSample> SceneRenderer::drive_truth_trace() const {
  const EnuFrame frame = scene_frame();
  std::vector<GpsSample> trace;
  for (size_t f = 0; f < drive_frames_.size(); ++f) {
    trace.push_back({static_cast<double>(f) * scene_.frame_dt,
                     frame.unproject(drive_scene_.trajectory[f].position)});
  }
  return trace;
}

DistanceMap SceneRenderer::drive_distance_map(size_t frame) const {
  return rasterize_distance(drive_scene_, drive_frames_.at(frame),
                            drive_image_name(frame), true, frame);
}

DistanceMap SceneRenderer::drive_distance_map(const std::string& image_name) const {
  for (size_t f = 0; f < drive_frames_.size(); ++f) {
    if (drive_image_name(f) == image_name) return drive_distance_map(f);
  }
  throw ValidationError("no drive frame named '" + image_name + "'");
}

DistanceMapSource SceneRenderer::drive_distance_maps() const {
  return [this](const std::string& name) { return drive_distance_map(name); };
}

namespace {

std::vector<TruthEntry> truth_of(const SyntheticScene& scene) {
  std::vector<TruthEntry> out;
  for (const auto& sign : scene.signs) {
    const auto pts = sign_face_points(sign, scene.sign_size);
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    out.push_back({sign.class_name, c / static_cast<double>(pts.size())});
  }
  return out;
}

}  // namespace

std::vector<TruthEntry> SceneRenderer::map_truth() const { return truth_of(scene_); }
std::vector<TruthEntry> SceneRenderer::drive_truth() const {
  return truth_of(drive_scene_);
}

std::vector<size_t> SceneRenderer::signs_seen_in_map() const {
  std::set<size_t> seen;
  for (const auto& frame : map_frames_) {
    for (const auto& ps : frame.signs) seen.insert(ps.sign);
  }
  return {seen.begin(), seen.end()};
}

std::vector<MetadataEntry> SceneRenderer::truth_entries(
    const std::vector<TruthEntry>& truth, const std::string& date) const {
  const EnuFrame frame = scene_frame();
  std::vector<MetadataEntry> out;
  for (const auto& t : truth) {
    const GeodeticCoord g = frame.unproject(t.enu);
    out.push_back({g.lat_deg, g.lon_deg, t.class_name, kSignColor, date});
  }
  return out;
}

std::vector<TruthChange> SceneRenderer::truth_changes() const {
  const EnuFrame frame = scene_frame();
  std::vector<TruthChange> out;
  for (const auto& edit : scene_.drive_changes) {
    const GeodeticCoord g = frame.unproject(edit.position);
    out.push_back({edit.op == SceneEdit::Op::kAdd ? ChangeKind::kAppeared
                                                  : ChangeKind::kRemoved,
                   edit.class_name, g.lat_deg, g.lon_deg});
  }
  return out;
}

std::vector<MetadataEntry> SceneRenderer::truth_unchanged() const {
  // Signs present both before and after the edits.
  std::vector<TruthEntry> kept;
  const auto before = map_truth();
  const auto after = drive_truth();
  for (const auto& b : before) {
    const bool still_there = std::any_of(after.begin(), after.end(), [&](const TruthEntry& a) {
      return a.class_name == b.class_name && (a.enu - b.enu).norm() < 1e-9;
    });
    if (still_there) kept.push_back(b);
  }
  return truth_entries(kept, scene_.map_date);
}

// --- files ----------------------------------------------------------------

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json vec_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::Vector2d vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json mat_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Mat3 mat_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw ValidationError("expected 3x3 matrix");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

void write_scene_json(const SyntheticScene& scene,
                      const std::filesystem::path& path) {
  json j;
  j["seed"] = scene.seed;
  j["origin"] = {{"lat_deg", scene.origin.lat_deg},
                 {"lon_deg", scene.origin.lon_deg},
                 {"alt_m", scene.origin.alt_m}};
  const auto& k = scene.intrinsics;
  j["intrinsics"] = {{"width", k.width}, {"height", k.height}, {"fx", k.fx},
                     {"fy", k.fy},       {"cx", k.cx},         {"cy", k.cy}};
  j["mount"] = mat_json(scene.mount);
  j["drive_mount"] = mat_json(scene.drive_mount);
  j["noise"] = {{"gps_sigma", scene.noise.gps_sigma},
                {"distance_map_rel_sigma", scene.noise.distance_map_rel_sigma},
                {"keypoint_sigma", scene.noise.keypoint_sigma},
                {"detection_dropout", scene.noise.detection_dropout},
                {"pose_jitter_deg", scene.noise.pose_jitter_deg}};
  j["sign_size_m"] = scene.sign_size;
  j["max_range_m"] = scene.max_range;
  j["frame_dt_s"] = scene.frame_dt;
  j["reanchor_every"] = scene.reanchor_every;
  j["map_date"] = scene.map_date;
  j["drive_date"] = scene.drive_date;
  j["vehicle_id"] = scene.vehicle_id;
  j["signs"] = json::array();
  for (const auto& s : scene.signs) {
    j["signs"].push_back({{"class", s.class_name},
                          {"position", vec_json(s.position)},
                          {"facing", vec_json(s.facing)},
                          {"face_points", s.face_points},
                          {"map_detectable", s.map_detectable},
                          {"drive_detectable", s.drive_detectable},
                          {"triangulated", s.triangulated}});
  }
  j["trajectory"] = json::array();
  for (const auto& p : scene.trajectory) {
    j["trajectory"].push_back(
        {{"position", vec_json(p.position)}, {"heading", vec_json(p.heading)}});
  }
  j["background"] = json::array();
  for (const auto& b : scene.background) j["background"].push_back(vec_json(b));
  j["drive_changes"] = json::array();
  for (const auto& e : scene.drive_changes) {
    j["drive_changes"].push_back(
        {{"op", e.op == SceneEdit::Op::kAdd ? "add" : "remove"},
         {"class", e.class_name},
         {"position", vec_json(e.position)}});
  }
  write_text_file(path, j.dump(1) + "\n");
}

SyntheticScene read_scene_json(const std::filesystem::path& path) {
  SyntheticScene scene;
  try {
    const json j = json::parse(read_text_file(path));
    scene.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("origin")) {
      const auto& o = j.at("origin");
      scene.origin = {o.at("lat_deg").get<double>(), o.at("lon_deg").get<double>(),
                      o.at("alt_m").get<double>()};
    }
    if (j.contains("intrinsics")) {
      const auto& k = j.at("intrinsics");
      scene.intrinsics.width = k.at("width").get<int>();
      scene.intrinsics.height = k.at("height").get<int>();
      scene.intrinsics.fx = k.at("fx").get<double>();
      scene.intrinsics.fy = k.at("fy").get<double>();
      scene.intrinsics.cx = k.at("cx").get<double>();
      scene.intrinsics.cy = k.at("cy").get<double>();
    }
    if (j.contains("mount")) scene.mount = mat_from(j.at("mount"));
    if (j.contains("drive_mount")) scene.drive_mount = mat_from(j.at("drive_mount"));
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      scene.noise.gps_sigma = n.value("gps_sigma", 0.0);
      scene.noise.distance_map_rel_sigma = n.value("distance_map_rel_sigma", 0.0);
      scene.noise.keypoint_sigma = n.value("keypoint_sigma", 0.0);
      scene.noise.detection_dropout = n.value("detection_dropout", 0.0);
      scene.noise.pose_jitter_deg = n.value("pose_jitter_deg", 0.0);
    }
    scene.sign_size = j.value("sign_size_m", scene.sign_size);
    scene.max_range = j.value("max_range_m", scene.max_range);
    scene.frame_dt = j.value("frame_dt_s", scene.frame_dt);
    scene.reanchor_every = j.value("reanchor_every", scene.reanchor_every);
    scene.map_date = j.value("map_date", scene.map_date);
    scene.drive_date = j.value("drive_date", scene.drive_date);
    scene.vehicle_id = j.value("vehicle_id", scene.vehicle_id);
    for (const auto& s : j.at("signs")) {
      SyntheticSign sign;
      sign.class_name = s.at("class").get<std::string>();
      sign.position = vec3_from(s.at("position"));
      sign.facing = vec2_from(s.at("facing"));
      sign.face_points = s.value("face_points", 9);
      sign.map_detectable = s.value("map_detectable", true);
      sign.drive_detectable = s.value("drive_detectable", true);
      sign.triangulated = s.value("triangulated", true);
      scene.signs.push_back(std::move(sign));
    }
    for (const auto& p : j.at("trajectory")) {
      scene.trajectory.push_back(
          {vec3_from(p.at("position")), vec2_from(p.at("heading"))});
    }
    if (j.contains("background")) {
      for (const auto& b : j.at("background")) scene.background.push_back(vec3_from(b));
    }
    if (j.contains("drive_changes")) {
      for (const auto& e : j.at("drive_changes")) {
        const std::string op = e.at("op").get<std::string>();
        if (op != "add" && op != "remove") {
          throw ValidationError("scene edit op must be 'add' or 'remove'");
        }
        scene.drive_changes.push_back(
            {op == "add" ? SceneEdit::Op::kAdd : SceneEdit::Op::kRemove,
             e.at("class").get<std::string>(), vec3_from(e.at("position"))});
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
  scene.intrinsics.camera_id = 1;
  scene.intrinsics.model = CameraModel::kPinhole;
  validate(scene);
  return scene;
}

void SceneRenderer::write_bundle(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const fs::path& sub : {fs::path("masks"), fs::path("drive") / "distance_maps"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string());
  }
  write_scene_json(scene_, dir / "scene.json");
  palette_.write(dir / "palette.txt");
  write_text_file(dir / "sign_family.txt", std::to_string(kSignClass) + "\n");
  write_georegistration_csv(dir / "georegistration.csv", georegistration_);
  write_model(model_, dir / "model");
  for (size_t f = 0; f < map_frames_.size(); ++f) {
    write_mask_pgm(map_mask(f), dir / "masks" / (map_image_name(f) + ".pgm"));
  }
  write_detections_jsonl(dir / "detections.jsonl", map_detections_);
  write_metadata(dir / "truth_metadata.csv",
                 truth_entries(map_truth(), scene_.map_date));
  write_metadata(dir / "truth_unchanged.csv", truth_unchanged());
  {
    std::string out;
    for (const auto& c : truth_changes()) {
      json obj = {{"kind", to_string(c.kind)},
                  {"class", c.class_name},
                  {"lat_deg", c.lat_deg},
                  {"lon_deg", c.lon_deg}};
      out += obj.dump() + "\n";
    }
    write_text_file(dir / "truth_changes.jsonl", out);
  }

  const fs::path drive = dir / "drive";
  write_frame_times(drive / "frames.csv", drive_frame_times());
  write_gps_trace(drive / "gps.csv", drive_gps_);
  write_gps_trace(drive / "gps_truth.csv", drive_truth_trace());
  write_registered_poses(drive / "registered_poses.csv", drive_registered_);
  std::vector<DetectionSet> sets;
  for (size_t f = 0; f < drive_frames_.size(); ++f) {
    sets.push_back(drive_detections_.at(drive_image_name(f)));
    if (!sets.back().detections.empty()) {
      write_distance_map(drive_distance_map(f),
                         drive / "distance_maps" / (drive_image_name(f) + ".b3dm"));
    }
  }
  write_detections_jsonl(drive / "detections.jsonl", sets);
}

}  // namespace signmap
