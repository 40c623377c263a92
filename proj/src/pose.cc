#include "signmap/pose.h"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "signmap/csv.h"

namespace signmap {

std::vector<GpsSample> read_gps_trace(const std::filesystem::path& path) {
  CsvReader csv(path, "t_s,lat_deg,lon_deg,alt_m");
  std::vector<GpsSample> trace;
  while (csv.next()) {
    GpsSample s{csv.number(0), {csv.number(1), csv.number(2), csv.number(3)}};
    try {
      validate(s.coord);
    } catch (const ValidationError& e) {
      csv.fail(e.what());
    }
    if (!trace.empty() && s.t < trace.back().t) {
      csv.fail("timestamps must be non-decreasing");
    }
    trace.push_back(s);
  }
  return trace;
}

void write_gps_trace(const std::filesystem::path& path,
                     std::span<const GpsSample> trace) {
  std::ostringstream out;
  out << "t_s,lat_deg,lon_deg,alt_m\n";
  for (const auto& s : trace) {
    out << format_double(s.t) << ',' << format_double(s.coord.lat_deg) << ','
        << format_double(s.coord.lon_deg) << ','
        << format_double(s.coord.alt_m) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<FrameTime> read_frame_times(const std::filesystem::path& path) {
  CsvReader csv(path, "image_name,t_s");
  std::vector<FrameTime> frames;
  while (csv.next()) {
    if (csv.fields()[0].empty()) csv.fail("empty image name");
    frames.push_back({csv.fields()[0], csv.number(1)});
  }
  return frames;
}

void write_frame_times(const std::filesystem::path& path,
                       std::span<const FrameTime> frames) {
  std::ostringstream out;
  out << "image_name,t_s\n";
  for (const auto& f : frames) {
    out << f.image_name << ',' << format_double(f.t) << '\n';
  }
  write_text_file(path, out.str());
}

GpsSample gps_at(std::span<const GpsSample> trace, double t) {
  if (trace.empty()) throw ValidationError("empty GPS trace");
  if (t <= trace.front().t) return {t, trace.front().coord};
  if (t >= trace.back().t) return {t, trace.back().coord};
  const auto upper = std::upper_bound(
      trace.begin(), trace.end(), t,
      [](double value, const GpsSample& s) { return value < s.t; });
  const GpsSample& b = *upper;
  const GpsSample& a = *(upper - 1);
  if (b.t == a.t) return {t, a.coord};
  const double w = (t - a.t) / (b.t - a.t);
  return {t,
          {a.coord.lat_deg + w * (b.coord.lat_deg - a.coord.lat_deg),
           a.coord.lon_deg + w * (b.coord.lon_deg - a.coord.lon_deg),
           a.coord.alt_m + w * (b.coord.alt_m - a.coord.alt_m)}};
}

std::map<std::string, CameraPose> read_registered_poses(
    const std::filesystem::path& path) {
  CsvReader csv(path, "image_name,qw,qx,qy,qz,tx,ty,tz");
  std::map<std::string, CameraPose> poses;
  while (csv.next()) {
    CameraPose pose;
    pose.rotation_wc = Eigen::Quaterniond(csv.number(1), csv.number(2),
                                          csv.number(3), csv.number(4));
    pose.translation_wc = Vec3(csv.number(5), csv.number(6), csv.number(7));
    try {
      validate(pose);
    } catch (const ValidationError& e) {
      csv.fail(e.what());
    }
    if (!poses.emplace(csv.fields()[0], pose).second) {
      csv.fail("duplicate image '" + csv.fields()[0] + "'");
    }
  }
  return poses;
}

void write_registered_poses(const std::filesystem::path& path,
                            const std::map<std::string, CameraPose>& poses) {
  std::ostringstream out;
  out << "image_name,qw,qx,qy,qz,tx,ty,tz\n";
  for (const auto& [name, pose] : poses) {
    const auto& q = pose.rotation_wc;
    const auto& t = pose.translation_wc;
    out << name << ',' << format_double(q.w()) << ',' << format_double(q.x())
        << ',' << format_double(q.y()) << ',' << format_double(q.z()) << ','
        << format_double(t.x()) << ',' << format_double(t.y()) << ','
        << format_double(t.z()) << '\n';
  }
  write_text_file(path, out.str());
}

ReferenceIndex::ReferenceIndex(const Reconstruction& r) {
  refs_.reserve(r.images.size());
  for (const auto& [id, image] : r.images) {
    refs_.push_back({id, camera_center(image.pose), image.pose.rotation_matrix()});
  }
}

const ReferenceIndex::Reference& ReferenceIndex::nearest(
    const Vec3& position) const {
  if (refs_.empty()) throw ValidationError("reference index is empty");
  const Reference* best = &refs_.front();
  double best_sq = (best->center - position).squaredNorm();
  for (const auto& ref : refs_) {
    const double d = (ref.center - position).squaredNorm();
    if (d < best_sq) {
      best = &ref;
      best_sq = d;
    }
  }
  return *best;
}

const ImageRecord& nearest_reference(const ReferenceIndex& index,
                                     const Reconstruction& r,
                                     const Vec3& position) {
  return r.images.at(index.nearest(position).image_id);
}

Mat3 nearest_rotation(const Mat3& m) {
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Mat3 propagate_orientation(const Mat3& r_prev, const Mat3& ref_prev,
                           const Mat3& ref_cur) {
  for (const Mat3* m : {&r_prev, &ref_prev, &ref_cur}) {
    if (!m->allFinite() ||
        (*m * m->transpose() - Mat3::Identity()).norm() > 1e-6 ||
        m->determinant() < 0.0) {
      throw ValidationError("orientation propagation needs rotation matrices");
    }
  }
  return nearest_rotation(r_prev * ref_prev.transpose() * ref_cur);
}

PoseEstimate estimate_pose(const std::string& image_name, const GpsSample& gps,
                           const ReferenceIndex& index, const EnuFrame& frame,
                           const std::optional<PoseEstimate>& prev,
                           const std::optional<CameraPose>& registered,
                           const PoseConfig& cfg) {
  PoseEstimate out;
  out.image_name = image_name;
  if (registered) {
    validate(*registered);
    out.rotation_cw = registered->rotation_matrix().transpose();
    out.center = camera_center(*registered);
    out.source = PoseSource::kRegistered;
    return out;
  }
  if (!prev) {
    throw ValidationError("image '" + image_name +
                          "': no registered pose and no previous pose");
  }
  out.center = frame.project(gps.coord);
  const auto& ref_cur = index.nearest(out.center);
  if ((ref_cur.center - out.center).norm() > cfg.max_ref_distance) {
    throw ValidationError("image '" + image_name +
                          "' is farther than max_ref_distance from the map");
  }
  const auto& ref_prev = index.nearest(prev->center);
  out.rotation_cw = propagate_orientation(prev->rotation_wc(),
                                          ref_prev.rotation_wc,
                                          ref_cur.rotation_wc)
                        .transpose();
  out.source = PoseSource::kPropagated;
  return out;
}

PoseTracker::PoseTracker(const ReferenceIndex& index, EnuFrame frame,
                         PoseConfig cfg)
    : index_(&index), frame_(std::move(frame)), cfg_(cfg) {}

bool PoseTracker::needs_anchor() const {
  return !prev_ || since_anchor_ >= cfg_.reanchor_every;
}

PoseEstimate PoseTracker::next(const std::string& image_name,
                               const GpsSample& gps,
                               const std::optional<CameraPose>& registered) {
  PoseEstimate pose =
      estimate_pose(image_name, gps, *index_, frame_, prev_, registered, cfg_);
  since_anchor_ = pose.source == PoseSource::kRegistered ? 0 : since_anchor_ + 1;
  prev_ = pose;
  return pose;
}

}  // namespace signmap
