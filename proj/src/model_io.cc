#include "signmap/model_io.h"

#include <sstream>
#include <string_view>

#include "signmap/csv.h"

namespace signmap {
namespace {

namespace fs = std::filesystem;

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  tokens.reserve(16);
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r')) {
      ++i;
    }
    const size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' &&
           line[i] != '\r') {
      ++i;
    }
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

bool is_comment(std::string_view line) {
  line = trim(line);
  return !line.empty() && line.front() == '#';
}

class LineSource {
 public:
  explicit LineSource(const fs::path& path)
      : name_(path.filename().string()),
        lines_(split(read_text_file(path), '\n')) {
    // A terminating newline does not start another line.
    if (!lines_.empty() && lines_.back().empty()) lines_.pop_back();
  }

  // Next line that is neither a comment nor blank.
  bool next_record(std::string_view* line) {
    while (cursor_ < lines_.size()) {
      const std::string_view candidate = lines_[cursor_++];
      if (is_comment(candidate) || trim(candidate).empty()) continue;
      *line = candidate;
      return true;
    }
    return false;
  }

  // Next line, blank or not; comments still skipped.
  bool next_raw(std::string_view* line) {
    while (cursor_ < lines_.size()) {
      const std::string_view candidate = lines_[cursor_++];
      if (is_comment(candidate)) continue;
      *line = candidate;
      return true;
    }
    return false;
  }

  int line_number() const { return static_cast<int>(cursor_); }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(name_, line_number(), what);
  }

  double number(std::string_view token) const {
    try {
      const double v = parse_double(token);
      if (!std::isfinite(v)) fail("non-finite value");
      return v;
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  }

  long long integer(std::string_view token) const {
    try {
      return parse_integer(token);
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  }

 private:
  std::string name_;
  std::vector<std::string> lines_;
  size_t cursor_ = 0;
};

void read_cameras(const fs::path& path, Reconstruction* r,
                  std::vector<std::string>* warnings) {
  LineSource src(path);
  std::string_view line;
  while (src.next_record(&line)) {
    const auto tok = tokenize(line);
    if (tok.size() < 4) src.fail("camera line needs at least 4 fields");
    CameraIntrinsics cam;
    cam.camera_id = static_cast<int>(src.integer(tok[0]));
    cam.width = static_cast<int>(src.integer(tok[2]));
    cam.height = static_cast<int>(src.integer(tok[3]));
    const std::string_view model = tok[1];
    const size_t nparams = tok.size() - 4;
    auto param = [&](size_t i) { return src.number(tok[4 + i]); };
    if (model == "SIMPLE_PINHOLE" || model == "SIMPLE_RADIAL") {
      const size_t expected = model == "SIMPLE_PINHOLE" ? 3 : 4;
      if (nparams != expected) {
        src.fail(std::string(model) + " expects " + std::to_string(expected) +
                 " parameters");
      }
      cam.model = CameraModel::kSimplePinhole;
      cam.fx = cam.fy = param(0);
      cam.cx = param(1);
      cam.cy = param(2);
      if (model == "SIMPLE_RADIAL" && warnings) {
        warnings->push_back("camera " + std::to_string(cam.camera_id) +
                            ": SIMPLE_RADIAL distortion ignored");
      }
    } else if (model == "PINHOLE") {
      if (nparams != 4) src.fail("PINHOLE expects 4 parameters");
      cam.model = CameraModel::kPinhole;
      cam.fx = param(0);
      cam.fy = param(1);
      cam.cx = param(2);
      cam.cy = param(3);
    } else {
      src.fail("unsupported camera model '" + std::string(model) + "'");
    }
    try {
      validate(cam);
    } catch (const ValidationError& e) {
      src.fail(e.what());
    }
    if (!r->cameras.emplace(cam.camera_id, cam).second) {
      src.fail("duplicate camera id " + std::to_string(cam.camera_id));
    }
  }
}

void read_images(const fs::path& path, Reconstruction* r) {
  LineSource src(path);
  std::string_view line;
  while (src.next_record(&line)) {
    const auto tok = tokenize(line);
    if (tok.size() != 10) src.fail("image line needs 10 fields");
    ImageRecord image;
    image.image_id = src.integer(tok[0]);
    image.pose.rotation_wc =
        Eigen::Quaterniond(src.number(tok[1]), src.number(tok[2]),
                           src.number(tok[3]), src.number(tok[4]));
    image.pose.translation_wc =
        Vec3(src.number(tok[5]), src.number(tok[6]), src.number(tok[7]));
    image.camera_id = static_cast<int>(src.integer(tok[8]));
    image.name = std::string(tok[9]);
    try {
      validate(image.pose);
    } catch (const ValidationError& e) {
      src.fail(e.what());
    }

    std::string_view points_line;
    if (!src.next_raw(&points_line)) {
      src.fail("missing keypoint line for image " +
               std::to_string(image.image_id));
    }
    const auto pts = tokenize(points_line);
    if (pts.size() % 3 != 0) src.fail("keypoint line is not X Y POINT3D_ID triples");
    image.keypoints.reserve(pts.size() / 3);
    for (size_t i = 0; i < pts.size(); i += 3) {
      Keypoint kp;
      kp.x = src.number(pts[i]);
      kp.y = src.number(pts[i + 1]);
      const long long id = src.integer(pts[i + 2]);
      if (id >= 0) {
        kp.point3d_id = id;
      } else if (id != -1) {
        src.fail("negative POINT3D_ID other than -1");
      }
      image.keypoints.push_back(kp);
    }
    const ImageId id = image.image_id;
    if (!r->images.emplace(id, std::move(image)).second) {
      src.fail("duplicate image id " + std::to_string(id));
    }
  }
}

void read_points(const fs::path& path, Reconstruction* r) {
  LineSource src(path);
  std::string_view line;
  while (src.next_record(&line)) {
    const auto tok = tokenize(line);
    if (tok.size() < 8 || (tok.size() - 8) % 2 != 0) {
      src.fail("point line needs 8 fields plus (IMAGE_ID, POINT2D_IDX) pairs");
    }
    ScenePoint point;
    point.point3d_id = src.integer(tok[0]);
    if (point.point3d_id < 0) src.fail("negative POINT3D_ID");
    point.xyz = Vec3(src.number(tok[1]), src.number(tok[2]), src.number(tok[3]));
    for (int c = 0; c < 3; ++c) {
      const long long v = src.integer(tok[4 + c]);
      if (v < 0 || v > 255) src.fail("color channel out of range");
      point.rgb[c] = static_cast<std::uint8_t>(v);
    }
    point.reproj_error = src.number(tok[7]);
    for (size_t i = 8; i < tok.size(); i += 2) {
      const long long idx = src.integer(tok[i + 1]);
      if (idx < 0) src.fail("negative POINT2D_IDX");
      point.track.push_back(
          {src.integer(tok[i]), static_cast<std::uint32_t>(idx)});
    }
    const Point3dId id = point.point3d_id;
    if (!r->points.emplace(id, std::move(point)).second) {
      src.fail("duplicate point id " + std::to_string(id));
    }
  }
}

void read_origin(const fs::path& path, Reconstruction* r) {
  LineSource src(path);
  std::string_view line;
  if (!src.next_record(&line)) src.fail("missing origin line");
  const auto tok = tokenize(line);
  if (tok.size() != 3) src.fail("origin line needs LAT LON ALT");
  GeodeticCoord origin{src.number(tok[0]), src.number(tok[1]),
                       src.number(tok[2])};
  try {
    validate(origin);
  } catch (const ValidationError& e) {
    src.fail(e.what());
  }
  r->enu_origin = origin;
}

}  // namespace

std::string camera_model_name(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole:
      return "SIMPLE_PINHOLE";
    case CameraModel::kPinhole:
      return "PINHOLE";
  }
  return "UNKNOWN";
}

Reconstruction parse_model(const fs::path& dir,
                           std::vector<std::string>* warnings) {
  Reconstruction r;
  read_cameras(dir / "cameras.txt", &r, warnings);
  read_images(dir / "images.txt", &r);
  read_points(dir / "points3D.txt", &r);
  if (fs::exists(dir / "enu_origin.txt")) {
    read_origin(dir / "enu_origin.txt", &r);
  }
  validate(r);
  return r;
}

void write_model(const Reconstruction& r, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  {
    std::ostringstream out;
    out << "# Camera list with one line of data per camera:\n"
        << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
        << "# Number of cameras: " << r.cameras.size() << "\n";
    for (const auto& [id, cam] : r.cameras) {
      out << id << ' ' << camera_model_name(cam.model) << ' ' << cam.width
          << ' ' << cam.height << ' ';
      if (cam.model == CameraModel::kSimplePinhole) {
        out << format_double(cam.fx);
      } else {
        out << format_double(cam.fx) << ' ' << format_double(cam.fy);
      }
      out << ' ' << format_double(cam.cx) << ' ' << format_double(cam.cy)
          << '\n';
    }
    write_text_file(dir / "cameras.txt", out.str());
  }

  {
    size_t observations = 0;
    for (const auto& [id, image] : r.images) {
      for (const auto& kp : image.keypoints) observations += kp.point3d_id.has_value();
    }
    const double mean_obs =
        r.images.empty() ? 0.0
                         : static_cast<double>(observations) / r.images.size();
    std::ostringstream out;
    out << "# Image list with two lines of data per image:\n"
        << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
        << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
        << "# Number of images: " << r.images.size()
        << ", mean observations per image: " << format_double(mean_obs)
        << "\n";
    for (const auto& [id, image] : r.images) {
      const auto& q = image.pose.rotation_wc;
      const auto& t = image.pose.translation_wc;
      out << id << ' ' << format_double(q.w()) << ' ' << format_double(q.x())
          << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
          << format_double(t.x()) << ' ' << format_double(t.y()) << ' '
          << format_double(t.z()) << ' ' << image.camera_id << ' '
          << image.name << '\n';
      bool first = true;
      for (const auto& kp : image.keypoints) {
        if (!first) out << ' ';
        first = false;
        out << format_double(kp.x) << ' ' << format_double(kp.y) << ' '
            << (kp.point3d_id ? *kp.point3d_id : -1);
      }
      out << '\n';
    }
    write_text_file(dir / "images.txt", out.str());
  }

  {
    size_t track_total = 0;
    for (const auto& [id, p] : r.points) track_total += p.track.size();
    const double mean_track =
        r.points.empty() ? 0.0
                         : static_cast<double>(track_total) / r.points.size();
    std::ostringstream out;
    out << "# 3D point list with one line of data per point:\n"
        << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, "
           "POINT2D_IDX)\n"
        << "# Number of points: " << r.points.size()
        << ", mean track length: " << format_double(mean_track) << "\n";
    for (const auto& [id, p] : r.points) {
      out << id << ' ' << format_double(p.xyz.x()) << ' '
          << format_double(p.xyz.y()) << ' ' << format_double(p.xyz.z()) << ' '
          << int{p.rgb[0]} << ' ' << int{p.rgb[1]} << ' ' << int{p.rgb[2]}
          << ' ' << format_double(p.reproj_error);
      for (const auto& el : p.track) {
        out << ' ' << el.image_id << ' ' << el.keypoint_index;
      }
      out << '\n';
    }
    write_text_file(dir / "points3D.txt", out.str());
  }

  const fs::path origin_path = dir / "enu_origin.txt";
  if (r.enu_origin) {
    std::ostringstream out;
    out << "# ENU origin of the geo-registered world frame: LAT LON ALT\n"
        << format_double(r.enu_origin->lat_deg) << ' '
        << format_double(r.enu_origin->lon_deg) << ' '
        << format_double(r.enu_origin->alt_m) << '\n';
    write_text_file(origin_path, out.str());
  } else if (fs::exists(origin_path)) {
    fs::remove(origin_path, ec);
  }
}

}  // namespace signmap
