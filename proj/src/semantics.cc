#include "signmap/semantics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "signmap/csv.h"

namespace signmap {

using nlohmann::json;

ClassPalette::ClassPalette() { add(kUnlabeled, "unlabeled"); }

void ClassPalette::add(ClassId id, const std::string& name) {
  if (name.empty()) throw ValidationError("empty class name");
  if (id == kUnlabeled) {
    if (name != "unlabeled") {
      throw ValidationError("class id 0 is reserved for 'unlabeled'");
    }
    names_[id] = name;
    ids_[name] = id;
    return;
  }
  if (names_.contains(id)) {
    throw ValidationError("duplicate class id " + std::to_string(id));
  }
  if (ids_.contains(name)) {
    throw ValidationError("duplicate class name '" + name + "'");
  }
  names_[id] = name;
  ids_[name] = id;
}

std::optional<ClassId> ClassPalette::id_of(const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& ClassPalette::name_of(ClassId id) const {
  const auto it = names_.find(id);
  if (it == names_.end()) {
    throw ValidationError("unknown class id " + std::to_string(id));
  }
  return it->second;
}

ClassPalette ClassPalette::read(const std::filesystem::path& path) {
  ClassPalette palette;
  const auto lines = split(read_text_file(path), '\n');
  const std::string source = path.filename().string();
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(source, static_cast<int>(i + 1), "expected id<TAB>name");
    }
    try {
      const long long id = parse_integer(line.substr(0, tab));
      if (id < 0 || id > 65535) throw ValidationError("class id out of range");
      palette.add(static_cast<ClassId>(id),
                  std::string(trim(line.substr(tab + 1))));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(source, static_cast<int>(i + 1), e.what());
    }
  }
  return palette;
}

void ClassPalette::write(const std::filesystem::path& path) const {
  std::ostringstream out;
  for (const auto& [id, name] : names_) out << id << '\t' << name << '\n';
  write_text_file(path, out.str());
}

bool ClassMatcher::matches(const std::string& detection_class,
                           ClassId mask_class) const {
  if (mask_class == kUnlabeled) return false;
  if (family_.contains(mask_class)) return true;
  const auto own = palette_.id_of(detection_class);
  return own && *own == mask_class;
}

std::optional<std::pair<int, int>> pixel_of(double x, double y, int width,
                                            int height) {
  if (!(x >= 0.0 && x < width && y >= 0.0 && y < height)) return std::nullopt;
  const int px = std::min(static_cast<int>(std::lround(x)), width - 1);
  const int py = std::min(static_cast<int>(std::lround(y)), height - 1);
  return std::make_pair(px, py);
}

SegmentationMask read_mask_pgm(const std::filesystem::path& path,
                               const std::string& image_name) {
  const std::string data = read_text_file(path);
  const std::string source = path.filename().string();
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const size_t start = pos;
    while (pos < data.size() &&
           !std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    }
    return data.substr(start, pos - start);
  };

  if (next_token() != "P5") {
    throw ParseError(source, 1, "not a binary PGM (P5) file");
  }
  SegmentationMask mask;
  mask.image_name = image_name;
  long long maxval = 0;
  try {
    mask.width = static_cast<int>(parse_integer(next_token()));
    mask.height = static_cast<int>(parse_integer(next_token()));
    maxval = parse_integer(next_token());
  } catch (const ValidationError& e) {
    throw ParseError(source, 1, std::string("bad PGM header: ") + e.what());
  }
  if (mask.width <= 0 || mask.height <= 0) {
    throw ParseError(source, 1, "PGM dimensions must be positive");
  }
  if (maxval != 255 && maxval != 65535) {
    throw ParseError(source, 1, "PGM maxval must be 255 or 65535");
  }
  ++pos;  // single whitespace after maxval
  const size_t count = static_cast<size_t>(mask.width) * mask.height;
  const size_t bytes = maxval == 255 ? 1 : 2;
  if (data.size() < pos + count * bytes) {
    throw ParseError(source, 1, "PGM raster is truncated");
  }
  mask.class_ids.resize(count);
  const auto* raw = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (size_t i = 0; i < count; ++i) {
    mask.class_ids[i] = bytes == 1
                            ? raw[i]
                            : static_cast<ClassId>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return mask;
}

void write_mask_pgm(const SegmentationMask& mask,
                    const std::filesystem::path& path) {
  const ClassId max_id =
      mask.class_ids.empty()
          ? 0
          : *std::max_element(mask.class_ids.begin(), mask.class_ids.end());
  const bool wide = max_id > 255;
  std::string out = "P5\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n" +
                    (wide ? "65535" : "255") + "\n";
  out.reserve(out.size() + mask.class_ids.size() * (wide ? 2 : 1));
  for (const ClassId id : mask.class_ids) {
    if (wide) out.push_back(static_cast<char>(id >> 8));
    out.push_back(static_cast<char>(id & 0xff));
  }
  write_text_file(path, out);
}

void validate(const Detection& det) {
  if (det.class_name.empty()) throw ValidationError("detection without class");
  if (!(det.score >= 0.0 && det.score <= 1.0)) {
    throw ValidationError("detection score outside [0, 1]");
  }
  const auto& b = det.bbox;
  if (!(b.xmin < b.xmax && b.ymin < b.ymax)) {
    throw ValidationError("detection box is empty or inverted");
  }
}

BoundingBox clamp_to_image(const BoundingBox& box, int width, int height) {
  BoundingBox out{std::clamp(box.xmin, 0.0, width - 1.0),
                  std::clamp(box.ymin, 0.0, height - 1.0),
                  std::clamp(box.xmax, 0.0, width - 1.0),
                  std::clamp(box.ymax, 0.0, height - 1.0)};
  if (!(out.xmin < out.xmax && out.ymin < out.ymax)) {
    throw ValidationError("detection box lies outside the image");
  }
  return out;
}

DetectionSet filter_by_score(const DetectionSet& ds, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("score threshold outside [0, 1]");
  }
  DetectionSet out;
  out.image_name = ds.image_name;
  std::copy_if(ds.detections.begin(), ds.detections.end(),
               std::back_inserter(out.detections),
               [threshold](const Detection& d) { return d.score >= threshold; });
  return out;
}

std::vector<DetectionSet> read_detections_jsonl(
    const std::filesystem::path& path) {
  const auto lines = split(read_text_file(path), '\n');
  const std::string source = path.filename().string();
  std::vector<DetectionSet> sets;
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const int line_no = static_cast<int>(i + 1);
    try {
      const json obj = json::parse(line);
      DetectionSet set;
      set.image_name = obj.at("image_name").get<std::string>();
      for (const auto& d : obj.at("detections")) {
        Detection det;
        det.class_name = d.at("class").get<std::string>();
        det.score = d.at("score").get<double>();
        const auto& box = d.at("bbox");
        if (!box.is_array() || box.size() != 4) {
          throw ValidationError("bbox must be [xmin, ymin, xmax, ymax]");
        }
        det.bbox = {box[0].get<double>(), box[1].get<double>(),
                    box[2].get<double>(), box[3].get<double>()};
        validate(det);
        set.detections.push_back(std::move(det));
      }
      sets.push_back(std::move(set));
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return sets;
}

void write_detections_jsonl(const std::filesystem::path& path,
                            std::span<const DetectionSet> sets) {
  std::string out;
  for (const auto& set : sets) {
    json obj;
    obj["image_name"] = set.image_name;
    obj["detections"] = json::array();
    for (const auto& det : set.detections) {
      obj["detections"].push_back(
          {{"class", det.class_name},
           {"score", det.score},
           {"bbox", {det.bbox.xmin, det.bbox.ymin, det.bbox.xmax, det.bbox.ymax}}});
    }
    out += obj.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

PointLabeling segment_point_cloud(const Reconstruction& r,
                                  const MaskSet& masks) {
  PointLabeling result;
  std::map<Point3dId, std::map<ClassId, size_t>> votes;
  std::map<ClassId, size_t> totals;

  for (const auto& [pid, point] : r.points) {
    auto& point_votes = votes[pid];
    for (const auto& el : point.track) {
      const ImageRecord& image = r.images.at(el.image_id);
      const auto mit = masks.find(image.name);
      if (mit == masks.end()) {
        ++result.missing_mask_observations;
        continue;
      }
      const SegmentationMask& mask = mit->second;
      const Keypoint& kp = image.keypoints.at(el.keypoint_index);
      const auto px = pixel_of(kp.x, kp.y, mask.width, mask.height);
      if (!px) {
        ++result.out_of_bounds_observations;
        continue;
      }
      ++result.observations_used;
      const ClassId cls = mask.at(px->first, px->second);
      if (cls == kUnlabeled) continue;
      ++point_votes[cls];
      ++totals[cls];
    }
  }

  for (const auto& [pid, point_votes] : votes) {
    ClassId best = kUnlabeled;
    size_t best_votes = 0;
    for (const auto& [cls, count] : point_votes) {
      // Classes are visited in ascending id order, so a strict comparison
      // keeps the lower id on a full tie.
      if (count > best_votes ||
          (count == best_votes && totals[cls] > totals[best])) {
        best = cls;
        best_votes = count;
      }
    }
    result.labels[pid] = best;
  }
  return result;
}

std::vector<size_t> keypoints_supporting(const ImageRecord& image,
                                         const Detection& det,
                                         const SegmentationMask& mask,
                                         const ClassMatcher& matcher) {
  std::vector<size_t> support;
  for (size_t i = 0; i < image.keypoints.size(); ++i) {
    const Keypoint& kp = image.keypoints[i];
    if (!kp.point3d_id || !det.bbox.contains(kp.x, kp.y)) continue;
    const auto px = pixel_of(kp.x, kp.y, mask.width, mask.height);
    if (!px) continue;
    if (matcher.matches(det.class_name, mask.at(px->first, px->second))) {
      support.push_back(i);
    }
  }
  return support;
}

}  // namespace signmap
