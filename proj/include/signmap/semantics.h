#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "signmap/reconstruction.h"

namespace signmap {

using ClassId = std::uint16_t;
inline constexpr ClassId kUnlabeled = 0;

// Segmentation taxonomy. Id 0 is always "unlabeled".
class ClassPalette {
 public:
  ClassPalette();

  // Throws ValidationError on duplicate ids or names, or on an attempt to
  // rename id 0.
  void add(ClassId id, const std::string& name);

  std::optional<ClassId> id_of(const std::string& name) const;
  const std::string& name_of(ClassId id) const;
  bool contains(ClassId id) const { return names_.contains(id); }
  const std::map<ClassId, std::string>& entries() const { return names_; }

  // One `id<TAB>name` line per class.
  static ClassPalette read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

 private:
  std::map<ClassId, std::string> names_;
  std::map<std::string, ClassId> ids_;
};

// Decides whether a detector class agrees with a segmentation pixel. A
// detection matches pixels of its own palette class (when the name exists in
// the palette) and any pixel whose class is in the sign family.
class ClassMatcher {
 public:
  ClassMatcher(ClassPalette palette, std::set<ClassId> sign_family)
      : palette_(std::move(palette)), family_(std::move(sign_family)) {}

  bool matches(const std::string& detection_class, ClassId mask_class) const;
  const std::set<ClassId>& sign_family() const { return family_; }

 private:
  ClassPalette palette_;
  std::set<ClassId> family_;
};

struct SegmentationMask {
  std::string image_name;
  int width = 0;
  int height = 0;
  std::vector<ClassId> class_ids;  // row-major

  ClassId at(int x, int y) const {
    return class_ids[static_cast<size_t>(y) * width + x];
  }
  ClassId& at(int x, int y) {
    return class_ids[static_cast<size_t>(y) * width + x];
  }
};

// Nearest pixel of a subpixel keypoint, or empty when the keypoint lies
// outside [0, width) x [0, height). Rounded indices are clamped to the
// border.
std::optional<std::pair<int, int>> pixel_of(double x, double y, int width,
                                            int height);

// Binary PGM (P5), maxval 255 or 65535, pixel value = class id.
SegmentationMask read_mask_pgm(const std::filesystem::path& path,
                               const std::string& image_name);
void write_mask_pgm(const SegmentationMask& mask,
                    const std::filesystem::path& path);

using MaskSet = std::map<std::string, SegmentationMask>;

struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  double center_x() const { return 0.5 * (xmin + xmax); }
  double center_y() const { return 0.5 * (ymin + ymax); }

  bool operator==(const BoundingBox&) const = default;
};

struct Detection {
  std::string class_name;
  double score = 0.0;
  BoundingBox bbox;

  bool operator==(const Detection&) const = default;
};

struct DetectionSet {
  std::string image_name;
  std::vector<Detection> detections;

  bool operator==(const DetectionSet&) const = default;
};

void validate(const Detection& det);

// Clamps the box to the image; throws ValidationError when nothing is left.
BoundingBox clamp_to_image(const BoundingBox& box, int width, int height);

inline constexpr double kDefaultScoreThreshold = 0.4;

// Keeps detections with score >= threshold, order preserved.
DetectionSet filter_by_score(const DetectionSet& ds,
                             double threshold = kDefaultScoreThreshold);

// JSON Lines, one object per image:
// {"image_name": ..., "detections": [{"class", "score", "bbox"}]}
std::vector<DetectionSet> read_detections_jsonl(
    const std::filesystem::path& path);
void write_detections_jsonl(const std::filesystem::path& path,
                            std::span<const DetectionSet> sets);

struct PointLabeling {
  std::map<Point3dId, ClassId> labels;
  size_t observations_used = 0;
  size_t missing_mask_observations = 0;
  size_t out_of_bounds_observations = 0;
};

// Labels every 3D point by majority vote over the mask classes at its track
// keypoints. Unlabeled pixels do not vote; ties go to the class with more
// observations over the whole model, then to the lower id.
PointLabeling segment_point_cloud(const Reconstruction& r,
                                  const MaskSet& masks);

// Indices of keypoints with a triangulated point that fall inside the box
// and on a mask pixel whose class matches the detection.
std::vector<size_t> keypoints_supporting(const ImageRecord& image,
                                         const Detection& det,
                                         const SegmentationMask& mask,
                                         const ClassMatcher& matcher);

}  // namespace signmap
