#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "signmap/camera.h"
#include "signmap/geodesy.h"
#include "signmap/reconstruction.h"

namespace signmap::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("signmap_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng))
      .normalized()
      .toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

// A referentially consistent model with arbitrary full-precision values.
inline Reconstruction random_reconstruction(std::mt19937_64& rng, int num_points,
                                            int num_images) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Reconstruction r;
  const int num_cameras = 1 + static_cast<int>(rng() % 3);
  for (int c = 1; c <= num_cameras; ++c) {
    CameraIntrinsics k;
    k.camera_id = c;
    k.model = (c % 2) ? CameraModel::kPinhole : CameraModel::kSimplePinhole;
    k.width = 320 + static_cast<int>(rng() % 1000);
    k.height = 240 + static_cast<int>(rng() % 800);
    k.fx = 200.0 + 800.0 * u(rng);
    k.fy = k.model == CameraModel::kPinhole ? 200.0 + 800.0 * u(rng) : k.fx;
    k.cx = k.width * u(rng);
    k.cy = k.height * u(rng);
    r.cameras[c] = k;
  }
  for (int i = 0; i < num_images; ++i) {
    ImageRecord image;
    image.image_id = 1 + i * 3;  // sparse ids
    image.name = "img_" + std::to_string(i) + ".jpg";
    image.camera_id = 1 + static_cast<int>(rng() % num_cameras);
    image.pose = CameraPose::from_center(random_rotation(rng), random_vec(rng, -50, 50));
    const int free_keypoints = static_cast<int>(rng() % 4);
    for (int k = 0; k < free_keypoints; ++k) {
      image.keypoints.push_back({1000 * u(rng), 800 * u(rng), std::nullopt});
    }
    r.images[image.image_id] = std::move(image);
  }
  std::vector<ImageId> ids;
  for (const auto& [id, image] : r.images) ids.push_back(id);
  for (int p = 0; p < num_points; ++p) {
    ScenePoint point;
    point.point3d_id = 10 + p * 2;
    point.xyz = random_vec(rng, -100, 100);
    point.rgb = {static_cast<std::uint8_t>(rng() % 256),
                 static_cast<std::uint8_t>(rng() % 256),
                 static_cast<std::uint8_t>(rng() % 256)};
    point.reproj_error = u(rng);
    const int track_len = 1 + static_cast<int>(rng() % std::min<size_t>(4, ids.size()));
    std::vector<ImageId> chosen;
    while (static_cast<int>(chosen.size()) < track_len) {
      const ImageId id = ids[rng() % ids.size()];
      if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) chosen.push_back(id);
    }
    for (ImageId id : chosen) {
      auto& image = r.images.at(id);
      image.keypoints.push_back({1000 * u(rng), 800 * u(rng), point.point3d_id});
      point.track.push_back(
          {id, static_cast<std::uint32_t>(image.keypoints.size() - 1)});
    }
    r.points[point.point3d_id] = std::move(point);
  }
  return r;
}

}  // namespace signmap::testing
