#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "signmap/reconstruction.h"

namespace signmap {

// Reads a sparse model in the COLMAP text layout (`cameras.txt`,
// `images.txt`, `points3D.txt`) plus the optional `enu_origin.txt` that
// marks a geo-registered model. SIMPLE_RADIAL cameras are read as
// SIMPLE_PINHOLE; the dropped distortion term is reported in `warnings`.
//
// Throws ParseError (with line number) on malformed lines, unknown camera
// models and duplicate ids, ValidationError on broken references and
// IoError when a file cannot be read.
Reconstruction parse_model(const std::filesystem::path& dir,
                           std::vector<std::string>* warnings = nullptr);

// Writes the canonical text form: generated comment header, ids ascending,
// floats as shortest round-trip decimals.
void write_model(const Reconstruction& r, const std::filesystem::path& dir);

std::string camera_model_name(CameraModel model);

}  // namespace signmap
