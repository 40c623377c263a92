#pragma once

#include <span>

#include "signmap/geodesy.h"
#include "signmap/reconstruction.h"

namespace signmap {

struct GeoRegistrationResult {
  Reconstruction model;            // world frame = ENU at `frame.origin()`
  SimilarityTransform transform;   // model frame -> ENU
  double residual_rms_m = 0.0;
};

// Aligns the model with real-world coordinates: the ENU frame is anchored at
// the first correspondence, camera centers of the named images are matched
// to their ENU positions and the estimated similarity is applied to every
// pose and point. Image names missing from the model are rejected.
GeoRegistrationResult georegister(const Reconstruction& model,
                                  std::span<const GeoCorrespondence> refs);

// Applies a similarity transform to the whole model. Poses are rewritten so
// that projections (and hence keypoints and reprojection errors) are
// unchanged.
Reconstruction transform_model(const Reconstruction& model,
                               const SimilarityTransform& t);

}  // namespace signmap
