#pragma once

#include <array>

#include "rcmact/geometry.hpp"

namespace rcmact {

inline constexpr int kLandmarkCount = 3;  // black ring, orange ring, tool tip
inline constexpr int kFeatureDim = 2 * 2 * kLandmarkCount;

using FeatureVector = std::array<double, kFeatureDim>;
using LandmarkSet = std::array<Vec3, kLandmarkCount>;

// Two pinhole cameras looking straight down at the workspace with parallel
// optical axes, separated along x by `baseline` and mounted `height` above
// `center`. Camera axes: X = x - cx, Y = -(y - cy), Z = cz - z.
//
// Feature layout: camera 0 then camera 1; within a camera (u, v) for black
// ring, orange ring, tip.
struct StereoRig {
  double baseline = 10.0;
  double height = 30.0;
  double focal = 30.0;
  Vec3 center = Vec3::Zero();

  Vec3 camera_position(int camera) const;

  /// (u, v) = focal * (X, Y) / Z; throws BehindCamera when Z <= 0.
  std::array<double, 2> project(const Vec3& p, int camera) const;

  FeatureVector features(const LandmarkSet& landmarks) const;

  /// Inverse of `features` for a single landmark.
  Vec3 triangulate(double u0, double v0, double u1, double v1) const;

  LandmarkSet triangulate(const FeatureVector& f) const;
};

}  // namespace rcmact
