#include "rcmact/stereo.hpp"

#include "rcmact/error.hpp"

namespace rcmact {

Vec3 StereoRig::camera_position(int camera) const {
  const double offset = camera == 0 ? -0.5 * baseline : 0.5 * baseline;
  return center + Vec3(offset, 0.0, height);
}

std::array<double, 2> StereoRig::project(const Vec3& p, int camera) const {
  const Vec3 c = camera_position(camera);
  const double x = p.x() - c.x();
  const double y = -(p.y() - c.y());
  const double z = c.z() - p.z();
  if (!(z > 0.0)) throw Error(ErrorCode::BehindCamera, "landmark is not in front of camera");
  return {focal * x / z, focal * y / z};
}

FeatureVector StereoRig::features(const LandmarkSet& landmarks) const {
  FeatureVector f{};
  for (int cam = 0; cam < 2; ++cam) {
    for (int i = 0; i < kLandmarkCount; ++i) {
      const auto uv = project(landmarks[i], cam);
      f[cam * 2 * kLandmarkCount + 2 * i] = uv[0];
      f[cam * 2 * kLandmarkCount + 2 * i + 1] = uv[1];
    }
  }
  return f;
}

Vec3 StereoRig::triangulate(double u0, double v0, double u1, double v1) const {
  // u0 - u1 = focal * baseline / Z for cameras offset along x.
  const double disparity = u0 - u1;
  if (!(disparity > 0.0)) throw Error(ErrorCode::BehindCamera, "non-positive stereo disparity");
  const double z = focal * baseline / disparity;
  const Vec3 c0 = camera_position(0);
  const double v = 0.5 * (v0 + v1);
  return {c0.x() + u0 * z / focal, c0.y() - v * z / focal, c0.z() - z};
}

LandmarkSet StereoRig::triangulate(const FeatureVector& f) const {
  LandmarkSet out;
  constexpr int stride = 2 * kLandmarkCount;
  for (int i = 0; i < kLandmarkCount; ++i) {
    out[i] = triangulate(f[2 * i], f[2 * i + 1], f[stride + 2 * i], f[stride + 2 * i + 1]);
  }
  return out;
}

}  // namespace rcmact
