#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "rcmact/calibration.hpp"
#include "rcmact/error.hpp"
#include "rcmact/expert.hpp"
#include "rcmact/simulator.hpp"
#include "support.hpp"

using namespace rcmact;
using rcmact::testing::random_transform;
using rcmact::testing::transformed;

namespace {

// Median translation error of a numpy Kabsch estimator at sigma = 0.01 mm,
// from tests/oracles/calibration_noise_oracle.py (200k trials).
constexpr double kNoiseOracleMedianMm = 0.009064;

const FiducialTriad kReference = WorldConfig{}.fiducial_reference;

FiducialTriad triad(Vec3 a, Vec3 b, Vec3 c) { return FiducialTriad{{a, b, c}}; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("triad_conditioning") {
  CHECK(triad_conditioning(triad({0, 0, 0}, {1, 0, 0}, {0, 1, 0})) == doctest::Approx(1.0));
  CHECK(triad_conditioning(triad({0, 0, 0}, {1, 0, 0}, {2, 0, 0})) == 0.0);
  CHECK(triad_conditioning(triad({0, 0, 0}, {0, 0, 0}, {2, 0, 0})) == 0.0);

  double prev = 2.0;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const double c = triad_conditioning(triad({0, 0, 0}, {1, 0, 0}, {1, eps, 0}));
    CHECK(c < prev);
    prev = c;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("estimate_transform examples") {
  const CalibrationResult same = estimate_transform(kReference, kReference);
  CHECK((same.transform.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(same.transform.translation.norm() < 1e-12);
  CHECK(same.residual < 1e-12);

  RigidTransform shift;
  shift.translation = Vec3(1, 2, 3);
  const CalibrationResult moved = estimate_transform(kReference, transformed(kReference, shift));
  CHECK((moved.transform.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK((moved.transform.translation - Vec3(1, 2, 3)).norm() < 1e-12);

  RigidTransform truth;
  truth.rotation = rotation_from_axis_angle(Vec3(0, 0, 1), std::numbers::pi / 2);
  truth.translation = Vec3(0.5, 0, 0);
  const CalibrationResult rot = estimate_transform(kReference, transformed(kReference, truth));
  CHECK((rot.transform.rotation - truth.rotation).norm() < 1e-9);
  CHECK((rot.transform.translation - truth.translation).norm() < 1e-9);
}

TEST_CASE("estimate_transform errors") {
  const FiducialTriad line = triad({0, 0, 0}, {1, 0, 0}, {2, 0, 0});
  CHECK(code_of([&] { estimate_transform(line, kReference); }) == ErrorCode::DegenerateTriad);
  CHECK(code_of([&] { estimate_transform(kReference, line); }) == ErrorCode::DegenerateTriad);


  // Three points are coplanar, so even a mirror image is reached by a proper
  // rotation (a half turn about an in-plane axis).
  FiducialTriad mirrored = kReference;
  for (int i = 0; i < 3; ++i) mirrored[i].x() = -mirrored[i].x();
  mirrored[0].z() += 0.01;
  const CalibrationResult cal = estimate_transform(kReference, mirrored);
  CHECK(cal.transform.rotation.determinant() == doctest::Approx(1.0));
  CHECK(cal.transform.is_valid());
}

TEST_CASE("best_fit_rotation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  int reflections = 0;
  for (int i = 0; i < 200; ++i) {
    // Rank 2, as for three centered points: always a proper rotation.
    const Vec3 a(n(rng), n(rng), n(rng)), b(n(rng), n(rng), n(rng));
    const Vec3 c(n(rng), n(rng), n(rng)), d(n(rng), n(rng), n(rng));
    const Mat3 planar = a * c.transpose() + b * d.transpose();
    const Mat3 r = detail::best_fit_rotation(planar);
    CHECK(orthonormality_error(r) < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));

    // Full rank: a mirror-image optimum is refused.
    Mat3 h;
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y) h(x, y) = n(rng);
    try {
      const double det = detail::best_fit_rotation(h).determinant();
      CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ReflectionRequired);
      CHECK(h.determinant() < 0.0);
      ++reflections;
    }
  }
  CHECK(reflections > 0);
}

TEST_CASE("noiseless recovery over random motions") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20000; ++i) {
    const RigidTransform truth = random_transform(rng, 30.0 * std::numbers::pi / 180.0, 5.0);
    const CalibrationResult cal = estimate_transform(kReference, transformed(kReference, truth));
    REQUIRE((cal.transform.rotation - truth.rotation).norm() < 1e-9);
    REQUIRE((cal.transform.translation - truth.translation).norm() < 1e-9);
  }
}

TEST_CASE("equivariance under a common translation") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    const RigidTransform truth = random_transform(rng, 0.5, 5.0);
    FiducialTriad obs = transformed(kReference, truth);
    // Small perturbation so the least-squares path is exercised too.
    obs[0].z() += 1e-3 * (i % 2);
    const Vec3 shift = rcmact::testing::random_unit(rng) * 3.0;
    FiducialTriad ref2 = kReference, obs2 = obs;
    for (int j = 0; j < 3; ++j) {
      ref2[j] += shift;
      obs2[j] += shift;
    }
    const CalibrationResult a = estimate_transform(kReference, obs);
    const CalibrationResult b = estimate_transform(ref2, obs2);
    CHECK((a.transform.rotation - b.transform.rotation).norm() < 1e-9);
    // obs + s = R (ref + s) + d'  =>  d' = d + s - R s
    const Vec3 expected = a.transform.translation + shift - a.transform.rotation * shift;
    CHECK((b.transform.translation - expected).norm() < 1e-9);
  }
}

TEST_CASE("noise robustness against the frozen oracle") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> errs;
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform truth = random_transform(rng, 30.0 * std::numbers::pi / 180.0, 5.0);
    FiducialTriad obs = transformed(kReference, truth);
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 3; ++c) obs[j](c) += noise(rng);
    errs.push_back((estimate_transform(kReference, obs).transform.translation - truth.translation).norm());
  }
  std::nth_element(errs.begin(), errs.begin() + 500, errs.end());
  CHECK(errs[500] <= 1.5 * kNoiseOracleMedianMm);
}

TEST_CASE("parallel batch matches the serial loop") {
  std::mt19937_64 rng(8);
  std::vector<FiducialTriad> observed;
  for (int i = 0; i < 300; ++i) observed.push_back(transformed(kReference, random_transform(rng, 0.5, 5.0)));
  const auto par = estimate_transforms(kReference, observed);
  const auto ser = estimate_transforms_serial(kReference, observed);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].transform.rotation == ser[i].transform.rotation);
    CHECK(par[i].transform.translation == ser[i].transform.translation);
  }
}

TEST_CASE("realign_point") {
  CalibrationResult id;
  CHECK(realign_point(id, Vec3(1, 2, 3)) == Vec3(1, 2, 3));

  CalibrationResult shift;
  shift.transform.translation = Vec3(1, 2, 3);
  CHECK(realign_point(shift, Vec3(1, 2, 3)) == Vec3::Zero());

  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    CalibrationResult cal;
    cal.transform = random_transform(rng, std::numbers::pi, 5.0);
    const Vec3 q = rcmact::testing::random_unit(rng) * 7.0;
    CHECK((realign_point(cal, apply(cal.transform, q)) - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("realign_episode") {
  WorldConfig cfg;
  const EpisodeRecord raw = generate_episode(cfg, 11, 0.0);

  SUBCASE("identity calibration only flips the flag") {
    const EpisodeRecord out = realign_episode(CalibrationResult{}, raw);
    CHECK(out.calibrated);
    CHECK(out.observations == raw.observations);
    CHECK(out.actions == raw.actions);
    CHECK(code_of([&] { realign_episode(CalibrationResult{}, out); }) == ErrorCode::AlreadyCalibrated);
  }

  SUBCASE("pure translation") {
    CalibrationResult cal;
    cal.transform.translation = Vec3(1, 0, 0);
    const EpisodeRecord out = realign_episode(cal, raw);
    for (int t = 0; t < raw.length(); ++t) {
      CHECK(out.actions(t, 0) == doctest::Approx(raw.actions(t, 0) - 1.0).epsilon(1e-14));
      CHECK(out.actions(t, 1) == raw.actions(t, 1));
      CHECK(out.observations(t, kProprioOffset) ==
            doctest::Approx(raw.observations(t, kProprioOffset) - 1.0).epsilon(1e-14));
    }
  }

  SUBCASE("true drift gives the drift-free episode") {
    WorldConfig flat = cfg;
    flat.drift_translation_max = 0.0;
    flat.drift_rotation_max = 0.0;
    const EpisodeRecord reference = realign_episode(CalibrationResult{}, generate_episode(flat, 11, 0.0));
    CalibrationResult cal;
    cal.transform = raw.drift_truth;
    const EpisodeRecord out = realign_episode(cal, raw);
    REQUIRE(out.length() == reference.length());
    CHECK(rcmact::testing::max_abs_diff(out.actions.leftCols(3), reference.actions.leftCols(3)) < 1e-9);
    CHECK(rcmact::testing::max_abs_diff(out.observations.rightCols(kProprioDim).leftCols(3),
                                        reference.observations.rightCols(kProprioDim).leftCols(3)) < 1e-9);
    CHECK(rcmact::testing::max_abs_diff(out.observations.leftCols(kFeatureDim),
                                        reference.observations.leftCols(kFeatureDim)) < 1e-9);

    // Identity realignment after a real one changes nothing.
    EpisodeRecord again = out;
    again.calibrated = false;
    const EpisodeRecord twice = realign_episode(CalibrationResult{}, again);
    CHECK(twice.observations == out.observations);
    CHECK(twice.actions == out.actions);
  }
}
