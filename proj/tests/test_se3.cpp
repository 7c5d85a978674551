#include <catch2/catch_amalgamated.hpp>

#include "rkhsreg/se3.hpp"

#include "oracles.hpp"

using namespace rkhsreg;

TEST_CASE("exp of the zero twist is the identity", "[se3]") {
  const Pose h = se3_exp(Twist::Zero());
  CHECK(h.rotation().isApprox(Mat3::Identity(), 1e-15));
  CHECK(h.translation().norm() == 0.0);
}

TEST_CASE("exp of a quarter turn about z", "[se3]") {
  const Pose h = se3_exp(Twist(Vec3::Zero(), Vec3(0.0, 0.0, EIGEN_PI / 2.0)));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(h.rotation().isApprox(expected, 1e-12));
  CHECK(h.translation().norm() < 1e-15);
}

TEST_CASE("exp of a pure translation moves without rotating", "[se3]") {
  const Pose h = se3_exp(Twist(Vec3(1.0, 2.0, 3.0), Vec3::Zero()));
  CHECK(h.rotation().isApprox(Mat3::Identity(), 1e-15));
  CHECK(h.translation().isApprox(Vec3(1.0, 2.0, 3.0), 1e-15));
}

TEST_CASE("exp matches an independent axis-angle construction", "[se3]") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 omega = rng.unit_vector() * rng.uniform(0.0, 3.0);
    const Pose h = se3_exp(Twist(Vec3::Zero(), omega));
    CHECK(h.rotation().isApprox(oracles::rotation_axis_angle(omega), 1e-12));
  }
}

TEST_CASE("log inverts exp for angles below pi", "[se3]") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Twist xi(rng.in_ball(2.0), rng.unit_vector() * rng.uniform(0.0, 3.0));
    const Twist back = se3_log(se3_exp(xi));
    CHECK((back.vector() - xi.vector()).norm() < 1e-7);
  }
}

TEST_CASE("log handles the domain edge just under pi", "[se3]") {
  const Twist xi(Vec3(0.1, -0.2, 0.3), Vec3(0.0, EIGEN_PI - 2e-3, 0.0));
  const Twist back = se3_log(se3_exp(xi));
  CHECK((back.vector() - xi.vector()).norm() < 1e-7);
}

TEST_CASE("log throws at rotations too close to pi", "[se3]") {
  const Pose h = Pose(oracles::rotation_axis_angle(Vec3(EIGEN_PI, 0.0, 0.0)), Vec3::Zero());
  CHECK_THROWS_AS(se3_log(h), AngleNearPiError);
}

TEST_CASE("small-angle branch agrees with the closed form", "[se3]") {
  for (const double theta : {1e-12, 1e-9, 9e-9, 1.1e-8, 1e-7}) {
    const Twist xi(Vec3(0.4, 0.1, -0.3), Vec3(theta, 0.0, 0.0));
    const Pose h = se3_exp(xi);
    CHECK(h.rotation().isApprox(oracles::rotation_axis_angle(xi.omega), 1e-14));
    const Twist back = se3_log(h);
    CHECK((back.vector() - xi.vector()).norm() < 1e-12);
  }
}

TEST_CASE("compose and inverse cancel", "[se3]") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose h = oracles::random_pose(rng, 179.0, 2.0);
    const Pose e = h * h.inverse();
    CHECK(e.rotation().isApprox(Mat3::Identity(), 1e-9));
    CHECK(e.translation().norm() < 1e-9);
  }
}

TEST_CASE("compose is a homomorphism on sample points", "[se3]") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose a = oracles::random_pose(rng, 179.0, 1.0);
    const Pose b = oracles::random_pose(rng, 179.0, 1.0);
    const Vec3 p = rng.in_ball(2.0);
    CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
  }
}

TEST_CASE("pose application preserves distances", "[se3]") {
  Rng rng(17);
  const Pose h = oracles::random_pose(rng, 179.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 p = rng.in_ball(2.0), q = rng.in_ball(2.0);
    CHECK(std::abs((h.apply(p) - h.apply(q)).norm() - (p - q).norm()) < 1e-12);
  }
}

TEST_CASE("rotation error of identical poses is zero", "[se3]") {
  Rng rng(19);
  const Pose h = oracles::random_pose(rng, 120.0, 1.0);
  CHECK(rotation_error_deg(h, h) < 1e-9);
  CHECK(translation_error(h, h) < 1e-12);
}

TEST_CASE("rotation error reports a known angle", "[se3]") {
  const Pose truth;
  const Pose quarter(oracles::rotation_axis_angle(Vec3(0.0, EIGEN_PI / 2.0, 0.0)), Vec3::Zero());
  CHECK(rotation_error_deg(quarter, truth) == Catch::Approx(90.0).margin(1e-9));

  const Pose small(oracles::rotation_axis_angle(Vec3(0.3, 0.0, 0.0)), Vec3(5.0, 0.0, 0.0));
  CHECK(rotation_error_deg(small, truth) == Catch::Approx(17.18873385).margin(1e-3));
}

TEST_CASE("rotation error is insensitive to translation", "[se3]") {
  Rng rng(23);
  const Pose truth = oracles::random_pose(rng, 90.0, 1.0);
  Pose est(truth.rotation(), truth.translation() + Vec3(0.5, 0.0, 0.0));
  CHECK(rotation_error_deg(est, truth) < 1e-9);
  CHECK(translation_error(est, truth) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("left-multiplicative updates accumulate like matrix products", "[se3]") {
  Rng rng(29);
  Pose h;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int i = 0; i < 200; ++i) {
    const Twist xi(rng.in_ball(0.05), rng.in_ball(0.05));
    const Pose step = se3_exp(xi);
    h = step * h;
    Eigen::Matrix4d sm = Eigen::Matrix4d::Identity();
    sm.topLeftCorner<3, 3>() = step.rotation();
    sm.topRightCorner<3, 1>() = step.translation();
    m = sm * m;
  }
  CHECK(h.rotation().isApprox(m.topLeftCorner<3, 3>(), 1e-10));
  CHECK((h.translation() - m.topRightCorner<3, 1>()).norm() < 1e-10);
  // orthonormality survives the chain
  CHECK((h.rotation() * h.rotation().transpose() - Mat3::Identity()).norm() < 1e-9);
}
