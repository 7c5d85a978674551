#include <catch2/catch_amalgamated.hpp>

#include "rkhsreg/kernel.hpp"
#include "rkhsreg/rkhs.hpp"

#include "oracles.hpp"

using namespace rkhsreg;

namespace {

FeatureCloud single_point(const Vec3& p, std::size_t channels = 0) {
  FeatureCloud fc;
  fc.points = {p};
  fc.channel_count = channels;
  fc.channels.assign(channels, Vec3::Zero());
  return fc;
}

}  // namespace

TEST_CASE("rbf is one at zero distance and exp(-1) at ell*sqrt(2)", "[rkhs]") {
  CHECK(rbf(Vec3(1, 2, 3), Vec3(1, 2, 3), 0.5) == 1.0);
  const double ell = 0.37;
  const Vec3 x(0, 0, 0), z(ell * std::sqrt(2.0), 0, 0);
  CHECK(rbf(x, z, ell) == Catch::Approx(0.36787944117144233).epsilon(1e-12));
}

TEST_CASE("rbf at ten lengthscales is negligibly small", "[rkhs]") {
  const double ell = 0.2;
  const Vec3 x(0, 0, 0), z(10.0 * ell, 0, 0);
  CHECK(rbf(x, z, ell) == Catch::Approx(1.9287498479639178e-22).epsilon(1e-9));
}

TEST_CASE("kernel with zero channels reduces to rbf times tanh(1)", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.5;
  const Vec3 p(0.1, 0.2, 0.3);
  CHECK(kernel_eval(p, nullptr, p, nullptr, 0, params) ==
        Catch::Approx(0.7615941559557649).epsilon(1e-12));
}

TEST_CASE("kernel with one aligned unit channel gives tanh(2)", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.5;
  const Vec3 p(0.0, 0.0, 0.0);
  const Vec3 f(0.0, 0.0, 1.0);
  CHECK(kernel_eval(p, &f, p, &f, 1, params) == Catch::Approx(0.9640275800758169).epsilon(1e-12));
}

TEST_CASE("kernel is symmetric", "[rkhs]") {
  Rng rng(301);
  KernelParams params;
  params.lengthscale = 0.3;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 x = rng.in_ball(1.0), z = rng.in_ball(1.0);
    Vec3 f[2] = {rng.in_ball(0.9), rng.in_ball(0.9)};
    Vec3 g[2] = {rng.in_ball(0.9), rng.in_ball(0.9)};
    CHECK(kernel_eval(x, f, z, g, 2, params) == kernel_eval(z, g, x, f, 2, params));
  }
}

TEST_CASE("kernel stays inside its bound for subunit channels", "[rkhs]") {
  Rng rng(303);
  KernelParams params;
  params.lengthscale = 0.4;
  for (int trial = 0; trial < 200; ++trial) {
    Vec3 f[3], g[3];
    for (int c = 0; c < 3; ++c) {
      f[c] = rng.unit_vector() * rng.uniform(0.0, 0.99);
      g[c] = rng.unit_vector() * rng.uniform(0.0, 0.99);
    }
    const double k = kernel_eval(rng.in_ball(1.0), f, rng.in_ball(1.0), g, 3, params);
    CHECK(std::abs(k) < std::tanh(4.0));
  }
  // A single subunit channel cannot push the feature factor negative.
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 f = rng.unit_vector() * rng.uniform(0.0, 0.99);
    const Vec3 g = rng.unit_vector() * rng.uniform(0.0, 0.99);
    CHECK(kernel_eval(rng.in_ball(1.0), &f, rng.in_ball(1.0), &g, 1, params) > 0.0);
  }
}

TEST_CASE("rbf-only mode drops the feature factor", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.5;
  params.use_tanh = false;
  const Vec3 p(0.0, 0.0, 0.0);
  const Vec3 f(0.0, 0.0, 0.9);
  CHECK(kernel_eval(p, &f, p, &f, 1, params) == 1.0);
}

TEST_CASE("cross inner product of two coincident single points", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.3;
  const FeatureCloud x = single_point(Vec3(0.5, 0.0, 0.0));
  CHECK(cross_inner_product(x, x, Pose::Identity(), params) ==
        Catch::Approx(std::tanh(1.0)).epsilon(1e-12));
}

TEST_CASE("pruning drops pairs beyond the prune radius", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.2;
  params.prune_factor = 3.0;
  const FeatureCloud x = single_point(Vec3::Zero());
  const FeatureCloud z = single_point(Vec3(10.0 * params.lengthscale, 0.0, 0.0));
  CHECK(cross_inner_product(x, z, Pose::Identity(), params) == 0.0);
}

TEST_CASE("empty clouds give a zero inner product", "[rkhs]") {
  KernelParams params;
  FeatureCloud empty;
  const FeatureCloud x = single_point(Vec3::Zero());
  CHECK(cross_inner_product(x, empty, Pose::Identity(), params) == 0.0);
  CHECK(self_inner_product(empty, params) == 0.0);
}

TEST_CASE("pruned sums match brute force at a generous prune factor", "[rkhs]") {
  Rng rng(307);
  KernelParams params;
  params.lengthscale = 0.25;
  params.prune_factor = 6.0;
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureCloud x = oracles::random_feature_cloud(rng, 100, 2, 0.5);
    const FeatureCloud z = oracles::random_feature_cloud(rng, 100, 2, 0.5);
    const Pose h = oracles::random_pose(rng, 20.0, 0.1);
    CHECK(cross_inner_product(x, z, h, params) ==
          Catch::Approx(oracles::brute_cross(x, z, h, params)).margin(1e-6));
    CHECK(self_inner_product(x, params) ==
          Catch::Approx(oracles::brute_self(x, params)).margin(1e-6));
  }
}

TEST_CASE("labels scale the inner product bilinearly", "[rkhs]") {
  Rng rng(311);
  KernelParams params;
  FeatureCloud x = oracles::random_feature_cloud(rng, 20, 2, 0.3);
  FeatureCloud z = oracles::random_feature_cloud(rng, 20, 2, 0.3);
  const double base = cross_inner_product(x, z, Pose::Identity(), params);
  x.labels.assign(x.size(), 2.0);
  z.labels.assign(z.size(), 3.0);
  CHECK(cross_inner_product(x, z, Pose::Identity(), params) ==
        Catch::Approx(6.0 * base).epsilon(1e-12));
}

TEST_CASE("distance of a cloud to itself is zero", "[rkhs]") {
  Rng rng(313);
  KernelParams params;
  params.lengthscale = 0.3;
  const FeatureCloud x = oracles::random_feature_cloud(rng, 80, 2, 0.5);
  CHECK(rkhs_distance(x, x, Pose::Identity(), params) < 1e-9);
}

TEST_CASE("two-point distance matches the closed form", "[rkhs]") {
  KernelParams params;
  params.lengthscale = 0.3;
  params.prune_factor = 100.0;
  const double r = 0.4;
  const FeatureCloud x = single_point(Vec3::Zero());
  const FeatureCloud z = single_point(Vec3(r, 0.0, 0.0));
  const double expected =
      2.0 * std::tanh(1.0) * (1.0 - std::exp(-r * r / (2.0 * params.lengthscale * params.lengthscale)));
  CHECK(rkhs_distance(x, z, Pose::Identity(), params) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("distance is non-negative on random subunit features", "[rkhs]") {
  Rng rng(317);
  KernelParams params;
  params.lengthscale = 0.35;
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureCloud x = oracles::random_feature_cloud(rng, 40, 2, 0.4);
    const FeatureCloud z = oracles::random_feature_cloud(rng, 40, 2, 0.4);
    const Pose h = oracles::random_pose(rng, 90.0, 0.3);
    CHECK(rkhs_distance(x, z, h, params) >= 0.0);
  }
}

TEST_CASE("pre-transforming the target equals passing the pose", "[rkhs]") {
  Rng rng(331);
  KernelParams params;
  params.lengthscale = 0.3;
  const FeatureCloud x = oracles::random_feature_cloud(rng, 50, 2, 0.5);
  const FeatureCloud z = oracles::random_feature_cloud(rng, 50, 2, 0.5);
  const Pose h = oracles::random_pose(rng, 60.0, 0.2);
  const double with_pose = rkhs_distance(x, z, h, params);
  const double pre = rkhs_distance(x, apply_pose_features(h, z), Pose::Identity(), params);
  CHECK(with_pose == Catch::Approx(pre).margin(1e-9));
}

TEST_CASE("self inner product is invariant under rigid motion", "[rkhs]") {
  Rng rng(337);
  KernelParams params;
  params.lengthscale = 0.3;
  const FeatureCloud z = oracles::random_feature_cloud(rng, 60, 2, 0.5);
  const Pose h = oracles::random_pose(rng, 150.0, 0.7);
  CHECK(self_inner_product(z, params) ==
        Catch::Approx(self_inner_product(apply_pose_features(h, z), params)).margin(1e-9));
}

TEST_CASE("channel mismatch in inner products throws", "[rkhs]") {
  Rng rng(341);
  const FeatureCloud x = oracles::random_feature_cloud(rng, 10, 2);
  const FeatureCloud z = oracles::random_feature_cloud(rng, 10, 3);
  KernelParams params;
  CHECK_THROWS_AS(cross_inner_product(x, z, Pose::Identity(), params), ChannelMismatchError);
}

TEST_CASE("bad kernel parameters are rejected", "[rkhs]") {
  KernelParams params;
  params.lengthscale = -0.1;
  CHECK_THROWS_AS(params.validate(), Error);
  params.lengthscale = 0.3;
  params.ell_min = 0.5;
  params.ell_max = 0.2;
  CHECK_THROWS_AS(params.validate(), Error);
  params.ell_min = 0.01;
  params.ell_max = 2.0;
  CHECK(params.clamp_ell(5.0) == 2.0);
  CHECK(params.clamp_ell(0.001) == 0.01);
  CHECK(params.clamp_ell(0.5) == 0.5);
}
