#include <catch2/catch_amalgamated.hpp>

#include "rkhsreg/features.hpp"
#include "rkhsreg/shapes.hpp"

#include "oracles.hpp"

using namespace rkhsreg;

namespace {

PointCloud ellipsoid_cloud(Rng& rng, int n) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i)
    cloud.points.push_back(rng.unit_vector().cwiseProduct(Vec3(1.0, 0.7, 0.45)));
  return cloud;
}

double max_feature_deviation(const FeatureCloud& a, const FeatureCloud& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    worst = std::max(worst, (a.points[i] - b.points[i]).norm());
  for (std::size_t i = 0; i < a.channels.size(); ++i)
    worst = std::max(worst, (a.channels[i] - b.channels[i]).norm());
  return worst;
}

}  // namespace

TEST_CASE("apply_pose_features rotates channels but never translates them", "[features]") {
  FeatureCloud fc;
  fc.points = {{1.0, 0.0, 0.0}};
  fc.channel_count = 1;
  fc.channels = {Vec3(0.0, 0.0, 1.0)};

  const Pose shift(Mat3::Identity(), Vec3(5.0, 0.0, 0.0));
  const FeatureCloud moved = apply_pose_features(shift, fc);
  CHECK(moved.points[0] == Vec3(6.0, 0.0, 0.0));
  CHECK(moved.channels[0] == Vec3(0.0, 0.0, 1.0));

  const Pose quarter(oracles::rotation_axis_angle(Vec3(EIGEN_PI / 2.0, 0.0, 0.0)), Vec3::Zero());
  const FeatureCloud rot = apply_pose_features(quarter, fc);
  CHECK((rot.channels[0] - Vec3(0.0, -1.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("handcrafted features on a plane give the plane normal", "[features]") {
  Rng rng(211);
  PointCloud cloud;
  for (int i = 0; i < 150; ++i)
    cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
  const FeatureCloud fc = handcrafted_features(cloud, 12);
  REQUIRE(fc.channel_count == 2);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < fc.size(); ++i) {
    // Channels scaled so the stacked two-channel feature has unit norm.
    CHECK(std::abs(std::abs(fc.channel_row(i)[0].z()) - inv_sqrt2) < 1e-9);
    CHECK(std::abs(fc.channel_row(i)[0].norm() - inv_sqrt2) < 1e-9);
    CHECK(std::abs(fc.channel_row(i)[1].norm() - inv_sqrt2) < 1e-9);
    CHECK(std::abs(fc.channel_row(i)[1].z()) < 1e-9);  // tangent stays in-plane
  }
}

TEST_CASE("handcrafted features support a single channel", "[features]") {
  Rng rng(213);
  const PointCloud cloud = ellipsoid_cloud(rng, 100);
  const FeatureCloud fc = handcrafted_features(cloud, 10, 1);
  CHECK(fc.channel_count == 1);
  CHECK(fc.channels.size() == cloud.size());
}

TEST_CASE("handcrafted features are equivariant", "[features]") {
  Rng rng(217);
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud cloud = ellipsoid_cloud(rng, 120);
    const Pose h = oracles::random_pose(rng, 180.0, 1.0);
    const FeatureCloud direct = handcrafted_features(apply_pose(h, cloud), 10);
    const FeatureCloud moved = apply_pose_features(h, handcrafted_features(cloud, 10));
    CHECK(max_feature_deviation(direct, moved) < 1e-6);
  }
}

TEST_CASE("vector-neuron nonlinearity keeps aligned channels", "[features]") {
  std::vector<Vec3> u = {Vec3(1.0, 0.0, 0.0)};
  vn_nonlinearity(u, {1.0}, 1);  // q = u, always aligned
  CHECK(u[0] == Vec3(1.0, 0.0, 0.0));
}

TEST_CASE("vector-neuron nonlinearity projects out the negative half-space", "[features]") {
  std::vector<Vec3> u = {Vec3(1.0, 0.0, 0.0)};
  vn_nonlinearity(u, {-1.0}, 1);  // q = -u, fully misaligned: projection removes everything
  CHECK(u[0].norm() < 1e-15);
}

TEST_CASE("vector-neuron nonlinearity is rotation equivariant", "[features]") {
  Rng rng(223);
  const int c = 4;
  std::vector<double> dirs(c * c);
  for (double& d : dirs) d = rng.normal();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> u(c);
    for (auto& v : u) v = rng.in_ball(2.0);
    const Mat3 r = oracles::rotation_axis_angle(rng.unit_vector() * rng.uniform(0.0, 3.0));
    std::vector<Vec3> u_rot(c);
    for (int i = 0; i < c; ++i) u_rot[i] = r * u[i];
    vn_nonlinearity(u, dirs, c);
    vn_nonlinearity(u_rot, dirs, c);
    for (int i = 0; i < c; ++i) CHECK((u_rot[i] - r * u[i]).norm() < 1e-9);
  }
}

TEST_CASE("encoder with zero weights produces zero channels", "[features]") {
  Rng rng(227);
  const PointCloud cloud = ellipsoid_cloud(rng, 60);
  EncoderWeights w = EncoderWeights::random({1, 4, 4}, 8, 3);
  for (auto& l : w.layers) {
    std::fill(l.w_self.begin(), l.w_self.end(), 0.0);
    std::fill(l.w_neigh.begin(), l.w_neigh.end(), 0.0);
  }
  const FeatureCloud fc = encoder_forward(cloud, w);
  for (const Vec3& ch : fc.channels) CHECK(ch.norm() == 0.0);
}

TEST_CASE("encoder output channels have norm below one", "[features]") {
  Rng rng(229);
  const PointCloud cloud = ellipsoid_cloud(rng, 80);
  const EncoderWeights w = EncoderWeights::random({1, 8, 8}, 8, 101);
  const FeatureCloud fc = encoder_forward(cloud, w);
  REQUIRE(fc.channel_count == 8);
  for (const Vec3& ch : fc.channels) CHECK(ch.norm() < 1.0);
}

TEST_CASE("encoder is equivariant under random rigid motions", "[features]") {
  Rng rng(233);
  for (int trial = 0; trial < 25; ++trial) {
    const PointCloud cloud = ellipsoid_cloud(rng, 100);
    const EncoderWeights w = EncoderWeights::random({1, 6, 6}, 10, 500 + trial);
    const Pose h = oracles::random_pose(rng, 180.0, 1.0);
    const FeatureCloud direct = encoder_forward(apply_pose(h, cloud), w);
    const FeatureCloud moved = apply_pose_features(h, encoder_forward(cloud, w));
    CHECK(max_feature_deviation(direct, moved) < 1e-5);
  }
}

TEST_CASE("encoder output is deterministic", "[features]") {
  Rng rng(239);
  const PointCloud cloud = ellipsoid_cloud(rng, 90);
  const EncoderWeights w = EncoderWeights::random({1, 8, 16, 16}, 16, 7);
  const FeatureCloud a = encoder_forward(cloud, w);
  const FeatureCloud b = encoder_forward(cloud, w);
  REQUIRE(a.channels.size() == b.channels.size());
  for (std::size_t i = 0; i < a.channels.size(); ++i) CHECK(a.channels[i] == b.channels[i]);
}

TEST_CASE("encoder commutes with point permutations", "[features]") {
  Rng rng(241);
  PointCloud cloud = ellipsoid_cloud(rng, 70);
  const EncoderWeights w = EncoderWeights::random({1, 4, 4}, 8, 11);
  const FeatureCloud base = encoder_forward(cloud, w);

  std::vector<int> perm(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::swap(perm[i], perm[i + rng.integer(perm.size() - i)]);
  PointCloud shuffled;
  for (int i : perm) shuffled.points.push_back(cloud.points[i]);
  const FeatureCloud out = encoder_forward(shuffled, w);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < base.channel_count; ++c)
      CHECK((out.channel_row(i)[c] - base.channel_row(perm[i])[c]).norm() < 1e-9);
  }
}

TEST_CASE("encoder passes labels through", "[features]") {
  Rng rng(251);
  PointCloud cloud = ellipsoid_cloud(rng, 40);
  cloud.labels.assign(cloud.size(), 2.5);
  const EncoderWeights w = EncoderWeights::random({1, 4, 4}, 8, 13);
  const FeatureCloud fc = encoder_forward(cloud, w);
  REQUIRE(fc.labels.size() == cloud.size());
  CHECK(fc.label(7) == 2.5);
}

TEST_CASE("encoder rejects clouds smaller than the neighbourhood", "[features]") {
  Rng rng(253);
  const PointCloud cloud = ellipsoid_cloud(rng, 10);
  const EncoderWeights w = EncoderWeights::random({1, 4, 4}, 16, 17);
  CHECK_THROWS_AS(encoder_forward(cloud, w), TooFewPointsError);
}

TEST_CASE("encoder weight shapes are validated", "[features]") {
  EncoderWeights w = EncoderWeights::random({1, 4, 4}, 8, 19);
  w.layers[1].c_in = 3;  // breaks the chain
  CHECK_THROWS_AS(w.validate(), ShapeMismatchError);
  CHECK_THROWS_AS(EncoderWeights::random({2, 4}, 8, 19), ShapeMismatchError);
}

TEST_CASE("channel mismatch is detected", "[features]") {
  FeatureCloud a, b;
  a.channel_count = 2;
  b.channel_count = 3;
  CHECK_THROWS_AS(a.require_channels_match(b), ChannelMismatchError);
}
