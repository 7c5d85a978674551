#include <catch2/catch_amalgamated.hpp>

#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/point_cloud.hpp"

#include "oracles.hpp"

using namespace rkhsreg;

TEST_CASE("kdtree knn matches a brute-force scan", "[geometry]") {
  Rng rng(101);
  const PointCloud cloud = oracles::random_cloud(rng, 200);
  const KdTree tree(cloud.points);
  std::vector<KdTree::Hit> hits;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 q = rng.in_ball(1.5);
    tree.knn(q, 16, -1, hits);
    std::vector<int> got;
    for (const auto& h : hits) got.push_back(h.index);
    CHECK(got == oracles::brute_knn(cloud.points, q, 16, -1));
  }
}

TEST_CASE("kdtree radius query matches a brute-force scan", "[geometry]") {
  Rng rng(103);
  const PointCloud cloud = oracles::random_cloud(rng, 300);
  const KdTree tree(cloud.points);
  std::vector<int> hits;
  for (const double r : {0.05, 0.3, 1.0, 5.0}) {
    const Vec3 q = rng.in_ball(1.0);
    tree.radius(q, r, hits);
    CHECK(hits == oracles::brute_radius(cloud.points, q, r));
  }
}

TEST_CASE("kdtree resolves equal distances to the lower index", "[geometry]") {
  std::vector<Vec3> pts = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  const KdTree tree(pts);
  std::vector<KdTree::Hit> hits;
  tree.knn(Vec3::Zero(), 2, -1, hits);
  CHECK(hits[0].index == 0);
  CHECK(hits[1].index == 1);
}

TEST_CASE("knn_indices on three collinear points", "[geometry]") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  const auto nbr = knn_indices(cloud, 1);
  CHECK(nbr[0] == std::vector<int>{1});
  CHECK(nbr[1] == std::vector<int>{0});
  CHECK(nbr[2] == std::vector<int>{1});
}

TEST_CASE("duplicated points are each other's nearest neighbours", "[geometry]") {
  PointCloud cloud;
  cloud.points = {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {2, 2, 2}};
  const auto nbr = knn_indices(cloud, 1);
  CHECK(nbr[0] == std::vector<int>{1});
  CHECK(nbr[1] == std::vector<int>{0});
}

TEST_CASE("knn_indices needs more points than neighbours", "[geometry]") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(knn_indices(cloud, 2), TooFewPointsError);
  CHECK_THROWS_AS(knn_indices(cloud, 5), TooFewPointsError);
}

TEST_CASE("knn_indices matches brute force on a larger cloud", "[geometry]") {
  Rng rng(107);
  const PointCloud cloud = oracles::random_cloud(rng, 500);
  const auto nbr = knn_indices(cloud, 8);
  for (const std::size_t i : {0ul, 123ul, 499ul})
    CHECK(nbr[i] == oracles::brute_knn(cloud.points, cloud.points[i], 8, static_cast<int>(i)));
}

TEST_CASE("farthest point downsampling picks the diagonal of a square", "[geometry]") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  const PointCloud two = farthest_point_downsample(cloud, 2);
  REQUIRE(two.size() == 2);
  CHECK(two.points[0] == Vec3(0, 0, 0));
  CHECK(two.points[1] == Vec3(1, 1, 0));  // max-min distance from the seed corner
}

TEST_CASE("farthest point downsampling with n >= size copies the cloud", "[geometry]") {
  Rng rng(109);
  const PointCloud cloud = oracles::random_cloud(rng, 10);
  const PointCloud same = farthest_point_downsample(cloud, 10);
  REQUIRE(same.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(same.points[i] == cloud.points[i]);
}

TEST_CASE("farthest point sets spread wider than random picks", "[geometry]") {
  Rng rng(113);
  const PointCloud cloud = oracles::random_cloud(rng, 1000);
  const PointCloud fps = farthest_point_downsample(cloud, 100);
  auto min_pairwise = [](const PointCloud& c) {
    double best = 1e300;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        best = std::min(best, (c.points[i] - c.points[j]).norm());
    return best;
  };
  const double fps_gap = min_pairwise(fps);
  for (int draw = 0; draw < 5; ++draw) {
    PointCloud rand_pick;
    for (int i = 0; i < 100; ++i)
      rand_pick.points.push_back(cloud.points[rng.integer(cloud.size())]);
    CHECK(fps_gap >= min_pairwise(rand_pick));
  }
}

TEST_CASE("fps on an empty cloud throws", "[geometry]") {
  PointCloud empty;
  CHECK_THROWS_AS(farthest_point_downsample(empty, 4), EmptyCloudError);
}

TEST_CASE("pca normals of a plane point along z", "[geometry]") {
  Rng rng(127);
  PointCloud cloud;
  for (int i = 0; i < 200; ++i)
    cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
  const NormalsResult nr = pca_normals(cloud, 12);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    REQUIRE(nr.degenerate[i] == 0);
    CHECK(std::abs(std::abs(nr.normals[i].z()) - 1.0) < 1e-9);
    CHECK(std::abs(nr.normals[i].norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("pca normals of a sphere are nearly radial", "[geometry]") {
  Rng rng(131);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i) cloud.points.push_back(rng.unit_vector());
  const NormalsResult nr = pca_normals(cloud, 16);
  for (std::size_t i = 0; i < cloud.size(); i += 37) {
    REQUIRE(nr.degenerate[i] == 0);
    const Vec3 radial = cloud.points[i].normalized();
    const double cosine = std::abs(nr.normals[i].dot(radial));
    CHECK(std::acos(std::min(1.0, cosine)) * 180.0 / EIGEN_PI < 5.0);
  }
}

TEST_CASE("oriented pca normals are equivariant", "[geometry]") {
  Rng rng(137);
  PointCloud cloud;
  for (int i = 0; i < 300; ++i) {
    const Vec3 s = rng.unit_vector();
    cloud.points.push_back(s.cwiseProduct(Vec3(1.0, 0.7, 0.4)));
  }
  const Pose h = oracles::random_pose(rng, 170.0, 0.8);
  const NormalsResult base = pca_normals(cloud, 16);
  const NormalsResult moved = pca_normals(apply_pose(h, cloud), 16);
  for (std::size_t i = 0; i < cloud.size(); i += 11) {
    REQUIRE(base.degenerate[i] == moved.degenerate[i]);
    if (base.degenerate[i]) continue;
    CHECK((moved.normals[i] - h.rotate(base.normals[i])).norm() < 1e-6);
  }
}

TEST_CASE("collinear neighbourhoods are flagged degenerate", "[geometry]") {
  PointCloud cloud;
  for (int i = 0; i < 30; ++i) cloud.points.push_back({0.1 * i, 0.0, 0.0});
  const NormalsResult nr = pca_normals(cloud, 8);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(nr.degenerate[i] == 1);
    CHECK(nr.normals[i].norm() == 0.0);
  }
}

TEST_CASE("coincident points are flagged degenerate", "[geometry]") {
  PointCloud cloud;
  for (int i = 0; i < 20; ++i) cloud.points.push_back({1.0, 2.0, 3.0});
  const NormalsResult nr = pca_normals(cloud, 5);
  for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(nr.degenerate[i] == 1);
}

TEST_CASE("normalization centres and scales to unit diagonal", "[geometry]") {
  Rng rng(139);
  PointCloud cloud = oracles::random_cloud(rng, 100, 7.0);
  const NormalizeInfo info = normalize_unit_diagonal(cloud);
  CHECK(cloud.centroid().norm() < 1e-9);
  CHECK(cloud.bbox_diagonal() == Catch::Approx(1.0).margin(1e-12));
  CHECK(info.scale > 1.0);
}
