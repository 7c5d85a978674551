// rkhsreg: point cloud container and neighbourhood geometry.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/se3.hpp"

namespace rkhsreg {

/// Points with optional per-point scalar labels (default weight 1).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> labels;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  double label(std::size_t i) const { return labels.empty() ? 1.0 : labels[i]; }

  void require_nonempty() const {
    if (points.empty()) throw EmptyCloudError();
  }

  Vec3 centroid() const {
    require_nonempty();
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : points) c += p;
    return c / static_cast<double>(points.size());
  }

  void bounds(Vec3& lo, Vec3& hi) const {
    require_nonempty();
    lo = hi = points[0];
    for (const Vec3& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }

  double bbox_diagonal() const {
    Vec3 lo, hi;
    bounds(lo, hi);
    return (hi - lo).norm();
  }
};

/// Record of a centring-and-scaling so results can be mapped back.
struct NormalizeInfo {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;
};

/// Centre on the centroid and scale the bounding-box diagonal to 1.
inline NormalizeInfo normalize_unit_diagonal(PointCloud& cloud) {
  NormalizeInfo info;
  info.centroid = cloud.centroid();
  const double diag = cloud.bbox_diagonal();
  info.scale = diag > 1e-12 ? diag : 1.0;
  for (Vec3& p : cloud.points) p = (p - info.centroid) / info.scale;
  return info;
}

inline PointCloud apply_pose(const Pose& h, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(h.apply(p));
  out.labels = cloud.labels;
  return out;
}

/**
 * Farthest point downsampling.
 *
 * Starts from index 0, then greedily adds the point farthest from the chosen
 * set; ties resolve to the lower index. Returns the cloud unchanged (copy)
 * when n >= size.
 */
inline PointCloud farthest_point_downsample(const PointCloud& cloud, std::size_t n) {
  cloud.require_nonempty();
  if (n >= cloud.size()) return cloud;
  const std::size_t total = cloud.size();
  std::vector<double> best_d2(total);
  std::vector<int> picked;
  picked.reserve(n);
  picked.push_back(0);
  for (std::size_t i = 0; i < total; ++i)
    best_d2[i] = (cloud.points[i] - cloud.points[0]).squaredNorm();
  while (picked.size() < n) {
    int arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < total; ++i) {
      if (best_d2[i] > best) {
        best = best_d2[i];
        arg = static_cast<int>(i);
      }
    }
    picked.push_back(arg);
    const Vec3& np = cloud.points[arg];
    for (std::size_t i = 0; i < total; ++i) {
      const double d2 = (cloud.points[i] - np).squaredNorm();
      if (d2 < best_d2[i]) best_d2[i] = d2;
    }
  }
  PointCloud out;
  out.points.reserve(n);
  if (!cloud.labels.empty()) out.labels.reserve(n);
  for (int idx : picked) {
    out.points.push_back(cloud.points[idx]);
    if (!cloud.labels.empty()) out.labels.push_back(cloud.labels[idx]);
  }
  return out;
}

/**
 * Self-excluded k-nearest-neighbour table, row i sorted nearest first.
 * Throws TooFewPointsError unless size > k.
 */
inline std::vector<std::vector<int>> knn_indices(const PointCloud& cloud, int k) {
  if (static_cast<int>(cloud.size()) <= k)
    throw TooFewPointsError("knn_indices requires more points than neighbours (n=" +
                            std::to_string(cloud.size()) + ", k=" + std::to_string(k) + ")");
  const KdTree tree(cloud.points);
  std::vector<std::vector<int>> out(cloud.size());
  parallel_for(cloud.size(), [&](std::size_t i) {
    std::vector<KdTree::Hit> hits;
    tree.knn(cloud.points[i], k, static_cast<int>(i), hits);
    out[i].reserve(hits.size());
    for (const auto& h : hits) out[i].push_back(h.index);
  });
  return out;
}

/**
 * Per-point PCA frames from k-neighbourhoods.
 *
 * normal is the least-variance eigenvector, tangent the middle one; both are
 * flipped to point away from the cloud centroid. Neighbourhoods whose
 * covariance drops below rank 2 are flagged degenerate and left as zero.
 */
struct LocalFrames {
  std::vector<Vec3> normal;
  std::vector<Vec3> tangent;
  std::vector<std::uint8_t> degenerate;
};

inline LocalFrames local_surface_frames(const PointCloud& cloud, int k) {
  const auto nbr = knn_indices(cloud, k);
  const Vec3 center = cloud.centroid();
  LocalFrames out;
  out.normal.assign(cloud.size(), Vec3::Zero());
  out.tangent.assign(cloud.size(), Vec3::Zero());
  out.degenerate.assign(cloud.size(), 0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    Vec3 mean = cloud.points[i];
    for (int j : nbr[i]) mean += cloud.points[j];
    mean /= static_cast<double>(nbr[i].size() + 1);
    Mat3 cov = Mat3::Zero();
    {
      const Vec3 d = cloud.points[i] - mean;
      cov += d * d.transpose();
    }
    for (int j : nbr[i]) {
      const Vec3 d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 evals = eig.eigenvalues();  // ascending
    if (evals[1] <= 1e-12 * std::max(evals[2], 1e-300)) {
      out.degenerate[i] = 1;
      return;
    }
    Vec3 n = eig.eigenvectors().col(0);
    Vec3 t = eig.eigenvectors().col(1);
    const Vec3 outward = cloud.points[i] - center;
    if (n.dot(outward) < 0.0) n = -n;
    if (t.dot(outward) < 0.0) t = -t;
    out.normal[i] = n;
    out.tangent[i] = t;
  });
  return out;
}

/// Oriented unit normals; degenerate flag set where the caller should substitute.
struct NormalsResult {
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> degenerate;
};

inline NormalsResult pca_normals(const PointCloud& cloud, int k) {
  LocalFrames frames = local_surface_frames(cloud, k);
  return {std::move(frames.normal), std::move(frames.degenerate)};
}

}  // namespace rkhsreg
