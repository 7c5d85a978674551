// rkhsreg: point-to-point ICP baseline.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/se3.hpp"

namespace rkhsreg {

struct IcpConfig {
  int max_iters = 100;
  double tol = 1e-8;  // stop when the mean residual changes less than this
};

struct IcpResult {
  Pose pose;
  int iterations = 0;
  bool converged = false;
  double mean_residual = 0.0;
};

/**
 * Classic nearest-neighbour ICP aligning Z onto X, same pose convention as
 * register_clouds. Each sweep associates every moved target point with its
 * nearest source point and solves the closed-form orthogonal update with a
 * reflection guard. A rank-deficient cross-covariance ends the loop with
 * converged = false.
 */
inline IcpResult icp_register(const PointCloud& x, const PointCloud& z,
                              const IcpConfig& config = {}) {
  x.require_nonempty();
  z.require_nonempty();
  const KdTree tree(x.points);
  const std::size_t m = z.size();

  IcpResult result;
  Pose h;
  double prev_residual = std::numeric_limits<double>::infinity();

  std::vector<KdTree::Hit> hit;
  std::vector<Vec3> moved(m);
  std::vector<int> assoc(m);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    for (std::size_t j = 0; j < m; ++j) moved[j] = h.apply(z.points[j]);

    double residual = 0.0;
    Vec3 zbar = Vec3::Zero(), xbar = Vec3::Zero();
    for (std::size_t j = 0; j < m; ++j) {
      tree.knn(moved[j], 1, -1, hit);
      assoc[j] = hit[0].index;
      residual += std::sqrt(hit[0].d2);
      zbar += moved[j];
      xbar += x.points[assoc[j]];
    }
    residual /= static_cast<double>(m);
    zbar /= static_cast<double>(m);
    xbar /= static_cast<double>(m);

    Mat3 cov = Mat3::Zero();
    for (std::size_t j = 0; j < m; ++j)
      cov += (moved[j] - zbar) * (x.points[assoc[j]] - xbar).transpose();

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()[2] < 1e-12 * std::max(svd.singularValues()[0], 1e-300)) {
      result.converged = false;
      result.mean_residual = residual;
      break;
    }
    Mat3 r_upd = svd.matrixV() * svd.matrixU().transpose();
    if (r_upd.determinant() < 0.0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      r_upd = svd.matrixV() * flip * svd.matrixU().transpose();
    }
    const Vec3 t_upd = xbar - r_upd * zbar;
    h = Pose(r_upd, t_upd) * h;
    ++result.iterations;

    result.mean_residual = residual;
    if (std::abs(prev_residual - residual) < config.tol) {
      result.converged = true;
      break;
    }
    prev_residual = residual;
  }
  result.pose = h;
  return result;
}

}  // namespace rkhsreg
