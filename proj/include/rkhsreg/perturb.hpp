// rkhsreg: benchmark perturbations for the target cloud.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/point_cloud.hpp"

namespace rkhsreg {

/// Degradations applied to the target cloud only, in a fixed order.
struct PerturbationSpec {
  double noise_sigma = 0.0;    // std of Gaussian displacement along surface normals
  double outlier_ratio = 0.0;  // fraction of points pushed off-surface along their normals
  double crop_ratio = 0.0;     // fraction removed from one side along a random axis

  void validate() const {
    if (noise_sigma < 0.0) throw Error("noise sigma must be non-negative");
    if (outlier_ratio < 0.0 || outlier_ratio > 1.0) throw Error("outlier ratio must be in [0, 1]");
    if (crop_ratio < 0.0 || crop_ratio > 0.2) throw Error("crop ratio must be in [0, 0.2]");
  }
};

/**
 * Displaces each point along its estimated surface normal by N(0, sigma).
 * Degenerate neighbourhoods fall back to the +z direction.
 */
inline PointCloud add_normal_noise(const PointCloud& cloud, double sigma, int k, Rng& rng) {
  if (sigma <= 0.0) return cloud;
  cloud.require_nonempty();
  const NormalsResult nr = pca_normals(cloud, k);
  PointCloud out = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 n = nr.degenerate[i] ? Vec3(0.0, 0.0, 1.0) : nr.normals[i];
    out.points[i] += n * rng.normal(0.0, sigma);
  }
  return out;
}

/**
 * Displaces floor(ratio * n) randomly chosen points along their estimated
 * surface normals by Uniform(-range, range); the rest stay untouched. The
 * default range is sized for unit-diagonal clouds so displaced points land
 * clearly off the surface.
 */
inline PointCloud add_outliers(const PointCloud& cloud, double ratio, Rng& rng,
                               double range = 0.5, int k = 16) {
  if (ratio <= 0.0) return cloud;
  cloud.require_nonempty();
  const std::size_t n = cloud.size();
  const std::size_t count = static_cast<std::size_t>(ratio * static_cast<double>(n));
  if (count == 0) return cloud;
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < count && i < n; ++i) {
    const std::size_t j = i + rng.integer(n - i);
    std::swap(idx[i], idx[j]);
  }
  const NormalsResult nr = pca_normals(cloud, k);
  PointCloud out = cloud;
  for (std::size_t i = 0; i < count && i < n; ++i) {
    const int p = idx[i];
    const Vec3 dir = nr.degenerate[p] ? Vec3(0.0, 0.0, 1.0) : nr.normals[p];
    out.points[p] += dir * rng.uniform(-range, range);
  }
  return out;
}

/// Removes the top ratio fraction of points along the given direction.
inline PointCloud crop_along_direction(const PointCloud& cloud, double ratio, const Vec3& dir) {
  if (ratio <= 0.0) return cloud;
  cloud.require_nonempty();
  const std::size_t n = cloud.size();
  const std::size_t drop = static_cast<std::size_t>(ratio * static_cast<double>(n));
  if (drop == 0) return cloud;
  std::vector<std::pair<double, int>> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = {cloud.points[i].dot(dir), static_cast<int>(i)};
  std::sort(proj.begin(), proj.end());
  PointCloud out;
  const std::size_t keep = n - drop;
  out.points.reserve(keep);
  std::vector<int> kept;
  kept.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) kept.push_back(proj[i].second);
  std::sort(kept.begin(), kept.end());  // preserve original ordering
  for (int i : kept) {
    out.points.push_back(cloud.points[i]);
    if (!cloud.labels.empty()) out.labels.push_back(cloud.labels[i]);
  }
  return out;
}

inline PointCloud crop_random_side(const PointCloud& cloud, double ratio, Rng& rng) {
  if (ratio <= 0.0) return cloud;
  return crop_along_direction(cloud, ratio, rng.unit_vector());
}

/// Noise, then outliers, then crop; each stage consumes the rng in order.
inline PointCloud apply_perturbation(const PointCloud& cloud, const PerturbationSpec& spec,
                                     Rng& rng, int normal_k = 16) {
  PointCloud out = add_normal_noise(cloud, spec.noise_sigma, normal_k, rng);
  out = add_outliers(out, spec.outlier_ratio, rng);
  out = crop_random_side(out, spec.crop_ratio, rng);
  return out;
}

}  // namespace rkhsreg
