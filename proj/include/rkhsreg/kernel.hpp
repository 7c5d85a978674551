// rkhsreg: geometry-times-feature kernel.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "rkhsreg/core.hpp"

namespace rkhsreg {

/**
 * Kernel configuration shared by inner products, registration and training.
 *
 * use_tanh = false drops the feature factor and leaves the plain RBF, for
 * ablation runs.
 */
struct KernelParams {
  double lengthscale = 0.3;
  double prune_factor = 3.0;
  double ell_min = 0.01;
  double ell_max = 2.0;
  bool use_tanh = true;

  void validate() const {
    if (!(lengthscale > 0.0)) throw Error("kernel lengthscale must be positive");
    if (!(prune_factor > 0.0)) throw Error("kernel prune factor must be positive");
    if (!(ell_min > 0.0) || !(ell_max >= ell_min))
      throw Error("kernel lengthscale bounds are inconsistent");
  }

  double clamp_ell(double ell) const {
    if (ell < ell_min) return ell_min;
    if (ell > ell_max) return ell_max;
    return ell;
  }

  double prune_radius() const { return prune_factor * lengthscale; }
};

/// Squared-exponential factor exp(-|x - z|^2 / (2 ell^2)).
inline double rbf(const Vec3& x, const Vec3& z, double ell) {
  return std::exp(-(x - z).squaredNorm() / (2.0 * ell * ell));
}

/**
 * Full kernel between two featured points: RBF on coordinates times
 * tanh(1 + sum_c <f_c, g_c>) on channels. Channel counts must agree.
 * With channel norms below 1 the value stays in (0, tanh(1 + C)).
 */
inline double kernel_eval(const Vec3& x, const Vec3* fx, const Vec3& z, const Vec3* gz,
                          std::size_t channels, const KernelParams& params) {
  const double geo = rbf(x, z, params.lengthscale);
  if (!params.use_tanh) return geo;
  double s = 0.0;
  for (std::size_t c = 0; c < channels; ++c) s += fx[c].dot(gz[c]);
  return geo * std::tanh(1.0 + s);
}

}  // namespace rkhsreg
