// rkhsreg: inner products between clouds embedded in the kernel's RKHS.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/features.hpp"
#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/kernel.hpp"
#include "rkhsreg/se3.hpp"

namespace rkhsreg {

/// Value and first derivatives of the alignment objective.
struct ObjectiveGradient {
  double value = 0.0;
  Twist dxi;     // left-multiplicative twist gradient at the evaluation pose
  double dell = 0.0;
};

namespace detail {

struct PairTerms {
  double k_geo;    // RBF factor
  double t_feat;   // tanh factor (1 when the feature factor is disabled)
  double tp_feat;  // its derivative in s
};

inline PairTerms pair_terms(double rho2, double s, double ell, bool use_tanh) {
  PairTerms out;
  out.k_geo = std::exp(-rho2 / (2.0 * ell * ell));
  if (use_tanh) {
    out.t_feat = std::tanh(1.0 + s);
    out.tp_feat = 1.0 - out.t_feat * out.t_feat;
  } else {
    out.t_feat = 1.0;
    out.tp_feat = 0.0;
  }
  return out;
}

inline double channel_dot(const Vec3* f, const Vec3* g, std::size_t c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c; ++i) s += f[i].dot(g[i]);
  return s;
}

/// Deterministic sum of per-chunk partials, combined in chunk order.
template <typename Acc, typename ChunkFn>
Acc chunked_sum(std::size_t n, std::size_t chunk, ChunkFn&& fn) {
  if (n == 0) return Acc{};
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  std::vector<Acc> partial(num_chunks);
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    fn(partial[c], b, e);
  });
  Acc total{};
  for (const Acc& p : partial) total.add(p);
  return total;
}

struct ScalarAcc {
  double v = 0.0;
  void add(const ScalarAcc& o) { v += o.v; }
};

struct CrossAcc {
  double value = 0.0;
  double dell = 0.0;
  Vec3 drho = Vec3::Zero();
  Vec3 domega = Vec3::Zero();
  void add(const CrossAcc& o) {
    value += o.value;
    dell += o.dell;
    drho += o.drho;
    domega += o.domega;
  }
};

/// Transformed view of one target point: position and rotated channels.
struct MovedPoint {
  Vec3 p;
  Vec3 g[EncoderLayer::kMaxWidth];
};

inline void move_point(const Pose& pose, const FeatureCloud& z, std::size_t j, MovedPoint& out) {
  out.p = pose.apply(z.points[j]);
  const Vec3* row = z.channel_row(j);
  for (std::size_t c = 0; c < z.channel_count; ++c) out.g[c] = pose.rotate(row[c]);
}

/**
 * Compact-support window applied to the RBF inside the prune radius R:
 * the Wendland C2 function win(u) = (1-u)^4 (4u+1), u = rho/R. It reaches
 * zero with zero slope at R, so a windowed pruned sum is C1 in the pose and
 * in ell even as pairs enter and leave the support (R = prune_factor * ell
 * moves with ell).
 *
 * This particular window is positive definite on R^3, so the windowed RBF
 * (a product of positive-definite kernels) keeps the cross correlation of a
 * cloud against itself maximal at superposition. A truncation polynomial
 * without that property  — e.g. (1-u^2)^2, or a hard cutoff — leaves enough
 * weight on mid-range pairs that the feature factor's curvature can overcome
 * the geometric restoring force on dense flat-faced shapes, producing spurious
 * objective minima a few degrees away from the true pose.
 *
 * Both derivative channels share one combined factor:
 *   d(K*win)/d(rho^2) = -(K / (2 ell^2)) * [win + 20 (1-u)^3 ell^2/R^2]
 *   d(K*win)/d(ell)   =  (K rho^2/ell^3) * [win + 20 (1-u)^3 ell^2/R^2]
 * The registration optimizer uses the window; the public inner products keep
 * the plain truncated sums (windowed = false).
 */
struct WindowTerms {
  double win;   // multiplies the RBF value
  double comb;  // multiplies the RBF inside both derivatives
};

inline WindowTerms window_terms(double rho2, double radius, double ell, bool windowed) {
  if (!windowed) return {1.0, 1.0};
  const double u2 = rho2 / (radius * radius);
  if (u2 >= 1.0) return {0.0, 0.0};
  const double u = std::sqrt(u2);
  const double a = 1.0 - u;
  const double a3 = a * a * a;
  const double win = a3 * a * (4.0 * u + 1.0);
  return {win, win + 20.0 * a3 * ell * ell / (radius * radius)};
}

/**
 * Fused cross term: sum over target points of kernel values against all
 * source points within the prune radius. kd-tree lookups per target point;
 * chunked over targets for deterministic parallel sums.
 */
inline double cross_value_fused(const FeatureCloud& x, const KdTree& tree, const FeatureCloud& z,
                                const Pose& pose, double ell, double radius, bool use_tanh,
                                bool windowed = false) {
  const std::size_t channels = x.channel_count;
  const ScalarAcc total = chunked_sum<ScalarAcc>(z.size(), 64, [&](ScalarAcc& acc, std::size_t b, std::size_t e) {
    std::vector<int> hits;
    MovedPoint m;
    for (std::size_t j = b; j < e; ++j) {
      move_point(pose, z, j, m);
      tree.radius(m.p, radius, hits);
      if (hits.empty()) continue;
      const double cz = z.label(j);
      for (int i : hits) {
        const double rho2 = (x.points[i] - m.p).squaredNorm();
        const double s = use_tanh ? channel_dot(x.channel_row(i), m.g, channels) : 0.0;
        const PairTerms t = pair_terms(rho2, s, ell, use_tanh);
        const WindowTerms w = window_terms(rho2, radius, ell, windowed);
        acc.v += x.label(i) * cz * t.k_geo * w.win * t.t_feat;
      }
    }
  });
  return total.v;
}

inline CrossAcc cross_gradient_fused(const FeatureCloud& x, const KdTree& tree, const FeatureCloud& z,
                                     const Pose& pose, double ell, double radius, bool use_tanh,
                                     bool windowed = false) {
  const std::size_t channels = x.channel_count;
  const double inv_ell2 = 1.0 / (ell * ell);
  const double inv_ell3 = inv_ell2 / ell;
  return chunked_sum<CrossAcc>(z.size(), 64, [&](CrossAcc& acc, std::size_t b, std::size_t e) {
    std::vector<int> hits;
    MovedPoint m;
    for (std::size_t j = b; j < e; ++j) {
      move_point(pose, z, j, m);
      tree.radius(m.p, radius, hits);
      if (hits.empty()) continue;
      const double cz = z.label(j);
      for (int i : hits) {
        const Vec3 r = x.points[i] - m.p;
        const double rho2 = r.squaredNorm();
        const Vec3* fx = x.channel_row(i);
        const double s = use_tanh ? channel_dot(fx, m.g, channels) : 0.0;
        const PairTerms t = pair_terms(rho2, s, ell, use_tanh);
        const WindowTerms wt = window_terms(rho2, radius, ell, windowed);
        const double c = x.label(i) * cz;
        const double ck_comb = c * t.k_geo * wt.comb * t.t_feat;
        acc.value += c * t.k_geo * wt.win * t.t_feat;
        acc.dell += ck_comb * rho2 * inv_ell3;
        acc.drho += (ck_comb * inv_ell2) * r;
        Vec3 w = (ck_comb * inv_ell2) * m.p.cross(r);
        if (use_tanh) {
          Vec3 gf = Vec3::Zero();
          for (std::size_t cc = 0; cc < channels; ++cc) gf += m.g[cc].cross(fx[cc]);
          w += (c * t.k_geo * wt.win * t.tp_feat) * gf;
        }
        acc.domega += w;
      }
    }
  });
}

/// Exact self pair list within a radius (unordered pairs, i < i').
inline std::vector<std::pair<int, int>> self_pairs(const FeatureCloud& fc, double radius) {
  const KdTree tree(fc.points);
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> hits;
  for (std::size_t i = 0; i < fc.size(); ++i) {
    tree.radius(fc.points[i], radius, hits);
    for (int j : hits)
      if (j > static_cast<int>(i)) pairs.emplace_back(static_cast<int>(i), j);
  }
  return pairs;
}

struct SelfAcc {
  double value = 0.0;
  double dell = 0.0;
  void add(const SelfAcc& o) {
    value += o.value;
    dell += o.dell;
  }
};

/// Diagonal of the self term: rho = 0, so it carries no ell dependence.
inline double self_diagonal(const FeatureCloud& fc, bool use_tanh) {
  double v = 0.0;
  for (std::size_t i = 0; i < fc.size(); ++i) {
    const double c = fc.label(i) * fc.label(i);
    if (use_tanh) {
      const Vec3* f = fc.channel_row(i);
      v += c * std::tanh(1.0 + channel_dot(f, f, fc.channel_count));
    } else {
      v += c;
    }
  }
  return v;
}

inline SelfAcc self_sum(const FeatureCloud& fc, const std::vector<std::pair<int, int>>& pairs,
                        double ell, bool use_tanh) {
  const std::size_t channels = fc.channel_count;
  const double inv_ell3 = 1.0 / (ell * ell * ell);
  SelfAcc off = chunked_sum<SelfAcc>(pairs.size(), 4096, [&](SelfAcc& acc, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const auto [i, j] = pairs[p];
      const double rho2 = (fc.points[i] - fc.points[j]).squaredNorm();
      const double s =
          use_tanh ? channel_dot(fc.channel_row(i), fc.channel_row(j), channels) : 0.0;
      const PairTerms t = pair_terms(rho2, s, ell, use_tanh);
      const double ckt = 2.0 * fc.label(i) * fc.label(j) * t.k_geo * t.t_feat;
      acc.value += ckt;
      acc.dell += ckt * rho2 * inv_ell3;
    }
  });
  off.value += self_diagonal(fc, use_tanh);
  return off;
}

}  // namespace detail

/**
 * <f_X, f_hZ> with the target cloud moved by pose. Pairs farther apart than
 * prune_factor * lengthscale are dropped.
 */
inline double cross_inner_product(const FeatureCloud& x, const FeatureCloud& z, const Pose& pose,
                                  const KernelParams& params) {
  x.require_channels_match(z);
  params.validate();
  if (x.empty() || z.empty()) return 0.0;
  const KdTree tree(x.points);
  return detail::cross_value_fused(x, tree, z, pose, params.lengthscale, params.prune_radius(),
                                   params.use_tanh);
}

/// <f, f> under the same pruning rule; pose-free.
inline double self_inner_product(const FeatureCloud& fc, const KernelParams& params) {
  params.validate();
  if (fc.empty()) return 0.0;
  const auto pairs = detail::self_pairs(fc, params.prune_radius());
  return detail::self_sum(fc, pairs, params.lengthscale, params.use_tanh).value;
}

/**
 * Squared RKHS distance between the embeddings of X and the moved Z.
 * Non-negative up to roundoff; clamped at zero.
 */
inline double rkhs_distance(const FeatureCloud& x, const FeatureCloud& z, const Pose& pose,
                            const KernelParams& params) {
  const double d = self_inner_product(x, params) + self_inner_product(z, params) -
                   2.0 * cross_inner_product(x, z, pose, params);
  return d < 0.0 ? 0.0 : d;
}

/**
 * Alignment objective over a support frozen at construction.
 *
 * The pair sets (cross pairs under the construction pose, self pairs) are
 * fixed, so value() and gradient() are smooth in (pose, ell) and central
 * finite differences of value() match gradient() to first order. Holds
 * references to the feature clouds; keep them alive.
 */
class ObjectiveContext {
 public:
  ObjectiveContext(const FeatureCloud& x, const FeatureCloud& z, const Pose& support_pose,
                   const KernelParams& params)
      : x_(x), z_(z), params_(params) {
    x.require_channels_match(z);
    params.validate();
    const double radius = params.prune_radius();
    const KdTree tree(x.points);
    cross_off_.assign(z.size() + 1, 0);
    std::vector<int> hits;
    for (std::size_t j = 0; j < z.size(); ++j) {
      tree.radius(support_pose.apply(z.points[j]), radius, hits);
      cross_idx_.insert(cross_idx_.end(), hits.begin(), hits.end());
      cross_off_[j + 1] = static_cast<int>(cross_idx_.size());
    }
    self_x_ = detail::self_pairs(x, radius);
    self_z_ = detail::self_pairs(z, radius);
  }

  double value(const Pose& pose, double ell) const {
    const bool ut = params_.use_tanh;
    const detail::SelfAcc sx = detail::self_sum(x_, self_x_, ell, ut);
    const detail::SelfAcc sz = detail::self_sum(z_, self_z_, ell, ut);
    return sx.value + sz.value - 2.0 * cross(pose, ell).value;
  }

  ObjectiveGradient gradient(const Pose& pose, double ell) const {
    const bool ut = params_.use_tanh;
    const detail::SelfAcc sx = detail::self_sum(x_, self_x_, ell, ut);
    const detail::SelfAcc sz = detail::self_sum(z_, self_z_, ell, ut);
    const detail::CrossAcc c = cross(pose, ell);
    ObjectiveGradient g;
    g.value = sx.value + sz.value - 2.0 * c.value;
    g.dxi = Twist(-2.0 * c.drho, -2.0 * c.domega);
    g.dell = sx.dell + sz.dell - 2.0 * c.dell;
    return g;
  }

 private:
  detail::CrossAcc cross(const Pose& pose, double ell) const {
    const std::size_t channels = x_.channel_count;
    const bool ut = params_.use_tanh;
    const double inv_ell2 = 1.0 / (ell * ell);
    const double inv_ell3 = inv_ell2 / ell;
    return detail::chunked_sum<detail::CrossAcc>(
        z_.size(), 64, [&](detail::CrossAcc& acc, std::size_t b, std::size_t e) {
          detail::MovedPoint m;
          for (std::size_t j = b; j < e; ++j) {
            detail::move_point(pose, z_, j, m);
            const double cz = z_.label(j);
            for (int p = cross_off_[j]; p < cross_off_[j + 1]; ++p) {
              const int i = cross_idx_[p];
              const Vec3 r = x_.points[i] - m.p;
              const double rho2 = r.squaredNorm();
              const Vec3* fx = x_.channel_row(i);
              const double s = ut ? detail::channel_dot(fx, m.g, channels) : 0.0;
              const detail::PairTerms t = detail::pair_terms(rho2, s, ell, ut);
              const double c = x_.label(i) * cz;
              const double ckt = c * t.k_geo * t.t_feat;
              acc.value += ckt;
              acc.dell += ckt * rho2 * inv_ell3;
              acc.drho += (ckt * inv_ell2) * r;
              Vec3 w = (ckt * inv_ell2) * m.p.cross(r);
              if (ut) {
                Vec3 gf = Vec3::Zero();
                for (std::size_t cc = 0; cc < channels; ++cc) gf += m.g[cc].cross(fx[cc]);
                w += (c * t.k_geo * t.tp_feat) * gf;
              }
              acc.domega += w;
            }
          }
        });
  }

  const FeatureCloud& x_;
  const FeatureCloud& z_;
  KernelParams params_;
  std::vector<int> cross_off_, cross_idx_;
  std::vector<std::pair<int, int>> self_x_, self_z_;
};

/**
 * Objective value and analytic derivatives at (pose, params.lengthscale),
 * over the support induced by that evaluation point.
 */
inline ObjectiveGradient objective_and_gradient(const FeatureCloud& x, const FeatureCloud& z,
                                                const Pose& pose, const KernelParams& params) {
  const ObjectiveContext ctx(x, z, pose, params);
  return ctx.gradient(pose, params.lengthscale);
}

}  // namespace rkhsreg
