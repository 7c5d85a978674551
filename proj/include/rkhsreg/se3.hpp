// rkhsreg: rigid transforms and their exponential coordinates.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "rkhsreg/core.hpp"

namespace rkhsreg {

/// Tangent vector of SE(3): translational part rho, rotational part omega.
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& rho_in, const Vec3& omega_in) : rho(rho_in), omega(omega_in) {}

  static Twist Zero() { return {}; }

  Vec6 vector() const {
    Vec6 v;
    v << rho, omega;
    return v;
  }

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

  double norm() const { return std::sqrt(rho.squaredNorm() + omega.squaredNorm()); }

  Twist operator*(double s) const { return {rho * s, omega * s}; }
  Twist operator+(const Twist& o) const { return {rho + o.rho, omega + o.omega}; }
  Twist operator-() const { return {-rho, -omega}; }
};

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

/**
 * Rigid transform x -> R x + t with R in SO(3).
 *
 * Orthonormality is maintained by construction; long compose chains can be
 * re-projected with orthonormalized().
 */
class Pose {
 public:
  Pose() : r_(Mat3::Identity()), t_(Vec3::Zero()) {}
  Pose(const Mat3& r, const Vec3& t) : r_(r), t_(t) {}

  static Pose Identity() { return {}; }

  const Mat3& rotation() const { return r_; }
  const Vec3& translation() const { return t_; }

  Vec3 apply(const Vec3& x) const { return r_ * x + t_; }
  Vec3 rotate(const Vec3& v) const { return r_ * v; }

  Pose compose(const Pose& o) const { return {r_ * o.r_, r_ * o.t_ + t_}; }
  Pose operator*(const Pose& o) const { return compose(o); }

  Pose inverse() const {
    const Mat3 rt = r_.transpose();
    return {rt, -(rt * t_)};
  }

  /// Nearest rotation re-projection via the unit quaternion.
  Pose orthonormalized() const {
    Eigen::Quaterniond q(r_);
    q.normalize();
    return {q.toRotationMatrix(), t_};
  }

 private:
  Mat3 r_;
  Vec3 t_;
};

namespace detail {
inline constexpr double kSmallAngle = 1e-8;
}

/**
 * Exponential map se(3) -> SE(3).
 *
 * Rotation by Rodrigues' formula; the translation couples through the
 * standard V matrix. Below kSmallAngle both use second order series, which
 * keeps the map continuous across the branch.
 */
inline Pose se3_exp(const Twist& xi) {
  const Vec3& w = xi.omega;
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 wx = skew(w);
  const Mat3 wx2 = wx * wx;
  Mat3 r, v;
  if (theta < detail::kSmallAngle) {
    r = Mat3::Identity() + wx + 0.5 * wx2;
    v = Mat3::Identity() + 0.5 * wx + wx2 / 6.0;
  } else {
    const double a = std::sin(theta) / theta;
    // half-angle form avoids the 1 - cos cancellation
    const double sh = std::sin(0.5 * theta);
    const double b = 2.0 * sh * sh / theta2;
    const double c = theta < 1e-2 ? 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
                                  : (1.0 - a) / theta2;
    r = Mat3::Identity() + a * wx + b * wx2;
    v = Mat3::Identity() + b * wx + c * wx2;
  }
  return {r, v * xi.rho};
}

/**
 * Logarithm map SE(3) -> se(3).
 *
 * The angle comes from atan2 of the symmetric and antisymmetric parts, which
 * stays accurate down to zero. Throws AngleNearPiError when
 * trace(R) <= -1 + 1e-6, where the axis becomes numerically unobservable.
 */
inline Twist se3_log(const Pose& h) {
  const Mat3& r = h.rotation();
  const double tr = r.trace();
  if (tr <= -1.0 + 1e-6) throw AngleNearPiError();
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * vee.norm();
  const double cos_theta = 0.5 * (tr - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  const double theta2 = theta * theta;

  // theta / (2 sin theta), by series below the switch point
  const double factor =
      theta < 1e-4 ? 0.5 + theta2 / 12.0 : theta / (2.0 * std::sin(theta));
  const Vec3 w = factor * vee;
  const Mat3 wx = skew(w);

  // (1 - A / 2B) / theta^2 with A = sin(theta)/theta, B = (1-cos(theta))/theta^2
  double coef;
  if (theta < 1e-4) {
    coef = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / theta2;
    coef = (1.0 - a / (2.0 * b)) / theta2;
  }
  const Mat3 v_inv = Mat3::Identity() - 0.5 * wx + coef * (wx * wx);
  return {v_inv * h.translation(), w};
}

/// Geodesic rotation distance between two poses, in degrees.
inline double rotation_error_deg(const Pose& estimate, const Pose& truth) {
  const Mat3 rel = estimate.rotation() * truth.rotation().transpose();
  const Vec3 vee(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double s = 0.5 * vee.norm();
  const double c = 0.5 * (rel.trace() - 1.0);
  return std::atan2(s, c) * 180.0 / EIGEN_PI;
}

/// Translation part of estimate * truth^-1.
inline double translation_error(const Pose& estimate, const Pose& truth) {
  return (estimate * truth.inverse()).translation().norm();
}

}  // namespace rkhsreg
