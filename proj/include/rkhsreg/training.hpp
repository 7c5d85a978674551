// rkhsreg: unsupervised curriculum training of the feature encoder.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/features.hpp"
#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/kernel.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/registration.hpp"
#include "rkhsreg/rkhs.hpp"
#include "rkhsreg/se3.hpp"

namespace rkhsreg {

/**
 * Holder for a pose that training must not consume.
 *
 * Every read goes through reveal(), which bumps a process-wide counter; tests
 * assert the counter moves only with validation and reporting.
 */
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(const Pose& p) : pose_(p) {}

  const Pose& reveal() const {
    read_count().fetch_add(1, std::memory_order_relaxed);
    return pose_;
  }

  void set(const Pose& p) { pose_ = p; }

  static std::atomic<std::uint64_t>& read_count() {
    static std::atomic<std::uint64_t> count{0};
    return count;
  }

 private:
  Pose pose_;
};

struct TrainingPair {
  PointCloud x;
  PointCloud z;
  GroundTruth truth;
};

/**
 * Draws a registration problem from one shape: two independent random
 * subsamples, the target moved by the inverse of a random pose whose rotation
 * angle is uniform in [min_angle_deg, max_angle_deg] with a uniform axis.
 * Passing min == max pins the angle exactly (benchmark cells); the default
 * lower bound of 0 gives the curriculum's uniform draw up to the stage angle.
 */
inline TrainingPair make_training_pair(const PointCloud& cloud, double max_angle_deg,
                                       std::size_t n_points, double translation_radius,
                                       Rng& rng, double min_angle_deg = 0.0) {
  cloud.require_nonempty();
  auto subsample = [&](const PointCloud& src) {
    if (src.size() <= n_points) return src;
    std::vector<int> idx(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) idx[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < n_points; ++i) {
      const std::size_t j = i + rng.integer(src.size() - i);
      std::swap(idx[i], idx[j]);
    }
    PointCloud out;
    out.points.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) out.points.push_back(src.points[idx[i]]);
    if (!src.labels.empty()) {
      out.labels.reserve(n_points);
      for (std::size_t i = 0; i < n_points; ++i) out.labels.push_back(src.labels[idx[i]]);
    }
    return out;
  };

  TrainingPair pair;
  pair.x = subsample(cloud);
  PointCloud z0 = subsample(cloud);
  const double angle = rng.uniform(min_angle_deg, max_angle_deg) * EIGEN_PI / 180.0;
  const Vec3 omega = rng.unit_vector() * angle;
  const Vec3 t = translation_radius > 0.0 ? rng.in_ball(translation_radius) : Vec3::Zero();
  const Pose truth(se3_exp(Twist(Vec3::Zero(), omega)).rotation(), t);
  pair.z = apply_pose(truth.inverse(), z0);
  pair.truth = GroundTruth(truth);
  return pair;
}

/// Gradient container; shapes mirror EncoderWeights.
using EncoderGradients = EncoderWeights;

inline EncoderGradients zero_like(const EncoderWeights& w) {
  EncoderGradients g = w;
  for (auto& l : g.layers) {
    std::fill(l.w_self.begin(), l.w_self.end(), 0.0);
    std::fill(l.w_neigh.begin(), l.w_neigh.end(), 0.0);
    std::fill(l.directions.begin(), l.directions.end(), 0.0);
  }
  return g;
}

inline void grad_axpy(EncoderWeights& dst, double a, const EncoderGradients& src) {
  for (std::size_t li = 0; li < dst.layers.size(); ++li) {
    auto& d = dst.layers[li];
    const auto& s = src.layers[li];
    for (std::size_t i = 0; i < d.w_self.size(); ++i) d.w_self[i] += a * s.w_self[i];
    for (std::size_t i = 0; i < d.w_neigh.size(); ++i) d.w_neigh[i] += a * s.w_neigh[i];
    for (std::size_t i = 0; i < d.directions.size(); ++i) d.directions[i] += a * s.directions[i];
  }
}

inline void grad_scale(EncoderGradients& g, double s) {
  for (auto& l : g.layers) {
    for (double& v : l.w_self) v *= s;
    for (double& v : l.w_neigh) v *= s;
    for (double& v : l.directions) v *= s;
  }
}

inline double grad_norm(const EncoderGradients& g) {
  double n2 = 0.0;
  for (const auto& l : g.layers) {
    for (double v : l.w_self) n2 += v * v;
    for (double v : l.w_neigh) n2 += v * v;
    for (double v : l.directions) n2 += v * v;
  }
  return std::sqrt(n2);
}

namespace detail {

/// dL/dy for y = f / (1 + |f|), given upstream v = dL/dout.
inline Vec3 normalize_backward(const Vec3& f, const Vec3& v) {
  const double r = f.norm();
  if (r < 1e-12) return v;
  const double a = 1.0 + r;
  return v / a - f * (f.dot(v) / (r * a * a));
}

/**
 * Backward through one vector-neuron layer for one point.
 * u: preactivations, q: direction vectors, dy: upstream per output channel.
 * Produces du (overwrites dy slot) and accumulates dD.
 */
inline void vn_backward_point(const Vec3* u, const Vec3* q, const double* directions, int c_out,
                              Vec3* dy_to_du, double* d_directions) {
  Vec3 dq[EncoderLayer::kMaxWidth];
  Vec3 du[EncoderLayer::kMaxWidth];
  for (int c = 0; c < c_out; ++c) {
    const Vec3& v = dy_to_du[c];
    const double qn2 = q[c].squaredNorm();
    const double dot = u[c].dot(q[c]);
    if (qn2 < 1e-16 || dot >= 0.0) {
      du[c] = v;
      dq[c] = Vec3::Zero();
      continue;
    }
    const double qv = q[c].dot(v);
    du[c] = v - q[c] * (qv / qn2);
    dq[c] = -(u[c] * qv + v * dot) / qn2 + q[c] * (2.0 * dot * qv / (qn2 * qn2));
  }
  // q_c = sum_d D[d][c] u_d
  for (int c = 0; c < c_out; ++c) {
    if (dq[c].squaredNorm() == 0.0) continue;
    for (int d = 0; d < c_out; ++d) {
      const std::size_t w = static_cast<std::size_t>(d) * c_out + c;
      d_directions[w] += u[d].dot(dq[c]);
      du[d] += directions[w] * dq[c];
    }
  }
  for (int c = 0; c < c_out; ++c) dy_to_du[c] = du[c];
}

/**
 * Backward through the encoder given dL/d(output features).
 * Accumulates into grads; returns nothing. Single-threaded by design: the
 * scatter into neighbour gradients is race-free and deterministic.
 */
inline void encoder_backward(const EncoderWeights& weights, const EncoderTrace& trace,
                             std::vector<Vec3> d_out, EncoderGradients& grads) {
  const std::size_t n = trace.neighbors.size();
  // normalization
  std::vector<Vec3> dy(n * weights.layers.back().c_out);
  {
    const int c_out = weights.layers.back().c_out;
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < c_out; ++c) {
        const std::size_t idx = i * c_out + c;
        dy[idx] = normalize_backward(trace.prenorm[idx], d_out[idx]);
      }
  }

  for (int li = static_cast<int>(weights.layers.size()) - 1; li >= 0; --li) {
    const EncoderLayer& layer = weights.layers[li];
    const LayerTrace& lt = trace.layers[li];
    auto& glayer = grads.layers[li];
    const int c_in = layer.c_in, c_out = layer.c_out;

    // nonlinearity: dy -> du in place
    for (std::size_t p = 0; p < n; ++p)
      vn_backward_point(lt.pre.data() + p * c_out, lt.dirs.data() + p * c_out,
                        layer.directions.data(), c_out, dy.data() + p * c_out,
                        glayer.directions.data());

    // graph convolution
    std::vector<Vec3> dx(n * c_in, Vec3::Zero());
    for (std::size_t p = 0; p < n; ++p) {
      const Vec3* fin = lt.input.data() + p * c_in;
      const Vec3* du = dy.data() + p * c_out;
      const auto& nbr = trace.neighbors[p];
      Vec3 agg[EncoderLayer::kMaxWidth];
      for (int d = 0; d < c_in; ++d) agg[d] = Vec3::Zero();
      for (int j : nbr) {
        const Vec3* fj = lt.input.data() + static_cast<std::size_t>(j) * c_in;
        for (int d = 0; d < c_in; ++d) agg[d] += fj[d] - fin[d];
      }
      const double deg = static_cast<double>(nbr.size());
      for (int d = 0; d < c_in; ++d) {
        Vec3 wsum = Vec3::Zero();
        Vec3 wksum = Vec3::Zero();
        for (int c = 0; c < c_out; ++c) {
          const std::size_t w = static_cast<std::size_t>(d) * c_out + c;
          glayer.w_self[w] += fin[d].dot(du[c]);
          glayer.w_neigh[w] += agg[d].dot(du[c]);
          wsum += layer.w_self[w] * du[c];
          wksum += layer.w_neigh[w] * du[c];
        }
        dx[p * c_in + d] += wsum - deg * wksum;
        for (int j : nbr) dx[static_cast<std::size_t>(j) * c_in + d] += wksum;
      }
    }
    dy = std::move(dx);
  }
}

}  // namespace detail

struct EncoderBackpropResult {
  double loss = 0.0;  // pair-count averaged RKHS distance
  EncoderGradients grad;
};

/**
 * Reverse-mode gradient of the alignment loss with respect to every encoder
 * weight, at a fixed estimated pose and lengthscale.
 *
 * The loss is the RKHS distance between the encoded clouds divided by the
 * product of their sizes; all three inner-product terms contribute through
 * their tanh factors. Pair supports depend on point positions only, so they
 * are constants with respect to the weights.
 */
inline EncoderBackpropResult encoder_gradient(const EncoderWeights& weights, const PointCloud& x,
                                              const PointCloud& z, const Pose& pose,
                                              const KernelParams& params) {
  params.validate();
  EncoderTrace trace_x, trace_z;
  const FeatureCloud fx = encoder_forward(x, weights, &trace_x);
  const FeatureCloud fz = encoder_forward(z, weights, &trace_z);
  const std::size_t channels = fx.channel_count;
  const double norm = 1.0 / (static_cast<double>(fx.size()) * static_cast<double>(fz.size()));
  const double radius = params.prune_radius();
  const double ell = params.lengthscale;
  const bool ut = params.use_tanh;

  std::vector<Vec3> dfx(fx.channels.size(), Vec3::Zero());
  std::vector<Vec3> dfz(fz.channels.size(), Vec3::Zero());
  double loss = 0.0;

  // cross term
  {
    const KdTree tree(fx.points);
    std::vector<int> hits;
    detail::MovedPoint m;
    double cross = 0.0;
    for (std::size_t j = 0; j < fz.size(); ++j) {
      detail::move_point(pose, fz, j, m);
      tree.radius(m.p, radius, hits);
      const double cz = fz.label(j);
      for (int i : hits) {
        const double rho2 = (fx.points[i] - m.p).squaredNorm();
        const Vec3* f = fx.channel_row(i);
        const double s = ut ? detail::channel_dot(f, m.g, channels) : 0.0;
        const detail::PairTerms t = detail::pair_terms(rho2, s, ell, ut);
        const double c = fx.label(i) * cz;
        cross += c * t.k_geo * t.t_feat;
        if (!ut) continue;
        const double w = -2.0 * norm * c * t.k_geo * t.tp_feat;
        for (std::size_t cc = 0; cc < channels; ++cc) {
          dfx[i * channels + cc] += w * m.g[cc];
          dfz[j * channels + cc] += w * (pose.rotation().transpose() * f[cc]);
        }
      }
    }
    loss -= 2.0 * norm * cross;
  }

  // self terms
  auto self_term = [&](const FeatureCloud& fc, std::vector<Vec3>& df) {
    const auto pairs = detail::self_pairs(fc, radius);
    double v = detail::self_diagonal(fc, ut);
    if (ut) {
      for (std::size_t i = 0; i < fc.size(); ++i) {
        const Vec3* f = fc.channel_row(i);
        const double s = detail::channel_dot(f, f, channels);
        const double t = std::tanh(1.0 + s);
        const double w = norm * fc.label(i) * fc.label(i) * (1.0 - t * t) * 2.0;
        for (std::size_t cc = 0; cc < channels; ++cc) df[i * channels + cc] += w * f[cc];
      }
    }
    for (const auto& [i, j] : pairs) {
      const double rho2 = (fc.points[i] - fc.points[j]).squaredNorm();
      const Vec3* fi = fc.channel_row(i);
      const Vec3* fj = fc.channel_row(j);
      const double s = ut ? detail::channel_dot(fi, fj, channels) : 0.0;
      const detail::PairTerms t = detail::pair_terms(rho2, s, ell, ut);
      const double c = fc.label(i) * fc.label(j);
      v += 2.0 * c * t.k_geo * t.t_feat;
      if (!ut) continue;
      const double w = 2.0 * norm * c * t.k_geo * t.tp_feat;
      for (std::size_t cc = 0; cc < channels; ++cc) {
        df[i * channels + cc] += w * fj[cc];
        df[j * channels + cc] += w * fi[cc];
      }
    }
    loss += norm * v;
  };
  self_term(fx, dfx);
  self_term(fz, dfz);

  EncoderBackpropResult out;
  out.grad = zero_like(weights);
  detail::encoder_backward(weights, trace_x, std::move(dfx), out.grad);
  detail::encoder_backward(weights, trace_z, std::move(dfz), out.grad);
  out.loss = loss;
  return out;
}

struct CurriculumSchedule {
  std::vector<double> stages_deg = {1.0, 10.0, 20.0, 30.0, 45.0};
  std::vector<double> promote_below_deg;  // empty: 0.2 * stage angle
  int epochs_per_stage = 20;

  double threshold(std::size_t stage) const {
    if (stage < promote_below_deg.size()) return promote_below_deg[stage];
    return 0.2 * stages_deg[stage];
  }
};

struct TrainConfig {
  std::vector<int> widths = {1, 8, 16, 16};
  int neighbor_count = 16;
  int batch_size = 8;
  int val_pairs = 8;
  double outer_lr = 0.05;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
  std::size_t pair_points = 256;
  double translation_radius = 0.0;
  int max_total_epochs = 2000;
  RegistrationConfig inner;
  /// Test seam: applied to every generated pair before use.
  std::function<void(TrainingPair&)> pair_hook;

  TrainConfig() {
    inner.max_iters = 80;
    inner.convergence_eps = 1e-5;
  }
};

struct EpochLog {
  double stage_deg = 0.0;
  int epoch = 0;  // global epoch index
  double mean_loss = 0.0;
  double val_rot_err_deg = 0.0;
  double val_trans_err = 0.0;
  double ell_mean = 0.0;
};

struct TrainResult {
  EncoderWeights weights;
  std::vector<EpochLog> log;
};

/**
 * Unsupervised bi-level training.
 *
 * Inner loop: register each generated pair with the current encoder. Outer
 * loop: descend the registration loss at the estimated pose through the
 * encoder weights. Ground-truth poses are consumed only by the validation
 * metric, which also drives stage promotion; they never touch a gradient.
 */
inline TrainResult train(const std::vector<PointCloud>& dataset, const CurriculumSchedule& schedule,
                         const TrainConfig& config) {
  if (dataset.empty()) throw EmptyDatasetError();
  if (schedule.stages_deg.empty()) throw Error("curriculum has no stages");
  for (std::size_t s = 0; s < schedule.stages_deg.size(); ++s) {
    if (schedule.stages_deg[s] <= 0.0 || schedule.stages_deg[s] > 180.0)
      throw Error("curriculum stage angles must lie in (0, 180] degrees");
    if (s > 0 && schedule.stages_deg[s] <= schedule.stages_deg[s - 1])
      throw Error("curriculum stage angles must be strictly increasing");
  }

  std::vector<PointCloud> clouds = dataset;
  for (PointCloud& c : clouds) normalize_unit_diagonal(c);

  std::vector<int> train_idx, val_idx;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (clouds.size() >= 5 ? (i % 5 == 4) : (i + 1 == clouds.size() && clouds.size() > 1))
      val_idx.push_back(static_cast<int>(i));
    else
      train_idx.push_back(static_cast<int>(i));
  }
  if (val_idx.empty()) val_idx = train_idx;
  if (train_idx.empty()) throw EmptyDatasetError();

  TrainResult result;
  result.weights =
      EncoderWeights::random(config.widths, config.neighbor_count, mix_seed(config.seed, 0x77));

  Rng pair_rng(mix_seed(config.seed, 0x1001));
  int global_epoch = 0;

  auto run_pair = [&](const PointCloud& shape, double stage_deg, Rng& rng) {
    TrainingPair pair = make_training_pair(shape, stage_deg, config.pair_points,
                                           config.translation_radius, rng);
    if (config.pair_hook) config.pair_hook(pair);
    return pair;
  };

  for (std::size_t stage = 0; stage < schedule.stages_deg.size(); ++stage) {
    const double stage_deg = schedule.stages_deg[stage];
    for (int epoch = 0; epoch < schedule.epochs_per_stage; ++epoch) {
      if (global_epoch >= config.max_total_epochs) break;

      EncoderGradients accum = zero_like(result.weights);
      double loss_sum = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        const PointCloud& shape = clouds[train_idx[pair_rng.integer(train_idx.size())]];
        TrainingPair pair = run_pair(shape, stage_deg, pair_rng);
        const FeatureCloud fx = encoder_forward(pair.x, result.weights);
        const FeatureCloud fz = encoder_forward(pair.z, result.weights);
        const RegistrationResult reg = register_clouds(fx, fz, config.inner);
        const KernelParams kp = config.inner.kernel(reg.final_ell);
        EncoderBackpropResult bp =
            encoder_gradient(result.weights, pair.x, pair.z, reg.pose, kp);
        grad_axpy(accum, 1.0, bp.grad);
        loss_sum += bp.loss;
      }
      grad_scale(accum, 1.0 / config.batch_size);
      const double gn = grad_norm(accum);
      if (gn > config.grad_clip && gn > 0.0) grad_scale(accum, config.grad_clip / gn);
      grad_axpy(result.weights, -config.outer_lr, accum);

      // validation; the only consumer of ground truth
      Rng val_rng(mix_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(global_epoch)));
      double rot_sum = 0.0, trans_sum = 0.0, ell_sum = 0.0;
      for (int v = 0; v < config.val_pairs; ++v) {
        const PointCloud& shape = clouds[val_idx[val_rng.integer(val_idx.size())]];
        TrainingPair pair = run_pair(shape, stage_deg, val_rng);
        const FeatureCloud fx = encoder_forward(pair.x, result.weights);
        const FeatureCloud fz = encoder_forward(pair.z, result.weights);
        const RegistrationResult reg = register_clouds(fx, fz, config.inner);
        rot_sum += rotation_error_deg(reg.pose, pair.truth.reveal());
        trans_sum += translation_error(reg.pose, pair.truth.reveal());
        ell_sum += reg.final_ell;
      }
      EpochLog row;
      row.stage_deg = stage_deg;
      row.epoch = global_epoch;
      row.mean_loss = loss_sum / config.batch_size;
      row.val_rot_err_deg = rot_sum / config.val_pairs;
      row.val_trans_err = trans_sum / config.val_pairs;
      row.ell_mean = ell_sum / config.val_pairs;
      result.log.push_back(row);
      ++global_epoch;

      if (row.val_rot_err_deg < schedule.threshold(stage)) break;
    }
  }
  return result;
}

}  // namespace rkhsreg
