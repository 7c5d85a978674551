// rkhsreg: rotation-equivariant per-point feature channels.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/se3.hpp"

namespace rkhsreg {

/**
 * A point cloud with C vector channels per point.
 *
 * Channels live in the same 3-d space as the points: a rigid transform
 * rotates them but does not translate them, so the pair (point, channels)
 * transforms equivariantly.
 */
struct FeatureCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> channels;  // row-major, channels[i * channel_count + c]
  std::size_t channel_count = 0;
  std::vector<double> labels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  double label(std::size_t i) const { return labels.empty() ? 1.0 : labels[i]; }

  const Vec3* channel_row(std::size_t i) const { return channels.data() + i * channel_count; }
  Vec3* channel_row(std::size_t i) { return channels.data() + i * channel_count; }

  void require_channels_match(const FeatureCloud& other) const {
    if (channel_count != other.channel_count)
      throw ChannelMismatchError("feature clouds disagree on channel count (" +
                                 std::to_string(channel_count) + " vs " +
                                 std::to_string(other.channel_count) + ")");
  }
};

/// Rigid action: points get R x + t, channels get R v.
inline FeatureCloud apply_pose_features(const Pose& h, const FeatureCloud& fc) {
  FeatureCloud out;
  out.points.resize(fc.points.size());
  out.channels.resize(fc.channels.size());
  out.channel_count = fc.channel_count;
  out.labels = fc.labels;
  for (std::size_t i = 0; i < fc.points.size(); ++i) out.points[i] = h.apply(fc.points[i]);
  for (std::size_t i = 0; i < fc.channels.size(); ++i) out.channels[i] = h.rotate(fc.channels[i]);
  return out;
}

/**
 * Training-free features from local PCA frames.
 *
 * Channel 0 carries the oriented normal, channel 1 the oriented middle
 * eigenvector; channels beyond the first two are zero. Degenerate
 * neighbourhoods get all-zero channels. The nonzero channels are scaled so
 * the stacked feature vector has at most unit norm, which keeps the kernel's
 * feature factor tanh(1 + <f, g>) non-negative: with raw unit channels the
 * stacked dot product reaches -2 and the factor turns negative on
 * anti-aligned pairs, which lets misaligned poses score better than the true
 * one on shapes with nearby opposing surfaces.
 */
inline FeatureCloud handcrafted_features(const PointCloud& cloud, int k, std::size_t channel_count = 2) {
  cloud.require_nonempty();
  const LocalFrames frames = local_surface_frames(cloud, k);
  FeatureCloud out;
  out.points = cloud.points;
  out.labels = cloud.labels;
  out.channel_count = channel_count;
  out.channels.assign(cloud.size() * channel_count, Vec3::Zero());
  const double scale = channel_count >= 2 ? 1.0 / std::sqrt(2.0) : 1.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (frames.degenerate[i]) continue;
    if (channel_count >= 1) out.channels[i * channel_count + 0] = scale * frames.normal[i];
    if (channel_count >= 2) out.channels[i * channel_count + 1] = scale * frames.tangent[i];
  }
  return out;
}

/**
 * One graph-convolution layer of the vector-neuron encoder.
 *
 * All three matrices mix channels only (shape c_in x c_out, row-major), so
 * every intermediate stays a list of 3-d vectors and rotation equivariance
 * is structural.
 */
struct EncoderLayer {
  int c_in = 0;
  int c_out = 0;
  std::vector<double> w_self;     // point's own channels
  std::vector<double> w_neigh;    // neighbour differences
  std::vector<double> directions; // learned half-space directions for the nonlinearity

  static constexpr int kMaxWidth = 64;

  void validate() const {
    const std::size_t n = static_cast<std::size_t>(c_in) * c_out;
    if (c_in <= 0 || c_out <= 0 || c_out > kMaxWidth || w_self.size() != n ||
        w_neigh.size() != n || directions.size() != static_cast<std::size_t>(c_out) * c_out)
      throw ShapeMismatchError("encoder layer has inconsistent weight shapes");
  }
};

struct EncoderWeights {
  int neighbor_count = 16;
  std::vector<EncoderLayer> layers;

  void validate() const {
    if (layers.empty()) throw ShapeMismatchError("encoder has no layers");
    if (neighbor_count < 1) throw ShapeMismatchError("encoder neighbour count must be positive");
    if (layers.front().c_in != 1) throw ShapeMismatchError("first encoder layer must take 1 channel");
    int prev = layers.front().c_in;
    for (const auto& l : layers) {
      l.validate();
      if (l.c_in != prev) throw ShapeMismatchError("encoder layer widths do not chain");
      prev = l.c_out;
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      n += l.w_self.size() + l.w_neigh.size() + l.directions.size();
    return n;
  }

  /// Gaussian init scaled by fan-in; identity-leaning direction matrices.
  static EncoderWeights random(const std::vector<int>& widths, int k, std::uint64_t seed) {
    if (widths.size() < 2 || widths.front() != 1)
      throw ShapeMismatchError("encoder widths must start at 1 channel");
    Rng rng(mix_seed(seed, 0x9d2c5680u));
    EncoderWeights w;
    w.neighbor_count = k;
    for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
      EncoderLayer layer;
      layer.c_in = widths[li];
      layer.c_out = widths[li + 1];
      const double s = 1.0 / std::sqrt(static_cast<double>(layer.c_in));
      layer.w_self.resize(static_cast<std::size_t>(layer.c_in) * layer.c_out);
      layer.w_neigh.resize(layer.w_self.size());
      layer.directions.resize(static_cast<std::size_t>(layer.c_out) * layer.c_out);
      for (double& v : layer.w_self) v = s * rng.normal();
      for (double& v : layer.w_neigh) v = 0.5 * s * rng.normal();
      for (int d = 0; d < layer.c_out; ++d)
        for (int c = 0; c < layer.c_out; ++c)
          layer.directions[static_cast<std::size_t>(d) * layer.c_out + c] =
              (d == c ? 1.0 : 0.0) + 0.1 * rng.normal();
      w.layers.push_back(std::move(layer));
    }
    w.validate();
    return w;
  }
};

namespace detail {

/// Projects u onto the closed half-space of its learned direction q.
inline Vec3 vn_project(const Vec3& u, const Vec3& q) {
  const double qn2 = q.squaredNorm();
  if (qn2 < 1e-16) return u;  // zero direction: keep the identity branch
  const double dot = u.dot(q);
  if (dot >= 0.0) return u;
  return u - (dot / qn2) * q;
}

}  // namespace detail

/**
 * Vector-neuron nonlinearity. Channel c of point p keeps u when it lies in
 * the half-space of direction q_c = sum_d D[d][c] u_d, otherwise the
 * component along q_c is removed.
 */
inline void vn_nonlinearity(std::vector<Vec3>& u, const std::vector<double>& directions, int c_out) {
  const std::size_t n = u.size() / c_out;
  std::vector<Vec3> q(c_out);
  for (std::size_t p = 0; p < n; ++p) {
    Vec3* row = u.data() + p * c_out;
    for (int c = 0; c < c_out; ++c) {
      Vec3 qc = Vec3::Zero();
      for (int d = 0; d < c_out; ++d) qc += directions[static_cast<std::size_t>(d) * c_out + c] * row[d];
      q[c] = qc;
    }
    for (int c = 0; c < c_out; ++c) row[c] = detail::vn_project(row[c], q[c]);
  }
}

/// Per-layer intermediates kept for reverse-mode accumulation.
struct LayerTrace {
  std::vector<Vec3> input;   // N x c_in
  std::vector<Vec3> pre;     // N x c_out, after graph conv, before nonlinearity
  std::vector<Vec3> dirs;    // N x c_out, the q vectors
};

struct EncoderTrace {
  std::vector<std::vector<int>> neighbors;
  std::vector<LayerTrace> layers;
  std::vector<Vec3> prenorm;  // final layer output before normalization
};

namespace detail {

inline void graph_conv_forward(const std::vector<Vec3>& in, int c_in, int c_out,
                               const std::vector<std::vector<int>>& nbr,
                               const EncoderLayer& layer, std::vector<Vec3>& out) {
  const std::size_t n = in.size() / c_in;
  out.assign(n * c_out, Vec3::Zero());
  parallel_for(n, [&](std::size_t p) {
    const Vec3* fin = in.data() + p * c_in;
    Vec3* fout = out.data() + p * c_out;
    std::vector<Vec3> agg(c_in, Vec3::Zero());
    for (int j : nbr[p]) {
      const Vec3* fj = in.data() + static_cast<std::size_t>(j) * c_in;
      for (int d = 0; d < c_in; ++d) agg[d] += fj[d] - fin[d];
    }
    for (int c = 0; c < c_out; ++c) {
      Vec3 acc = Vec3::Zero();
      for (int d = 0; d < c_in; ++d) {
        const std::size_t w = static_cast<std::size_t>(d) * c_out + c;
        acc += layer.w_self[w] * fin[d] + layer.w_neigh[w] * agg[d];
      }
      fout[c] = acc;
    }
  });
}

}  // namespace detail

/**
 * Full encoder pass: PCA-normal seed channel, L graph-convolution layers with
 * the vector-neuron nonlinearity, then the bounding normalization
 * f / (1 + |f|) so every output channel has norm < 1.
 *
 * Deterministic; requires size > neighbor_count. When trace is non-null the
 * intermediates needed by the backward pass are recorded.
 */
inline FeatureCloud encoder_forward(const PointCloud& cloud, const EncoderWeights& weights,
                                    EncoderTrace* trace = nullptr) {
  cloud.require_nonempty();
  weights.validate();
  if (static_cast<int>(cloud.size()) <= weights.neighbor_count)
    throw TooFewPointsError("encoder needs more points than its neighbour count");

  const std::size_t n = cloud.size();
  auto nbr = knn_indices(cloud, weights.neighbor_count);
  NormalsResult seeds = pca_normals(cloud, weights.neighbor_count);
  std::vector<Vec3> f(n);
  for (std::size_t i = 0; i < n; ++i)
    f[i] = seeds.degenerate[i] ? Vec3(0.0, 0.0, 1.0) : seeds.normals[i];

  if (trace) {
    trace->neighbors = nbr;
    trace->layers.clear();
    trace->layers.reserve(weights.layers.size());
  }

  int c_in = 1;
  for (const EncoderLayer& layer : weights.layers) {
    std::vector<Vec3> u;
    detail::graph_conv_forward(f, c_in, layer.c_out, nbr, layer, u);
    LayerTrace lt;
    if (trace) {
      lt.input = f;
      lt.pre = u;
      lt.dirs.resize(u.size());
    }
    const int c_out = layer.c_out;
    parallel_for(n, [&](std::size_t p) {
      Vec3* row = u.data() + p * c_out;
      Vec3 q[EncoderLayer::kMaxWidth];
      for (int c = 0; c < c_out; ++c) {
        Vec3 qc = Vec3::Zero();
        for (int d = 0; d < c_out; ++d)
          qc += layer.directions[static_cast<std::size_t>(d) * c_out + c] * row[d];
        q[c] = qc;
      }
      if (trace)
        for (int c = 0; c < c_out; ++c) lt.dirs[p * c_out + c] = q[c];
      for (int c = 0; c < c_out; ++c) row[c] = detail::vn_project(row[c], q[c]);
    });
    if (trace) trace->layers.push_back(std::move(lt));
    f = std::move(u);
    c_in = layer.c_out;
  }

  if (trace) trace->prenorm = f;
  FeatureCloud out;
  out.points = cloud.points;
  out.labels = cloud.labels;
  out.channel_count = static_cast<std::size_t>(c_in);
  out.channels.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out.channels[i] = f[i] / (1.0 + f[i].norm());
  return out;
}

}  // namespace rkhsreg
