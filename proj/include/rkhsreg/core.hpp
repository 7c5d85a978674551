// rkhsreg: correspondence-free point cloud registration in a reproducing kernel Hilbert space.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rkhsreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCloudError : Error {
  EmptyCloudError() : Error("operation requires a non-empty point cloud") {}
  using Error::Error;
};

struct TooFewPointsError : Error {
  using Error::Error;
};

struct AngleNearPiError : Error {
  AngleNearPiError() : Error("rotation angle too close to pi for a stable logarithm") {}
};

struct ChannelMismatchError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct EmptyMeshError : Error {
  EmptyMeshError() : Error("mesh has no sampleable triangles") {}
};

struct EmptyDatasetError : Error {
  EmptyDatasetError() : Error("dataset contains no usable shapes") {}
};

struct UnsupportedFormatError : Error {
  using Error::Error;
};

/// Parse failure with 1-based line information.
struct ParseError : Error {
  int line = 0;
  ParseError(const std::string& what, int line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
};

/// Worker budget. RKHS_REG_THREADS overrides hardware concurrency; minimum 1.
inline unsigned worker_count() {
  if (const char* env = std::getenv("RKHS_REG_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v > 256 ? 256 : v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/**
 * Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
 *
 * Chunk boundaries depend only on n and chunk, never on the worker count, so
 * per-chunk partial results combined in chunk order give identical floating
 * point sums for any RKHS_REG_THREADS. fn must not throw.
 */
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn) {
  if (n == 0) return;
  if (chunk == 0) chunk = 1;
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  std::size_t workers = worker_count();
  if (workers > num_chunks) workers = num_chunks;
  if (workers <= 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) {
      const std::size_t b = c * chunk;
      fn(c, b, b + chunk < n ? b + chunk : n);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t c = next.fetch_add(1); c < num_chunks; c = next.fetch_add(1)) {
      const std::size_t b = c * chunk;
      fn(c, b, b + chunk < n ? b + chunk : n);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

/// Element-wise parallel loop with deterministic chunking.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  parallel_chunks(n, 256, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic seed derivation for independent substreams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return detail::splitmix64(a ^ detail::splitmix64(b + 0x632be59bd9b4e019ull));
}

/**
 * Deterministic random source.
 *
 * All distributions are implemented on top of the raw 64-bit stream so a seed
 * produces the same sequence on every platform and standard library.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::splitmix64(seed ^ 0xa02bdbf7bb3c0a7ull)) {}

  std::uint64_t next_u64() {
    state_ = detail::splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t integer(std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller; two uniforms per draw.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform direction on the unit sphere.
  Vec3 unit_vector() {
    while (true) {
      const Vec3 v(normal(), normal(), normal());
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  /// Uniform point in the closed ball of given radius.
  Vec3 in_ball(double radius) {
    while (true) {
      const Vec3 v(uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0));
      if (v.squaredNorm() <= 1.0) return v * radius;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace rkhsreg
