// rkhsreg: perturbation-study harness with matched per-trial seeds.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/features.hpp"
#include "rkhsreg/icp.hpp"
#include "rkhsreg/perturb.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/registration.hpp"
#include "rkhsreg/se3.hpp"
#include "rkhsreg/shapes.hpp"
#include "rkhsreg/training.hpp"

namespace rkhsreg {

/// Pose estimate plus bookkeeping shared by all benchmarked methods.
struct MethodOutput {
  Pose pose;
  int iterations = 0;
};

struct BenchMethod {
  std::string name;
  std::function<MethodOutput(const PointCloud& x, const PointCloud& z)> run;
};

struct BenchOptions {
  std::size_t points = 1024;
  int trials = 30;
  std::uint64_t base_seed = 7;
  double translation_radius = 0.0;
  int normal_k = 16;
};

struct BenchRow {
  std::string shape;
  std::string method;
  double init_angle_deg = 0.0;
  PerturbationSpec spec;
  int trial = 0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  int iterations = 0;
  double wall_time_s = 0.0;
  bool failed = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  struct CellKey {
    std::string shape, method;
    double angle;
    double sigma, outliers, crop;
    bool operator<(const CellKey& o) const {
      if (shape != o.shape) return shape < o.shape;
      if (method != o.method) return method < o.method;
      if (angle != o.angle) return angle < o.angle;
      if (sigma != o.sigma) return sigma < o.sigma;
      if (outliers != o.outliers) return outliers < o.outliers;
      return crop < o.crop;
    }
  };

  struct CellStats {
    int n = 0;
    double mean_rot = 0.0, std_rot = 0.0, median_rot = 0.0;
    double mean_trans = 0.0, std_trans = 0.0;
  };

  /// Per-cell statistics, recomputable exactly from the rows (sample std, n-1).
  std::map<CellKey, CellStats> aggregate() const {
    std::map<CellKey, std::vector<const BenchRow*>> cells;
    for (const BenchRow& r : rows)
      cells[{r.shape, r.method, r.init_angle_deg, r.spec.noise_sigma, r.spec.outlier_ratio,
             r.spec.crop_ratio}]
          .push_back(&r);
    std::map<CellKey, CellStats> out;
    for (auto& [key, list] : cells) {
      CellStats s;
      s.n = static_cast<int>(list.size());
      std::vector<double> rot;
      for (const BenchRow* r : list) {
        s.mean_rot += r->rot_err_deg;
        s.mean_trans += r->trans_err;
        rot.push_back(r->rot_err_deg);
      }
      s.mean_rot /= s.n;
      s.mean_trans /= s.n;
      if (s.n > 1) {
        double ss_rot = 0.0, ss_trans = 0.0;
        for (const BenchRow* r : list) {
          ss_rot += (r->rot_err_deg - s.mean_rot) * (r->rot_err_deg - s.mean_rot);
          ss_trans += (r->trans_err - s.mean_trans) * (r->trans_err - s.mean_trans);
        }
        s.std_rot = std::sqrt(ss_rot / (s.n - 1));
        s.std_trans = std::sqrt(ss_trans / (s.n - 1));
      }
      std::sort(rot.begin(), rot.end());
      s.median_rot = rot.size() % 2 ? rot[rot.size() / 2]
                                    : 0.5 * (rot[rot.size() / 2 - 1] + rot[rot.size() / 2]);
      out[key] = s;
    }
    return out;
  }

  /// Fixed degradation pipeline, stated in every report header.
  static const char* perturbation_order_note() {
    return "perturbations applied to the target cloud only, in order: "
           "noise, then outliers, then crop";
  }

  void write_csv(std::ostream& out) const {
    out << "# " << perturbation_order_note() << "\n";
    out << "shape,method,init_angle_deg,noise_sigma,outlier_ratio,crop_ratio,trial,"
           "rot_err_deg,trans_err,iterations,wall_time_s,failed\n";
    char buf[512];
    for (const BenchRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%d,%.4f,%d\n",
                    r.shape.c_str(), r.method.c_str(), r.init_angle_deg, r.spec.noise_sigma,
                    r.spec.outlier_ratio, r.spec.crop_ratio, r.trial, r.rot_err_deg, r.trans_err,
                    r.iterations, r.wall_time_s, r.failed ? 1 : 0);
      out << buf;
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_csv(out);
  }

  void print_summary(std::ostream& out) const {
    char buf[512];
    out << "# " << perturbation_order_note() << "\n";
    out << "shape        method        angle  sigma  outl  crop     n   mean_rot    std_rot  med_rot  mean_trans   std_trans\n";
    for (const auto& [key, s] : aggregate()) {
      std::snprintf(buf, sizeof(buf),
                    "%-12s %-12s %6.1f %6.3f %5.2f %5.2f %5d %10.3f %10.3f %8.3f %11.4f %11.4f\n",
                    key.shape.c_str(), key.method.c_str(), key.angle, key.sigma, key.outliers,
                    key.crop, s.n, s.mean_rot, s.std_rot, s.median_rot, s.mean_trans, s.std_trans);
      out << buf;
    }
  }
};

/**
 * Full factorial sweep: shapes x init angles x perturbations x trials x
 * methods. The per-trial seed mixes everything except the method, so every
 * method sees byte-identical inputs. A method that throws is recorded as a
 * failed trial at the 180-degree convention.
 */
inline BenchReport run_benchmark(const std::vector<NamedMesh>& shapes,
                                 const std::vector<BenchMethod>& methods,
                                 const std::vector<double>& init_angles_deg,
                                 const std::vector<PerturbationSpec>& specs,
                                 const BenchOptions& options) {
  BenchReport report;
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    for (std::size_t ai = 0; ai < init_angles_deg.size(); ++ai) {
      for (std::size_t pi = 0; pi < specs.size(); ++pi) {
        for (int trial = 0; trial < options.trials; ++trial) {
          std::uint64_t seed = mix_seed(options.base_seed, si);
          seed = mix_seed(seed, 0x100 + ai);
          seed = mix_seed(seed, 0x10000 + pi);
          seed = mix_seed(seed, 0x1000000 + static_cast<std::uint64_t>(trial));
          Rng rng(seed);

          PointCloud sampled = sample_mesh_surface(shapes[si].mesh, options.points * 4, rng);
          normalize_unit_diagonal(sampled);
          // The cell's init angle is applied exactly (min == max), so every
          // trial in an angle column starts from the same rotation magnitude.
          TrainingPair pair =
              make_training_pair(sampled, init_angles_deg[ai], options.points,
                                 options.translation_radius, rng, init_angles_deg[ai]);
          pair.z = apply_perturbation(pair.z, specs[pi], rng, options.normal_k);

          for (const BenchMethod& method : methods) {
            BenchRow row;
            row.shape = shapes[si].name;
            row.method = method.name;
            row.init_angle_deg = init_angles_deg[ai];
            row.spec = specs[pi];
            row.trial = trial;
            const auto t0 = std::chrono::steady_clock::now();
            try {
              const MethodOutput out = method.run(pair.x, pair.z);
              row.rot_err_deg = rotation_error_deg(out.pose, pair.truth.reveal());
              row.trans_err = translation_error(out.pose, pair.truth.reveal());
              row.iterations = out.iterations;
            } catch (const std::exception&) {
              row.failed = true;
              row.rot_err_deg = 180.0;
              row.trans_err = translation_error(Pose::Identity(), pair.truth.reveal());
            }
            row.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report.rows.push_back(row);
          }
        }
      }
    }
  }
  return report;
}

/// Registration with training-free handcrafted features.
inline BenchMethod method_rkhs_handcrafted(const RegistrationConfig& config, int k = 16,
                                           const std::string& name = "rkhs") {
  return {name, [config, k](const PointCloud& x, const PointCloud& z) {
            const FeatureCloud fx = handcrafted_features(x, k);
            const FeatureCloud fz = handcrafted_features(z, k);
            const RegistrationResult r = register_clouds(fx, fz, config);
            return MethodOutput{r.pose, r.iterations};
          }};
}

inline BenchMethod method_rkhs_encoder(const RegistrationConfig& config, EncoderWeights weights,
                                       const std::string& name = "rkhs-enc") {
  return {name, [config, weights = std::move(weights)](const PointCloud& x, const PointCloud& z) {
            const FeatureCloud fx = encoder_forward(x, weights);
            const FeatureCloud fz = encoder_forward(z, weights);
            const RegistrationResult r = register_clouds(fx, fz, config);
            return MethodOutput{r.pose, r.iterations};
          }};
}

inline BenchMethod method_icp(const IcpConfig& config = {}, const std::string& name = "icp") {
  return {name, [config](const PointCloud& x, const PointCloud& z) {
            const IcpResult r = icp_register(x, z, config);
            return MethodOutput{r.pose, r.iterations};
          }};
}

/// Canned perturbation columns: clean, noise, noise+outliers, three crops.
inline std::vector<PerturbationSpec> standard_perturbations() {
  return {{0.0, 0.0, 0.0},  {0.01, 0.0, 0.0},  {0.01, 0.2, 0.0},
          {0.0, 0.0, 0.05}, {0.0, 0.0, 0.10},  {0.0, 0.0, 0.20}};
}

/// Runtime knobs a caller may override; zero/negative fields keep the
/// preset's own defaults.
struct PresetOverrides {
  int trials = 0;
  std::size_t points = 0;
  std::uint64_t base_seed = 7;
};

/// A named, self-contained experiment: fixed shapes, angles, perturbations,
/// and methods, runnable from the command line by name.
struct BenchPreset {
  std::string name;
  std::string description;
  std::function<BenchReport(const PresetOverrides&)> run;
};

namespace detail {

inline BenchOptions preset_options(const PresetOverrides& ov, std::size_t default_points,
                                   int default_trials) {
  BenchOptions options;
  options.points = ov.points > 0 ? ov.points : default_points;
  options.trials = ov.trials > 0 ? ov.trials : default_trials;
  options.base_seed = ov.base_seed;
  return options;
}

inline RegistrationConfig preset_registration(double ell_init, int max_iters) {
  RegistrationConfig config;
  config.ell_init = ell_init;
  config.max_iters = max_iters;
  return config;
}

/// Perturbation-study preset over the full shape set at one init angle.
inline BenchPreset perturbation_study_preset(std::string name, double angle_deg, double ell_init) {
  BenchPreset preset;
  preset.name = std::move(name);
  preset.description = "10 shapes x 6 perturbation columns at " + std::to_string(int(angle_deg)) +
                       " deg init, handcrafted-feature registration vs ICP "
                       "(protocol scale: 1024 points, 30 trials)";
  preset.run = [angle_deg, ell_init](const PresetOverrides& ov) {
    const BenchOptions options = preset_options(ov, 1024, 30);
    const std::vector<BenchMethod> methods = {
        method_rkhs_handcrafted(preset_registration(ell_init, 1200)), method_icp()};
    return run_benchmark(standard_shape_set(10), methods, {angle_deg}, standard_perturbations(),
                         options);
  };
  return preset;
}

inline BenchPreset kernel_ablation_preset() {
  BenchPreset preset;
  preset.name = "ablation-kernel";
  preset.description =
      "full kernel (RBF x feature-channel tanh) vs RBF-only on identical seeds, "
      "one shape, 45 deg init, clean";
  preset.run = [](const PresetOverrides& ov) {
    const BenchOptions options = preset_options(ov, 256, 30);
    RegistrationConfig rbf_only = preset_registration(0.3, 600);
    rbf_only.use_tanh = false;
    const std::vector<BenchMethod> methods = {
        method_rkhs_handcrafted(preset_registration(0.3, 600), 16, "rkhs"),
        method_rkhs_handcrafted(rbf_only, 16, "rkhs-rbf")};
    return run_benchmark({standard_shape_set(2)[1]}, methods, {45.0}, {PerturbationSpec{}},
                         options);
  };
  return preset;
}

inline BenchPreset lengthscale_ablation_preset() {
  BenchPreset preset;
  preset.name = "ablation-ell";
  preset.description =
      "initial-lengthscale sweep {0.1, 0.3, 0.5, 1.0} x init angles {45, 90} deg, clean";
  preset.run = [](const PresetOverrides& ov) {
    const BenchOptions options = preset_options(ov, 256, 30);
    std::vector<BenchMethod> methods;
    for (double ell : {0.1, 0.3, 0.5, 1.0}) {
      char name[32];
      std::snprintf(name, sizeof(name), "rkhs-ell%g", ell);
      methods.push_back(method_rkhs_handcrafted(preset_registration(ell, 1200), 16, name));
    }
    const auto set = standard_shape_set(4);
    return run_benchmark({set[1], set[3]}, methods, {45.0, 90.0}, {PerturbationSpec{}}, options);
  };
  return preset;
}

inline BenchPreset curriculum_ablation_preset() {
  BenchPreset preset;
  preset.name = "ablation-curriculum";
  preset.description =
      "encoder trained with the staged-angle curriculum vs direct 45-deg training at "
      "equal epoch budget, then benchmarked at 45 deg on the named shapes";
  preset.run = [](const PresetOverrides& ov) {
    const BenchOptions options = preset_options(ov, 256, 10);

    std::vector<PointCloud> dataset;
    for (const NamedMesh& entry : standard_shape_set(20)) {
      Rng rng(mix_seed(options.base_seed, 0xD5E7 + dataset.size()));
      PointCloud c = sample_mesh_surface(entry.mesh, 224, rng);
      normalize_unit_diagonal(c);
      dataset.push_back(std::move(c));
    }

    TrainConfig tc;
    tc.widths = {1, 4, 8};
    tc.neighbor_count = 8;
    tc.batch_size = 4;
    tc.val_pairs = 4;
    tc.pair_points = 96;
    tc.seed = mix_seed(options.base_seed, 0xC0DE);
    tc.inner.max_iters = 40;

    CurriculumSchedule curriculum;  // staged 1..45 deg, promotion on val error
    curriculum.epochs_per_stage = 6;
    const int budget =
        curriculum.epochs_per_stage * static_cast<int>(curriculum.stages_deg.size());

    CurriculumSchedule direct;  // single 45-deg stage, same total epoch allowance
    direct.stages_deg = {45.0};
    direct.promote_below_deg = {0.0};  // never promotes: always spends the full budget
    direct.epochs_per_stage = budget;

    const TrainResult curr = train(dataset, curriculum, tc);
    const TrainResult dire = train(dataset, direct, tc);

    const std::vector<BenchMethod> methods = {
        method_rkhs_encoder(preset_registration(0.3, 600), curr.weights, "rkhs-enc-curriculum"),
        method_rkhs_encoder(preset_registration(0.3, 600), dire.weights, "rkhs-enc-direct")};
    return run_benchmark(standard_shape_set(4), methods, {45.0}, {PerturbationSpec{}}, options);
  };
  return preset;
}

}  // namespace detail

/// The three canned ablation experiments: kernel choice, initial lengthscale,
/// and curriculum-vs-direct training.
inline std::vector<BenchPreset> ablation_presets() {
  return {detail::kernel_ablation_preset(), detail::lengthscale_ablation_preset(),
          detail::curriculum_ablation_preset()};
}

/// All named experiments accepted by the command line: the two perturbation
/// studies plus the ablations.
inline std::vector<BenchPreset> bench_presets() {
  std::vector<BenchPreset> out = {detail::perturbation_study_preset("paper45", 45.0, 0.3),
                                  detail::perturbation_study_preset("paper90", 90.0, 0.5)};
  for (BenchPreset& p : ablation_presets()) out.push_back(std::move(p));
  return out;
}

inline const BenchPreset* find_preset(const std::vector<BenchPreset>& presets,
                                      const std::string& name) {
  for (const BenchPreset& p : presets)
    if (p.name == name) return &p;
  return nullptr;
}

}  // namespace rkhsreg
