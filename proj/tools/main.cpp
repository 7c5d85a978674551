// Command-line entry points: register, train, bench, gen.
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rkhsreg/bench.hpp"
#include "rkhsreg/io.hpp"

namespace {

using namespace rkhsreg;

/// JSON flavor of CLI11's config-file support: a flat object supplies
/// top-level flags, nested objects supply subcommand flags, e.g.
/// {"bench": {"trials": 5, "preset": "ablation-kernel"}}. Values given on
/// the command line take precedence over the file.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const nlohmann::json& j, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        std::vector<std::string> nested = parents;
        nested.push_back(key);
        walk(value, std::move(nested), items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& e : value) item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

void save_cloud_by_extension(const PointCloud& cloud, const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ply")
    save_ply(cloud, path);
  else if (ext == ".xyz")
    save_xyz(cloud, path);
  else
    throw UnsupportedFormatError("cannot write point clouds to '" + ext +
                                 "' (use .ply or .xyz): " + path);
}

void print_pose(const Pose& pose) {
  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  std::printf("pose:\n");
  for (int row = 0; row < 3; ++row)
    std::printf("  %13.9f %13.9f %13.9f %13.9f\n", r(row, 0), r(row, 1), r(row, 2), t(row));
  std::printf("  %13.9f %13.9f %13.9f %13.9f\n", 0.0, 0.0, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// register

struct RegisterArgs {
  std::string src, tgt;
  std::string mode = "handcrafted";
  std::string weights_path, out_path, truth_path;
  double ell0 = 0.3;
  int max_iters = 300;
  int k = 16;
  std::size_t samples = 4096;
  std::uint64_t seed = 0;
  bool normalize = false;
};

void run_register(const RegisterArgs& args) {
  if (args.mode == "encoder" && args.weights_path.empty())
    throw CLI::ValidationError("register", "--mode encoder requires --weights");

  PointCloud x = load_as_cloud(args.src, args.samples, mix_seed(args.seed, 1));
  PointCloud z = load_as_cloud(args.tgt, args.samples, mix_seed(args.seed, 2));

  nlohmann::json out = nlohmann::json::object();
  if (args.normalize) {
    // One shared similarity (source centroid and bounding-box diagonal) keeps
    // the source-to-target relation rigid; recorded so poses de-normalize.
    const NormalizeInfo info = normalize_unit_diagonal(x);
    for (Vec3& p : z.points) p = (p - info.centroid) / info.scale;
    out["normalization"] = {
        {"centroid", {info.centroid.x(), info.centroid.y(), info.centroid.z()}},
        {"scale", info.scale}};
  }

  RegistrationConfig config;
  config.ell_init = args.ell0;
  config.max_iters = args.max_iters;

  FeatureCloud fx, fz;
  if (args.mode == "encoder") {
    const EncoderWeights weights = load_weights(args.weights_path);
    fx = encoder_forward(x, weights);
    fz = encoder_forward(z, weights);
  } else {
    fx = handcrafted_features(x, args.k);
    fz = handcrafted_features(z, args.k);
  }

  const RegistrationResult result = register_clouds(fx, fz, config);

  print_pose(result.pose);
  std::printf("final_ell: %.9g\n", result.final_ell);
  std::printf("iterations: %d\n", result.iterations);
  std::printf("converged: %s\n", result.converged ? "yes" : "no");

  out.update(pose_to_json(result.pose));
  out["final_ell"] = result.final_ell;
  out["iterations"] = result.iterations;
  out["converged"] = result.converged;

  if (!args.truth_path.empty()) {
    std::ifstream in(args.truth_path);
    if (!in) throw Error("cannot open " + args.truth_path);
    const Pose truth = pose_from_json(nlohmann::json::parse(in));
    const double rot_err = rotation_error_deg(result.pose, truth);
    std::printf("rot_err_deg: %.9g\n", rot_err);
    out["rot_err_deg"] = rot_err;
  }

  if (!args.out_path.empty()) {
    std::ofstream file(args.out_path);
    if (!file) throw Error("cannot write " + args.out_path);
    file << out.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_dir;
  std::string out_path = "weights.bin";
  std::string log_path;
  std::vector<double> curriculum = {1.0, 10.0, 20.0, 30.0, 45.0};
  int epochs = 20;
  std::uint64_t seed = 0;
  std::size_t points = 256;
  int batch = 8;
  double outer_lr = 0.05;
  int inner_iters = 80;
  std::size_t mesh_samples = 4096;
};

void run_train(const TrainArgs& args) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(args.data_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_extension(entry.path().string());
    if (ext == ".off" || ext == ".ply" || ext == ".xyz") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .off/.ply/.xyz files in " + args.data_dir);

  std::vector<PointCloud> dataset;
  dataset.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i)
    dataset.push_back(load_as_cloud(files[i], args.mesh_samples, mix_seed(args.seed, 0xF00 + i)));

  CurriculumSchedule schedule;
  schedule.stages_deg = args.curriculum;
  schedule.epochs_per_stage = args.epochs;

  TrainConfig config;
  config.seed = args.seed;
  config.pair_points = args.points;
  config.batch_size = args.batch;
  config.outer_lr = args.outer_lr;
  config.inner.max_iters = args.inner_iters;

  std::printf("training on %zu clouds, %zu stages x %d epochs\n", dataset.size(),
              schedule.stages_deg.size(), schedule.epochs_per_stage);
  const TrainResult result = train(dataset, schedule, config);

  save_weights(result.weights, args.out_path);
  std::printf("wrote %s (%zu parameters)\n", args.out_path.c_str(),
              result.weights.parameter_count());

  if (!args.log_path.empty()) {
    std::ofstream log(args.log_path);
    if (!log) throw Error("cannot write " + args.log_path);
    log << "stage_deg,epoch,mean_loss,val_rot_err_deg,val_trans_err,ell_mean\n";
    char buf[256];
    for (const EpochLog& e : result.log) {
      std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", e.stage_deg, e.epoch,
                    e.mean_loss, e.val_rot_err_deg, e.val_trans_err, e.ell_mean);
      log << buf;
    }
    std::printf("wrote %s (%zu epochs)\n", args.log_path.c_str(), result.log.size());
  }

  if (!result.log.empty())
    std::printf("final validation rotation error: %.3f deg\n", result.log.back().val_rot_err_deg);
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string preset = "paper45";
  std::string out_path = "report.csv";
  int trials = 0;          // 0: preset default
  std::size_t points = 0;  // 0: preset default
  std::uint64_t seed = 7;
};

void run_bench(const BenchArgs& args) {
  const std::vector<BenchPreset> presets = bench_presets();
  const BenchPreset* preset = find_preset(presets, args.preset);
  if (preset == nullptr) throw CLI::ValidationError("bench", "unknown preset " + args.preset);

  PresetOverrides overrides;
  overrides.trials = args.trials;
  overrides.points = args.points;
  overrides.base_seed = args.seed;

  std::printf("running preset %s: %s\n", preset->name.c_str(), preset->description.c_str());
  const BenchReport report = preset->run(overrides);
  report.write_csv(args.out_path);
  report.print_summary(std::cout);
  std::printf("wrote %s (%zu rows)\n", args.out_path.c_str(), report.rows.size());
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string shape;
  std::string out_path;
  std::size_t n = 1024;
  std::uint64_t seed = 0;
  bool normalize = false;
};

void run_gen(const GenArgs& args) {
  const MeshShape mesh = make_shape_by_name(args.shape);
  Rng rng(mix_seed(args.seed, 0x9E7));
  PointCloud cloud = sample_mesh_surface(mesh, args.n, rng);
  if (args.normalize) normalize_unit_diagonal(cloud);
  const std::string out = args.out_path.empty() ? args.shape + ".ply" : args.out_path;
  save_cloud_by_extension(cloud, out);
  std::printf("wrote %s (%zu points)\n", out.c_str(), cloud.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"correspondence-free point-cloud registration toolkit"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "",
                 "JSON config file supplying any flag, keyed by subcommand, e.g. "
                 "{\"bench\": {\"trials\": 5}}; command-line flags override it");
  app.footer("Environment: RKHS_REG_THREADS caps the worker count.");

  RegisterArgs reg_args;
  CLI::App* reg = app.add_subcommand("register", "align a target cloud onto a source cloud");
  reg->configurable();
  reg->fallthrough();
  reg->add_option("src", reg_args.src, "source cloud or mesh (.ply/.xyz/.off)")->required();
  reg->add_option("tgt", reg_args.tgt, "target cloud or mesh (.ply/.xyz/.off)")->required();
  reg->add_option("--mode", reg_args.mode, "feature mode")
      ->check(CLI::IsMember({"handcrafted", "encoder"}))
      ->capture_default_str();
  reg->add_option("--weights", reg_args.weights_path, "encoder weight file (encoder mode)");
  reg->add_option("--ell0", reg_args.ell0, "initial kernel lengthscale")->capture_default_str();
  reg->add_option("--max-iters", reg_args.max_iters, "gradient-descent iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  reg->add_option("--k", reg_args.k, "feature neighborhood size")->capture_default_str();
  reg->add_option("--samples", reg_args.samples, "points sampled when an input is a mesh")
      ->capture_default_str();
  reg->add_option("--seed", reg_args.seed, "seed for mesh sampling")->capture_default_str();
  reg->add_flag("--normalize", reg_args.normalize,
                "center on the source centroid and scale its bounding-box diagonal to 1 "
                "(recorded in the output JSON)");
  reg->add_option("--out", reg_args.out_path, "write the pose as JSON here");
  reg->add_option("--truth", reg_args.truth_path,
                  "pose JSON to score against; adds rot_err_deg to the output");
  reg->callback([&reg_args] { run_register(reg_args); });

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "curriculum-train the feature encoder");
  tr->configurable();
  tr->fallthrough();
  tr->add_option("data-dir", train_args.data_dir, "directory of .off/.ply/.xyz shapes")
      ->required()
      ->check(CLI::ExistingDirectory);
  tr->add_option("--curriculum", train_args.curriculum,
                 "comma-separated stage angles in degrees, strictly increasing")
      ->delimiter(',')
      ->capture_default_str();
  tr->add_option("--epochs", train_args.epochs, "epochs per curriculum stage")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--seed", train_args.seed, "training seed")->capture_default_str();
  tr->add_option("--points", train_args.points, "points per training pair")
      ->capture_default_str();
  tr->add_option("--batch", train_args.batch, "pairs per outer step")->capture_default_str();
  tr->add_option("--outer-lr", train_args.outer_lr, "outer learning rate")
      ->capture_default_str();
  tr->add_option("--inner-iters", train_args.inner_iters,
                 "iteration cap for the inner registration")
      ->capture_default_str();
  tr->add_option("--out", train_args.out_path, "weight file to write")->capture_default_str();
  tr->add_option("--log", train_args.log_path, "per-epoch CSV log to write");
  tr->callback([&train_args] { run_train(train_args); });

  BenchArgs bench_args;
  CLI::App* be = app.add_subcommand("bench", "run a named benchmark or ablation experiment");
  be->configurable();
  be->fallthrough();
  {
    std::vector<std::string> names;
    for (const BenchPreset& p : bench_presets()) names.push_back(p.name);
    be->add_option("--preset", bench_args.preset, "experiment to run")
        ->check(CLI::IsMember(names))
        ->capture_default_str();
  }
  be->add_option("--trials", bench_args.trials, "trials per cell (0 keeps the preset default)")
      ->capture_default_str();
  be->add_option("--points", bench_args.points, "points per cloud (0 keeps the preset default)")
      ->capture_default_str();
  be->add_option("--seed", bench_args.seed, "base seed")->capture_default_str();
  be->add_option("--out", bench_args.out_path, "CSV report path")->capture_default_str();
  be->callback([&bench_args] { run_bench(bench_args); });

  GenArgs gen_args;
  CLI::App* ge = app.add_subcommand("gen", "sample a procedural shape into a point cloud");
  ge->configurable();
  ge->fallthrough();
  ge->add_option("shape", gen_args.shape, "box, mug, bracket, knot, or polyN")->required();
  ge->add_option("--n", gen_args.n, "number of points")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ge->add_option("--seed", gen_args.seed, "sampling seed")->capture_default_str();
  ge->add_flag("--normalize", gen_args.normalize,
               "center on the centroid and scale the bounding-box diagonal to 1");
  ge->add_option("--out", gen_args.out_path, "output file (.ply or .xyz; default <shape>.ply)");
  ge->callback([&gen_args] { run_gen(gen_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
