// stocs: pose estimation, evaluation and scene synthesis from the command line.
//
// Exit codes: 0 success, 2 bad input, 3 output failure, 4 estimation failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "stocs/stocs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitOutput = 3;
constexpr int kExitEstimation = 4;

/// Failure with a fixed exit code.
struct CliFailure {
  int code;
  std::string message;
};

[[noreturn]] void fail_input(const std::string& what) { throw CliFailure{kExitInput, what}; }

/// Runs `read` and turns any library or filesystem error into exit code 2.
template <typename F>
auto input(F&& read) -> decltype(read()) {
  try {
    return read();
  } catch (const stocs::Error& e) {
    fail_input(e.what());
  } catch (const std::exception& e) {
    fail_input(e.what());
  }
}

template <typename F>
void output(F&& write) {
  try {
    write();
  } catch (const std::exception& e) {
    throw CliFailure{kExitOutput, e.what()};
  }
}

void write_json_out(const fs::path& path, const json& j) {
  output([&] { stocs::write_json(path, j); });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string log_level = "warn";
};

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string model, out, id;
  double voxel = 0.01;
  double dist_step = 0.0;
  double angle_step_deg = 12.0;
  double unit_scale = 1.0;
};

void add_preprocess(CLI::App& app, PreprocessArgs& a) {
  app.add_option("--model", a.model, "Input PLY point cloud")->required();
  app.add_option("--out", a.out, "Output model file (SPM1)")->required();
  app.add_option("--voxel", a.voxel, "Subsampling voxel, meters")->check(CLI::PositiveNumber);
  app.add_option("--dist-step", a.dist_step, "Feature distance step, meters (0: 2% of diameter)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--angle-step", a.angle_step_deg, "Feature angle step, degrees")->check(CLI::PositiveNumber);
  app.add_option("--id", a.id, "Class identifier (default: file stem)");
  app.add_option("--unit-scale", a.unit_scale, "Multiplier from PLY units to meters")->check(CLI::PositiveNumber);
}

int run_preprocess(const PreprocessArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string id = a.id.empty() ? fs::path(a.model).stem().string() : a.id;
  const auto model = input([&] {
    const auto cloud = stocs::read_ply(a.model, a.unit_scale);
    return stocs::build_model(cloud, a.voxel, a.dist_step, a.angle_step_deg * std::numbers::pi / 180.0, id);
  });
  output([&] { stocs::save_model(model, a.out); });
  spdlog::info("model '{}': {} points, diameter {:.4f} m, {} feature keys, {:.3f} s", model.id, model.cloud.size(),
               model.diameter, model.ppf.counts.size(), seconds_since(t0));
  return kExitOk;
}

// ------------------------------------------------------------------ estimate

struct EstimateArgs {
  std::string depth, intrinsics, heatmap, class_id, model, out;
  std::vector<std::string> multiscale;
  std::size_t trials = 500;
  double delta_s = 0.0;
  bool refine_icp = false;
  int stride = 2;
};

void add_estimate(CLI::App& app, EstimateArgs& a) {
  app.add_option("--scene-depth", a.depth, "16-bit depth PNG")->required();
  app.add_option("--intrinsics", a.intrinsics, "Camera intrinsics JSON")->required();
  app.add_option("--heatmap", a.heatmap, "Class heatmaps (FHM1)")->required();
  app.add_option("--class", a.class_id, "Class to estimate")->required();
  app.add_option("--model", a.model, "Preprocessed model (SPM1)")->required();
  app.add_option("--out", a.out, "Output pose JSON")->required();
  app.add_option("--trials", a.trials, "Number of sampled bases")->check(CLI::PositiveNumber);
  app.add_option("--delta-s", a.delta_s, "Scoring tolerance, meters (0: automatic)")->check(CLI::NonNegativeNumber);
  app.add_flag("--refine-icp", a.refine_icp, "Refine the pose with ICP");
  app.add_option("--multiscale-heatmaps", a.multiscale, "Further heatmaps of the same image at other scales");
  app.add_option("--stride", a.stride, "Depth pixel stride")->check(CLI::PositiveNumber);
}

int run_estimate(const EstimateArgs& a, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto depth = input([&] { return stocs::read_depth_png(a.depth); });
  const auto k = input([&] { return stocs::read_intrinsics(a.intrinsics); });
  const auto model = input([&] { return stocs::load_model(a.model); });
  const auto heatmap = input([&] {
    std::vector<stocs::RawHeatmap> maps{stocs::load_heatmap(a.heatmap)};
    for (const auto& p : a.multiscale) maps.push_back(stocs::load_heatmap(p));
    auto combined = stocs::combine_multiscale(maps);
    auto h = stocs::normalize_heatmap(combined);
    for (const auto& c : h.constant_classes) spdlog::warn("heatmap for class '{}' is constant", c);
    h.class_index(a.class_id);
    return h;
  });
  const auto scene = input([&] {
    stocs::SceneOptions opts;
    opts.stride = a.stride;
    return stocs::prepare_scene(depth, k, heatmap, a.class_id, opts);
  });

  stocs::StocsConfig cfg;
  cfg.trials = a.trials;
  cfg.delta_s = a.delta_s;
  cfg.seed = g.seed;
  cfg.threads = g.threads;

  json result;
  try {
    std::optional<stocs::IcpConfig> icp;
    if (a.refine_icp) icp = stocs::IcpConfig{};
    const auto r = stocs::estimate_in_scene(scene, model, cfg, icp);
    result = stocs::pose_to_json({a.class_id, r.pose(), r.hypothesis.score, cfg.trials, cfg.seed});
    result["refined"] = r.icp.has_value();
    spdlog::info("class '{}': score {:.3f}, {} congruent sets, {} hypotheses fully scored", a.class_id,
                 r.hypothesis.score, r.stats.congruent_sets, r.stats.scored);
  } catch (const stocs::Error& e) {
    const auto code = e.code();
    if (code != stocs::ErrorCode::InsufficientSupport && code != stocs::ErrorCode::NoHypothesisFound &&
        code != stocs::ErrorCode::InsufficientOverlap) {
      throw;
    }
    json failure = {{"class_id", a.class_id},
                    {"reason", std::string(stocs::to_string(code))},
                    {"message", e.what()},
                    {"trials", cfg.trials},
                    {"seed", cfg.seed}};
    write_json_out(a.out, failure);
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }
  write_json_out(a.out, result);
  spdlog::info("wall-clock for class '{}': {:.3f} s", a.class_id, seconds_since(t0));
  return kExitOk;
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::vector<std::string> preds, gts, models, depths, intrinsics;
  std::string metrics = "add,adds,vsd";
  double tau = 0.02;
  double theta = 0.3;
  double fraction = 0.1;
  std::string out;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  app.add_option("--pred", a.preds, "Predicted pose JSON (repeatable)");
  app.add_option("--gt", a.gts, "Ground truth JSON: scene truth or pose (one, or one per prediction)")->required();
  app.add_option("--model", a.models, "Preprocessed models (repeatable)")->required();
  app.add_option("--metrics", a.metrics, "Comma-separated subset of add,adds,vsd");
  app.add_option("--tau", a.tau, "VSD depth tolerance, meters")->check(CLI::PositiveNumber);
  app.add_option("--theta", a.theta, "VSD correctness threshold")->check(CLI::Range(0.0, 1.0));
  app.add_option("--add-fraction", a.fraction, "ADD threshold as a fraction of the diameter")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--scene-depth", a.depths, "Scene depth PNG (one, or one per prediction)");
  app.add_option("--intrinsics", a.intrinsics, "Intrinsics JSON (one, or one per prediction)");
  app.add_option("--out", a.out, "Output report JSON")->required();
}

/// Element i of a list given once or once per item.
const std::string* pick(const std::vector<std::string>& v, std::size_t i, std::size_t n, const char* flag) {
  if (v.empty()) return nullptr;
  if (v.size() == 1) return &v.front();
  if (v.size() != n) fail_input(std::string(flag) + " must be given once or once per --pred");
  return &v[i];
}

int run_evaluate(const EvaluateArgs& a, const Globals& g) {
  std::vector<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    for (std::string m; std::getline(ss, m, ',');) {
      if (m != "add" && m != "adds" && m != "vsd") fail_input("unknown metric '" + m + "'");
      wanted.push_back(m);
    }
  }
  const auto want = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
  const std::size_t n = a.preds.size();
  if (want("vsd") && n > 0 && (a.depths.empty() || a.intrinsics.empty())) {
    fail_input("vsd needs --scene-depth and --intrinsics");
  }
  for (std::size_t i = 0; i < n; ++i) {
    pick(a.gts, i, n, "--gt");
    pick(a.depths, i, n, "--scene-depth");
    pick(a.intrinsics, i, n, "--intrinsics");
  }

  std::map<std::string, stocs::ObjectModel> models;
  for (const auto& p : a.models) {
    auto m = input([&] { return stocs::load_model(p); });
    const std::string id = m.id;
    models.emplace(id, std::move(m));
  }

  struct Item {
    stocs::PoseRecord pred;
    bool has_pose = false;
    stocs::RigidTransform gt;
    const stocs::ObjectModel* model = nullptr;
    std::optional<stocs::DepthImage> depth;
    stocs::CameraIntrinsics k;
  };
  std::vector<Item> items(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& it = items[i];
    const json pj = input([&] { return stocs::read_json(a.preds[i]); });
    if (pj.contains("reason")) {
      it.pred.class_id = input([&] { return pj.at("class_id").get<std::string>(); });
    } else {
      it.pred = input([&] { return stocs::pose_from_json(pj); });
      it.has_pose = true;
    }
    const json gj = input([&] { return stocs::read_json(*pick(a.gts, i, n, "--gt")); });
    it.gt = input([&] {
      if (gj.contains("objects")) return stocs::ground_truth_from_json(gj).find(it.pred.class_id).pose;
      const auto rec = stocs::pose_from_json(gj);
      if (rec.class_id != it.pred.class_id) fail_input("ground truth class does not match the prediction");
      return rec.transform;
    });
    const auto m = models.find(it.pred.class_id);
    if (m == models.end()) fail_input("no --model for class '" + it.pred.class_id + "'");
    it.model = &m->second;
    if (want("vsd")) {
      it.depth = input([&] { return stocs::read_depth_png(*pick(a.depths, i, n, "--scene-depth")); });
      it.k = input([&] { return stocs::read_intrinsics(*pick(a.intrinsics, i, n, "--intrinsics")); });
    }
  }
  if (n == 0) spdlog::warn("no predictions given; recall is 0");

  stocs::VsdParams vsd_params;
  vsd_params.tau = a.tau;
  vsd_params.theta = a.theta;
  std::vector<json> rows(n);
  std::vector<double> adds_errors(n, std::numeric_limits<double>::infinity());
  std::vector<char> vsd_ok(n, 0);
  stocs::parallel_for(n, g.threads, [&](std::size_t i) {
    const auto& it = items[i];
    json row = {{"class_id", it.pred.class_id}, {"estimated", it.has_pose}};
    if (!it.has_pose) {
      row["correct_add"] = false;
      row["correct_vsd"] = false;
      rows[i] = std::move(row);
      return;
    }
    const auto& pose = it.pred.transform;
    if (want("add")) {
      row["add"] = stocs::add_error(it.gt, pose, *it.model);
      row["correct_add"] = stocs::pose_correct_add(it.gt, pose, *it.model, a.fraction);
    }
    if (want("adds")) {
      adds_errors[i] = stocs::add_s_error(it.gt, pose, *it.model);
      row["add_s"] = adds_errors[i];
    }
    if (want("vsd")) {
      const double e = stocs::vsd_error(it.gt, pose, *it.model, *it.depth, it.k, vsd_params);
      row["vsd"] = e;
      vsd_ok[i] = stocs::pose_correct_vsd(e, vsd_params);
      row["correct_vsd"] = static_cast<bool>(vsd_ok[i]);
    }
    rows[i] = std::move(row);
  });

  json aggregate = {{"count", n}};
  if (want("adds")) {
    aggregate["auc_add_s"] = stocs::auc(stocs::accuracy_curve(adds_errors, 0.1, 100), 0.1);
  }
  if (want("vsd")) {
    const auto hits = std::count(vsd_ok.begin(), vsd_ok.end(), 1);
    aggregate["recall_vsd"] = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
  write_json_out(a.out, {{"objects", rows}, {"aggregate", aggregate}});
  return kExitOk;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string models_dir, out, heatmap_mode = "perfect";
  std::size_t n_scenes = 1;
  double noise_sigma = 0.002;
  int min_objects = 1, max_objects = 4;
  double background_depth = 1.2;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  app.add_option("--models", a.models_dir, "Directory of preprocessed models (*.spm)")->required();
  app.add_option("--n-scenes", a.n_scenes, "Number of scenes")->check(CLI::PositiveNumber);
  app.add_option("--noise-sigma", a.noise_sigma, "Depth noise, meters")->check(CLI::NonNegativeNumber);
  app.add_option("--heatmap-mode", a.heatmap_mode, "perfect | blurred | corrupted:<p>");
  app.add_option("--min-objects", a.min_objects, "Fewest objects per scene")->check(CLI::PositiveNumber);
  app.add_option("--max-objects", a.max_objects, "Most objects per scene")->check(CLI::PositiveNumber);
  app.add_option("--background-depth", a.background_depth, "Depth of a back wall, meters (0: none)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out", a.out, "Output directory")->required();
}

int run_simulate(const SimulateArgs& a, const Globals& g) {
  const auto mode = input([&] { return stocs::HeatmapMode::parse(a.heatmap_mode); });
  if (a.min_objects > a.max_objects) fail_input("--min-objects exceeds --max-objects");
  std::vector<fs::path> files;
  input([&] {
    for (const auto& e : fs::directory_iterator(a.models_dir))
      if (e.path().extension() == ".spm") files.push_back(e.path());
    return 0;
  });
  std::sort(files.begin(), files.end());
  if (files.empty()) fail_input("no *.spm models in " + a.models_dir);
  std::vector<stocs::ObjectModel> models;
  std::vector<std::string> ids;
  for (const auto& f : files) {
    models.push_back(input([&] { return stocs::load_model(f); }));
    ids.push_back(models.back().id);
  }
  const int most = std::min<int>(a.max_objects, static_cast<int>(models.size()));
  const int fewest = std::min(a.min_objects, most);

  output([&] { fs::create_directories(a.out); });
  std::vector<std::string> errors(a.n_scenes);
  stocs::parallel_for(a.n_scenes, g.threads, [&](std::size_t s) {
    stocs::SceneSpec spec;
    spec.seed = stocs::stream_seed(g.seed, s);
    spec.noise_sigma = a.noise_sigma;
    spec.background_depth = a.background_depth;
    stocs::Rng pick_rng(stocs::stream_seed(spec.seed, 7));
    const auto count = fewest + static_cast<int>(pick_rng.below(static_cast<std::uint64_t>(most - fewest + 1)));
    std::vector<std::size_t> order(models.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int i = 0; i < count; ++i) {
      std::swap(order[i], order[i + pick_rng.below(order.size() - i)]);
      spec.objects.push_back({order[i], std::nullopt});
    }
    try {
      const auto scene = stocs::render_scene(spec, models);
      const auto heatmap = stocs::ground_truth_heatmap(scene.truth, mode, spec.seed, ids);
      stocs::write_scene(a.out, s, scene, spec.intrinsics, heatmap);
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  });
  for (std::size_t s = 0; s < a.n_scenes; ++s) {
    if (!errors[s].empty()) throw CliFailure{kExitOutput, "scene " + std::to_string(s) + ": " + errors[s]};
  }
  spdlog::info("wrote {} scenes to {}", a.n_scenes, a.out);
  return kExitOk;
}

// ------------------------------------------------------------- score-heatmap

struct ScoreArgs {
  std::string heatmap, out;
  std::size_t k_max = 1, k_min = 1;
  double alpha = 1.0;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  app.add_option("--heatmap", a.heatmap, "Class heatmaps (FHM1)")->required();
  app.add_option("--k-max", a.k_max, "Cells in the maximum term")->check(CLI::PositiveNumber);
  app.add_option("--k-min", a.k_min, "Cells in the minimum term")->check(CLI::PositiveNumber);
  app.add_option("--alpha", a.alpha, "Weight of the minimum term");
  app.add_option("--out", a.out, "Output JSON")->required();
}

int run_score(const ScoreArgs& a) {
  const auto h = input([&] { return stocs::load_heatmap(a.heatmap); });
  const stocs::WildcatPoolingConfig cfg{a.k_max, a.k_min, a.alpha};
  json scores = json::object();
  input([&] {
    for (std::size_t c = 0; c < h.class_ids.size(); ++c) {
      const stocs::Grid grid{h.width, h.height, h.grids[c]};
      scores[h.class_ids[c]] = stocs::logistic(stocs::spatial_pool(grid, cfg));
    }
    return 0;
  });
  write_json_out(a.out, scores);
  return kExitOk;
}

// --------------------------------------------------------------------- shape

struct ShapeArgs {
  std::string name, out;
  double spacing = 0.002;
};

void add_shape(CLI::App& app, ShapeArgs& a) {
  app.add_option("--name", a.name, "Built-in shape")->required()->check(CLI::IsMember(stocs::shapes::shape_names()));
  app.add_option("--spacing", a.spacing, "Surface sample spacing, meters")->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "Output PLY")->required();
}

int run_shape(const ShapeArgs& a) {
  const auto cloud = input([&] { return stocs::shapes::make_shape(a.name, a.spacing); });
  output([&] { stocs::write_ply(a.out, cloud); });
  return kExitOk;
}

void configure_logging(const std::string& level_flag) {
  std::string level = level_flag;
  if (const char* env = std::getenv("STOCS_LOG"); env && *env) level = env;
  auto logger = spdlog::stderr_logger_st("stocs");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") {
    fail_input("unknown log level '" + level + "'");
  }
  spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heatmap-guided 6D pose estimation with stochastic congruent sets"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may also follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|critical|off (STOCS_LOG overrides)");

  PreprocessArgs pre;
  EstimateArgs est;
  EvaluateArgs eva;
  SimulateArgs sim;
  ScoreArgs sco;
  ShapeArgs shp;
  auto* c_pre = app.add_subcommand("preprocess", "Build a model file from a PLY cloud");
  auto* c_est = app.add_subcommand("estimate", "Estimate one object pose in a depth scene");
  auto* c_eva = app.add_subcommand("evaluate", "Score predicted poses against ground truth");
  auto* c_sim = app.add_subcommand("simulate", "Synthesize depth scenes with ground truth");
  auto* c_sco = app.add_subcommand("score-heatmap", "Pool heatmaps into per-class scores");
  auto* c_shp = app.add_subcommand("shape", "Write a built-in test object as PLY");
  add_preprocess(*c_pre, pre);
  add_estimate(*c_est, est);
  add_evaluate(*c_eva, eva);
  add_simulate(*c_sim, sim);
  add_score(*c_sco, sco);
  add_shape(*c_shp, shp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    configure_logging(g.log_level);
    if (c_pre->parsed()) return run_preprocess(pre);
    if (c_est->parsed()) return run_estimate(est, g);
    if (c_eva->parsed()) return run_evaluate(eva, g);
    if (c_sim->parsed()) return run_simulate(sim, g);
    if (c_sco->parsed()) return run_score(sco);
    if (c_shp->parsed()) return run_shape(shp);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
