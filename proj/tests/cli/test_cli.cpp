#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace stocs;
using namespace stocs::testing;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STOCS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Shared workspace: two models and five simulated scenes.
class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = scratch_dir("cli");
    fs::create_directories(dir / "models");
    for (const char* name : {"drill", "tee"}) {
      const auto ply = (dir / name).string() + ".ply";
      ASSERT_EQ(run_cli(std::string("shape --name ") + name + " --out " + ply), 0);
      ASSERT_EQ(run_cli("preprocess --model " + ply + " --out " + (dir / "models" / name).string() + ".spm"), 0);
    }
    ASSERT_EQ(run_cli("--seed 3 simulate --models " + (dir / "models").string() + " --n-scenes 5 --out " +
                      (dir / "scenes").string()),
              0);
  }

  static std::string scene(const std::string& suffix) { return (dir / "scenes" / ("0000_" + suffix)).string(); }
  static std::string model(const std::string& id) { return (dir / "models" / (id + ".spm")).string(); }
  static std::string estimate_args(const std::string& cls) {
    return "estimate --scene-depth " + scene("depth.png") + " --intrinsics " + scene("intrinsics.json") +
           " --heatmap " + scene("heatmap.fhm") + " --class " + cls + " --model " + model(cls) + " --trials 100";
  }
  static std::string first_class() { return read_ground_truth(scene("gt.json")).objects.front().class_id; }
};

fs::path Cli::dir;

}  // namespace

TEST_F(Cli, SimulateWritesFourFilesPerScene) {
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir / "scenes")) count += e.is_regular_file();
  EXPECT_EQ(count, 20u);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto f = scene_files(dir / "scenes", s);
    const auto gt = read_ground_truth(f.truth);
    EXPECT_GE(gt.objects.size(), 1u);
    EXPECT_LE(gt.objects.size(), 2u);
    EXPECT_EQ(load_heatmap(f.heatmap).class_ids, (std::vector<std::string>{"drill", "tee"}));
  }
}

TEST_F(Cli, PreprocessIsDeterministic) {
  const auto ply = (dir / "drill.ply").string();
  ASSERT_EQ(run_cli("--threads 1 preprocess --model " + ply + " --out " + (dir / "p1.spm").string()), 0);
  ASSERT_EQ(run_cli("--threads 3 preprocess --model " + ply + " --out " + (dir / "p3.spm").string()), 0);
  EXPECT_EQ(bytes(dir / "p1.spm"), bytes(dir / "p3.spm"));
  EXPECT_EQ(bytes(dir / "p1.spm"), bytes(model("drill")));
}

TEST_F(Cli, SimulateIsDeterministic) {
  const auto models = (dir / "models").string();
  ASSERT_EQ(run_cli("--seed 3 --threads 3 simulate --models " + models + " --n-scenes 5 --out " + (dir / "sim3").string()), 0);
  for (const auto& e : fs::directory_iterator(dir / "scenes"))
    EXPECT_EQ(bytes(e.path()), bytes(dir / "sim3" / e.path().filename())) << e.path();
}

TEST_F(Cli, EstimateAndEvaluateAreDeterministic) {
  const auto cls = first_class();
  for (const char* t : {"1", "3"}) {
    ASSERT_EQ(run_cli("--seed 5 --threads " + std::string(t) + " " + estimate_args(cls) + " --out " +
                      (dir / ("pose" + std::string(t) + ".json")).string()),
              0);
    ASSERT_EQ(run_cli("--seed 5 --threads " + std::string(t) + " " + estimate_args(cls) + " --refine-icp --out " +
                      (dir / ("icp" + std::string(t) + ".json")).string()),
              0);
  }
  EXPECT_EQ(bytes(dir / "pose1.json"), bytes(dir / "pose3.json"));
  EXPECT_EQ(bytes(dir / "icp1.json"), bytes(dir / "icp3.json"));
  const auto rec = pose_from_json(read_json(dir / "pose1.json"));
  EXPECT_EQ(rec.class_id, cls);

  const std::string eval = "evaluate --pred " + (dir / "pose1.json").string() + " --pred " +
                           (dir / "icp1.json").string() + " --gt " + scene("gt.json") + " --model " + model("drill") +
                           " --model " + model("tee") + " --scene-depth " + scene("depth.png") + " --intrinsics " +
                           scene("intrinsics.json");
  ASSERT_EQ(run_cli("--threads 1 " + eval + " --out " + (dir / "eval1.json").string()), 0);
  ASSERT_EQ(run_cli("--threads 3 " + eval + " --out " + (dir / "eval3.json").string()), 0);
  EXPECT_EQ(bytes(dir / "eval1.json"), bytes(dir / "eval3.json"));
  const auto report = read_json(dir / "eval1.json");
  ASSERT_EQ(report.at("objects").size(), 2u);
  EXPECT_EQ(report.at("aggregate").at("count"), 2);
}

TEST_F(Cli, ScoreHeatmapIsDeterministicAndZeroMapScoresOneHalf) {
  ASSERT_EQ(run_cli("--threads 1 score-heatmap --heatmap " + scene("heatmap.fhm") + " --out " + (dir / "s1.json").string()), 0);
  ASSERT_EQ(run_cli("--threads 3 score-heatmap --heatmap " + scene("heatmap.fhm") + " --out " + (dir / "s3.json").string()), 0);
  EXPECT_EQ(bytes(dir / "s1.json"), bytes(dir / "s3.json"));

  RawHeatmap zero;
  zero.width = 4;
  zero.height = 3;
  zero.class_ids = {"drill"};
  zero.grids = {std::vector<double>(12, 0.0)};
  save_heatmap(zero, dir / "zero.fhm");
  ASSERT_EQ(run_cli("score-heatmap --heatmap " + (dir / "zero.fhm").string() + " --out " + (dir / "z.json").string()), 0);
  EXPECT_EQ(read_json(dir / "z.json").at("drill").get<double>(), 0.5);
  EXPECT_EQ(run_cli("score-heatmap --k-max 13 --heatmap " + (dir / "zero.fhm").string() + " --out " +
                    (dir / "z.json").string()),
            2);
}

TEST_F(Cli, ShapeIsDeterministic) {
  ASSERT_EQ(run_cli("shape --name tee --out " + (dir / "tee2.ply").string()), 0);
  EXPECT_EQ(bytes(dir / "tee2.ply"), bytes(dir / "tee.ply"));
}

TEST_F(Cli, BadInputExitsWithTwo) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("estimate"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("preprocess --model " + (dir / "missing.ply").string() + " --out " + (dir / "x.spm").string()), 2);
  std::ofstream(dir / "garbage.fhm") << "not a heatmap";
  const std::string garbage = (dir / "garbage.fhm").string();
  EXPECT_EQ(run_cli("score-heatmap --heatmap " + garbage + " --out " + (dir / "g.json").string()), 2);
  const auto cls = first_class();
  std::string args = estimate_args(cls);
  args.replace(args.find(scene("heatmap.fhm")), scene("heatmap.fhm").size(), garbage);
  EXPECT_EQ(run_cli(args + " --out " + (dir / "g.json").string()), 2);
  EXPECT_EQ(run_cli(estimate_args("unknown") + " --out " + (dir / "g.json").string()), 2);
  EXPECT_EQ(run_cli("--seed 3 simulate --heatmap-mode corrupted:2 --models " + (dir / "models").string() +
                    " --out " + (dir / "bad").string()),
            2);
  EXPECT_EQ(run_cli("--log-level chatty shape --name tee --out " + (dir / "t.ply").string()), 2);
}

TEST_F(Cli, UnwritableOutputExitsWithThree) {
  EXPECT_EQ(run_cli("shape --name tee --out " + (dir / "no_such_dir" / "t.ply").string()), 3);
  EXPECT_EQ(run_cli("score-heatmap --heatmap " + scene("heatmap.fhm") + " --out " + dir.string()), 3);
}

TEST_F(Cli, EstimationFailureExitsWithFour) {
  auto h = load_heatmap(scene("heatmap.fhm"));
  for (auto& g : h.grids) std::fill(g.begin(), g.end(), 0.0);
  save_heatmap(h, dir / "empty.fhm");
  const auto cls = first_class();
  std::string args = estimate_args(cls);
  args.replace(args.find(scene("heatmap.fhm")), scene("heatmap.fhm").size(), (dir / "empty.fhm").string());
  EXPECT_EQ(run_cli(args + " --out " + (dir / "fail.json").string()), 4);
  const auto j = read_json(dir / "fail.json");
  EXPECT_EQ(j.at("class_id"), cls);
  EXPECT_TRUE(j.contains("reason"));
}
