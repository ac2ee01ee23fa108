#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ctsfm/evaluation.hpp"
#include "ctsfm/io.hpp"
#include "ctsfm/simulator.hpp"

namespace ctsfm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "ctsfm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ctsfm_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Noise-free unless told otherwise; short so reconstructions stay cheap.
  std::string simulate(const std::string& name, int seed, double duration, bool noisy = false) {
    std::vector<std::string> args{"simulate", "--motion",   "free", "--seed", std::to_string(seed),
                                  "--duration", std::to_string(duration), "--out", path(name)};
    if (!noisy) args.insert(args.end(), {"--sigma-image", "0", "--sigma-imu", "0"});
    const Outcome o = run(args);
    EXPECT_EQ(o.code, 0) << o.err;
    return path(name);
  }

  fs::path dir_;
};

std::size_t line_count(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

json read_json(const std::string& path) { return json::parse(read_text_file(path)); }

TEST_F(Cli, SimulateIsDeterministic) {
  const auto a = simulate("a.json", 7, 2.0, true);
  const auto b = simulate("b.json", 7, 2.0, true);
  EXPECT_EQ(read_text_file(a), read_text_file(b));
  const auto c = simulate("c.json", 8, 2.0, true);
  EXPECT_NE(read_text_file(a), read_text_file(c));
}

TEST_F(Cli, SimulateDefaultsToFiveSeconds) {
  ASSERT_EQ(run({"simulate", "--seed", "1", "--out", path("d.json")}).code, 0);
  const Dataset d = read_dataset(path("d.json"));
  EXPECT_EQ(d.meta.motion, "free");
  EXPECT_NEAR(d.frames.back().t0 + d.meta.camera.frame_period, 5.0, 0.05);
  EXPECT_NEAR(d.imu.back().t, 5.0, 1e-9);
}

TEST_F(Cli, InvalidMotionIsUsageError) {
  const Outcome o = run({"simulate", "--motion", "flying", "--out", path("d.json")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("flying"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("d.json")));
}

TEST_F(Cli, ParseErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"simulate"}).code, 2);
  EXPECT_EQ(run({"simulate", "--seed", "abc", "--out", path("d.json")}).code, 2);
  EXPECT_EQ(run({"simulate", "--duration", "0.1", "--out", path("d.json")}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"--version"}).code, 0);
}

TEST_F(Cli, MissingInputIsRuntimeError) {
  const Outcome o = run({"reconstruct", "--dataset", path("missing.json"), "--out", path("r.json")});
  EXPECT_EQ(o.code, 1);
  EXPECT_FALSE(o.err.empty());
}

TEST_F(Cli, ReconstructWritesResultLogAndManifest) {
  const auto d = simulate("d.json", 3, 1.5);
  const Outcome o = run({"reconstruct", "--dataset", d, "--trajectory", "split", "--projection", "static",
                         "--iterations", "4", "--out", path("r.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const ResultFile r = read_result(path("r.json"));
  EXPECT_EQ(r.kind, TrajectoryKind::kSplit);
  EXPECT_EQ(r.method, ProjectionMethod::kStatic);
  EXPECT_LE(r.iterations, 4);
  EXPECT_EQ(line_count(path("r.log.jsonl")), static_cast<std::size_t>(r.iterations) + 1);
  const json m = read_json(path("r.manifest.json"));
  EXPECT_EQ(m["command"], "reconstruct");
  EXPECT_EQ(m["seeds"], json::array({3}));
  EXPECT_EQ(m["config"]["projection"], "static");
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_TRUE(m["timings"].contains("total_s"));
  EXPECT_TRUE(m.contains("version"));
}

TEST_F(Cli, BothTrajectoryKindsUseTheSameMeasurements) {
  const auto d = simulate("d.json", 4, 1.5, true);
  for (const char* kind : {"split", "se3"}) {
    ASSERT_EQ(run({"reconstruct", "--dataset", d, "--trajectory", kind, "--iterations", "1", "--out",
                   path(std::string(kind) + ".json")})
                  .code,
              0);
  }
  const ResultFile a = read_result(path("split.json"));
  const ResultFile b = read_result(path("se3.json"));
  EXPECT_EQ(a.knot_spacing, b.knot_spacing);
  ASSERT_EQ(a.landmarks.size(), b.landmarks.size());
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    EXPECT_EQ(a.landmarks[i].id, b.landmarks[i].id);
    EXPECT_EQ(a.landmarks[i].ref_frame, b.landmarks[i].ref_frame);
    EXPECT_EQ(a.landmarks[i].ref_obs, b.landmarks[i].ref_obs);
  }
  EXPECT_EQ(a.trajectory.grid().t0, b.trajectory.grid().t0);
  EXPECT_EQ(a.trajectory.grid().count, b.trajectory.grid().count);
}

TEST_F(Cli, NoiseFreeReconstructionReachesLowRelativeCost) {
  const auto d = simulate("d.json", 2, 2.0);
  ASSERT_EQ(run({"reconstruct", "--dataset", d, "--out", path("r.json")}).code, 0);
  const ResultFile r = read_result(path("r.json"));
  EXPECT_LT(r.relative_cost(), 1e-4);
  EXPECT_EQ(line_count(path("r.log.jsonl")), static_cast<std::size_t>(r.iterations) + 1);
}

TEST_F(Cli, ThreadCountFromEnvironment) {
  const auto d = simulate("d.json", 3, 1.5);
  ::setenv("CTSFM_THREADS", "2", 1);
  const Outcome a = run({"reconstruct", "--dataset", d, "--iterations", "1", "--out", path("a.json")});
  ::setenv("CTSFM_THREADS", "zero", 1);
  const Outcome bad = run({"reconstruct", "--dataset", d, "--iterations", "1", "--out", path("b.json")});
  const Outcome flag =
      run({"reconstruct", "--dataset", d, "--iterations", "1", "--threads", "3", "--out", path("c.json")});
  ::unsetenv("CTSFM_THREADS");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(read_json(path("a.manifest.json"))["config"]["threads"], 2);
  EXPECT_EQ(bad.code, 2);
  EXPECT_EQ(flag.code, 0);
  EXPECT_EQ(read_json(path("c.manifest.json"))["config"]["threads"], 3);
}

/// A result carrying the dataset's own ground-truth trajectory.
ResultFile ground_truth_result(const std::string& dataset_path) {
  const Dataset d = read_dataset(dataset_path);
  ResultFile r;
  r.dataset = dataset_path;
  r.trajectory = d.ground_truth->trajectory(d.meta.gravity);
  r.termination = "converged";
  r.initial_cost = 1.0;
  r.final_cost = 0.0;
  return r;
}

TEST_F(Cli, EvaluateGroundTruthGivesZeroArea) {
  const auto d = simulate("d.json", 5, 1.5);
  write_result(path("gt.json"), ground_truth_result(d));
  const Outcome o = run({"evaluate", "--result", path("gt.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json m = read_json(path("gt.metrics.json"));
  EXPECT_LT(m["area_error"].get<double>(), 1e-12);
  EXPECT_TRUE(m["inlier"].get<bool>());
  EXPECT_EQ(m["threshold"].get<double>(), 0.25);
}

TEST_F(Cli, EvaluateWithoutGroundTruthIsUsageError) {
  const auto d = simulate("d.json", 5, 1.5);
  write_result(path("gt.json"), ground_truth_result(d));
  Dataset stripped = read_dataset(d);
  stripped.ground_truth.reset();
  write_dataset(path("plain.json"), stripped);
  const Outcome o = run({"evaluate", "--result", path("gt.json"), "--dataset", path("plain.json")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("ground truth"), std::string::npos);
}

TEST_F(Cli, EvaluateBatchAggregatesInlierRatio) {
  fs::create_directories(dir_ / "results");
  const auto d = simulate("d.json", 6, 1.5);
  ResultFile good = ground_truth_result(d);
  write_result(path("results/good.json"), good);
  // A 3 m sideways jump halfway through cannot be aligned away.
  ResultFile bad = good;
  bad.method = ProjectionMethod::kLifting;
  std::vector<Pose> poses = good.trajectory.control_poses();
  const KnotGrid& g = good.trajectory.grid();
  for (int k = 0; k < g.count; ++k) {
    if (g.t0 + k * g.dt > 0.75) poses[k].p += Eigen::Vector3d(0.0, 3.0, 0.0);
  }
  bad.trajectory = Trajectory::from_control_poses(good.trajectory.kind(), g, poses, good.trajectory.gravity());
  write_result(path("results/bad.json"), bad);
  write_result(path("results/bad_too.json"), bad);

  const Outcome o = run({"evaluate", "--result", path("results")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json s = read_json(path("results/evaluation.summary.json"));
  ASSERT_EQ(s["groups"].size(), 2u);
  int count = 0;
  int inliers = 0;
  for (const auto& e : s["groups"]) {
    count += e["count"].get<int>();
    inliers += e["inliers"].get<int>();
  }
  EXPECT_EQ(count, 3);
  EXPECT_EQ(inliers, 1);
  EXPECT_EQ(line_count(path("results/evaluation.csv")), 4u);
  // Re-running ignores the outputs of the first pass.
  EXPECT_EQ(run({"evaluate", "--result", path("results")}).code, 0);
  EXPECT_EQ(line_count(path("results/evaluation.csv")), 4u);
}

TEST_F(Cli, EvaluateEmptyDirectoryIsUsageError) {
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(run({"evaluate", "--result", path("empty")}).code, 2);
}

TEST_F(Cli, BenchmarkTableIsNormalizedToSe3Newton) {
  const auto d = simulate("d.json", 3, 1.5, true);
  const Outcome o = run({"benchmark", "--dataset", d, "--all-combinations", "--iterations", "1", "--knot-spacing",
                         "0.1", "--out", path("bench.csv")});
  ASSERT_EQ(o.code, 0) << o.err;
  std::ifstream in(path("bench.csv"));
  std::string line;
  std::getline(in, line);
  std::map<std::string, double> ratio;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 6u);
    ratio[cells[0] + "+" + cells[1]] = std::stod(cells[5]);
  }
  EXPECT_EQ(ratio.size(), 6u);
  EXPECT_EQ(ratio.at("se3+newton"), 1.0);
  EXPECT_TRUE(fs::exists(path("bench.manifest.json")));
}

TEST_F(Cli, ExperimentWritesTidyTables) {
  const Outcome o = run({"experiment", "--count", "2", "--duration", "1.5", "--trajectory", "split",
                         "--projection", "newton", "--iterations", "3", "--threads", "2", "--out-dir",
                         path("exp")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(line_count(path("exp/runs.csv")), 3u);
  EXPECT_EQ(line_count(path("exp/summary.csv")), 2u);
  EXPECT_GT(line_count(path("exp/iterations.csv")), 3u);
  const json m = read_json(path("exp/manifest.json"));
  EXPECT_EQ(m["seeds"], json::array({1, 2}));
  EXPECT_EQ(m["outputs"].size(), 5u);
  for (const auto& p : m["outputs"]) EXPECT_TRUE(fs::exists(p.get<std::string>()));
}

TEST_F(Cli, EveryOutputHasExactlyOneManifest) {
  const auto d = simulate("d.json", 3, 1.5);
  ASSERT_EQ(run({"reconstruct", "--dataset", d, "--iterations", "2", "--out", path("r.json")}).code, 0);
  ASSERT_EQ(run({"evaluate", "--result", path("r.json")}).code, 0);
  std::map<fs::path, int> referenced;
  std::vector<fs::path> outputs;
  for (const auto& e : fs::directory_iterator(dir_)) {
    const std::string name = e.path().filename().string();
    if (name.find(".manifest.json") != std::string::npos) {
      const json manifest = read_json(e.path().string());
      for (const auto& p : manifest["outputs"]) {
        fs::path q = p.get<std::string>();
        if (q.is_relative()) q = fs::current_path() / q;
        ++referenced[fs::weakly_canonical(q)];
      }
    } else {
      outputs.push_back(fs::weakly_canonical(e.path()));
    }
  }
  EXPECT_EQ(outputs.size(), 4u);  // dataset, result, log, metrics
  for (const auto& p : outputs) EXPECT_EQ(referenced[p], 1) << p;
}

}  // namespace
}  // namespace ctsfm
