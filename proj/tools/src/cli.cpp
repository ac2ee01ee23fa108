#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "ctsfm/errors.hpp"
#include "ctsfm/estimator.hpp"
#include "ctsfm/evaluation.hpp"
#include "ctsfm/io.hpp"
#include "ctsfm/simulator.hpp"
#include "ctsfm/version.hpp"
#include "support.hpp"

namespace ctsfm::cli {
namespace {

using nlohmann::json;

struct Streams {
  std::ostream& out;
  std::ostream& err;
  std::string command_line;
};

// ---------------------------------------------------------------------------
// Shared pieces

struct SolveFlags {
  double quality = 0.99;
  double knot_spacing = 0.0;
  int iterations = 50;
  double huber = 1.0;
  int threads = 0;

  void add_to(CLI::App* app) {
    app->add_option("--quality", quality, "Energy quality target for knot spacing selection")
        ->capture_default_str();
    app->add_option("--knot-spacing", knot_spacing, "Fixed knot spacing in seconds (0 selects from --quality)")
        ->capture_default_str();
    app->add_option("--iterations", iterations, "Maximum solver iterations")->capture_default_str();
    app->add_option("--huber", huber, "Huber threshold in pixels")->capture_default_str();
    app->add_option("--threads", threads, "Worker threads (default: CTSFM_THREADS or 1)");
  }

  ReconstructionOptions options(int num_threads) const {
    if (!(quality > 0.0 && quality < 1.0)) throw Error(Errc::kInvalidArgument, "--quality must lie in (0, 1)");
    ReconstructionOptions o;
    o.sew.q_hat = quality;
    o.sew.fixed_dt = knot_spacing;
    o.solver.max_iterations = iterations;
    o.solver.huber_c = huber;
    o.solver.num_threads = num_threads;
    return o;
  }

  json to_json() const {
    return {{"quality", quality}, {"knot_spacing", knot_spacing}, {"iterations", iterations}, {"huber", huber}};
  }
};

struct Combination {
  TrajectoryKind kind;
  ProjectionMethod method;
  bool operator<(const Combination& o) const {
    return std::pair(kind, method) < std::pair(o.kind, o.method);
  }
  bool operator==(const Combination& o) const { return kind == o.kind && method == o.method; }
};

std::vector<Combination> combinations(const std::vector<std::string>& kinds, const std::vector<std::string>& methods) {
  std::vector<Combination> out;
  for (const auto& k : kinds) {
    for (const auto& m : methods) {
      const Combination c{trajectory_kind_from_string(k), projection_method_from_string(m)};
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

const std::vector<Combination>& all_combinations() {
  static const std::vector<Combination> all =
      combinations({"se3", "split"}, {"newton", "lifting", "static"});
  return all;
}

Trajectory ground_truth_trajectory(const Dataset& dataset) {
  if (!dataset.ground_truth) throw Error(Errc::kInvalidArgument, "dataset has no ground truth to evaluate against");
  return dataset.ground_truth->trajectory(dataset.meta.gravity);
}

/// Aligned area error over the observed interval of the dataset.
double area_against(const Trajectory& estimate, const Dataset& dataset) {
  const Trajectory gt = ground_truth_trajectory(dataset);
  return area_error(align(estimate, gt, 100.0, dataset.time_span()));
}

ResultFile make_result(const std::string& dataset_path, Combination c, const SolveFlags& flags,
                       const Reconstruction& r) {
  ResultFile f;
  f.dataset = dataset_path;
  f.kind = c.kind;
  f.method = c.method;
  f.q_hat = flags.quality;
  f.knot_spacing = r.sew.dt;
  f.W_gyro = r.sew.W_gyro;
  f.W_accel = r.sew.W_accel;
  f.trajectory = r.solve.problem.trajectory;
  f.landmarks = r.solve.problem.landmarks;
  f.termination = to_string(r.solve.termination);
  f.initial_cost = r.solve.initial_cost;
  f.final_cost = r.solve.final_cost;
  f.iterations = static_cast<int>(r.solve.log.records.size()) - 1;
  f.mean_iteration_ms = r.solve.log.mean_iteration_ms();
  return f;
}

std::string combo_name(Combination c) { return std::string(to_string(c.kind)) + "+" + to_string(c.method); }

json summary_json(const ErrorSummary& s) {
  return {{"count", s.count},   {"inliers", s.inliers}, {"threshold", s.threshold},
          {"inlier_ratio", s.inlier_ratio}, {"median", s.median}, {"p40", s.p40},
          {"p60", s.p60}};
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateFlags {
  std::string motion = "free";
  std::uint64_t seed = 0;
  double duration = 5.0;
  std::string out;
  SimConfig config;
};

void add_simulate(CLI::App& app, SimulateFlags& f) {
  auto* c = app.add_subcommand("simulate", "Generate a synthetic rolling-shutter + IMU dataset");
  c->add_option("--motion", f.motion, "free | forward | sideways")->capture_default_str();
  c->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  c->add_option("--duration", f.duration, "Sequence length in seconds")->capture_default_str();
  c->add_option("--out", f.out, "Dataset file to write")->required();
  c->add_option("--sigma-image", f.config.sigma_image, "Pixel noise std")->capture_default_str();
  c->add_option("--sigma-imu", f.config.sigma_imu, "IMU noise std (both sensors)")->capture_default_str();
  c->add_option("--camera-rate", f.config.camera_rate, "Frames per second")->capture_default_str();
  c->add_option("--imu-rate", f.config.imu_rate, "IMU samples per second")->capture_default_str();
  c->add_option("--readout", f.config.camera.readout, "Rolling-shutter readout time in seconds")
      ->capture_default_str();
  c->add_option("--landmarks-per-second", f.config.landmarks_per_second, "Landmark creation rate")
      ->capture_default_str();
}

int run_simulate(const SimulateFlags& f, const Streams& io) {
  const Stopwatch clock;
  SimConfig config = f.config;
  config.seed = f.seed;
  config.duration = f.duration;
  config.camera.frame_period = 1.0 / config.camera_rate;
  const MotionType motion = motion_type_from_string(f.motion);
  const SimulatedSequence seq = simulate(motion, config);
  const fs::path out = f.out;
  write_dataset(out, seq.dataset);

  Manifest m;
  m.command_line = io.command_line;
  m.command = "simulate";
  m.config = {{"motion", f.motion},           {"seed", f.seed},
              {"duration", f.duration},       {"sigma_image", config.sigma_image},
              {"sigma_imu", config.sigma_imu}, {"camera_rate", config.camera_rate},
              {"imu_rate", config.imu_rate},  {"readout", config.camera.readout},
              {"landmarks_per_second", config.landmarks_per_second}};
  m.seeds = {f.seed};
  m.outputs = {out};
  m.timings["total_s"] = clock.seconds();
  write_manifest(sibling(out, ".manifest.json"), m);

  io.out << "wrote " << out.string() << ": " << seq.dataset.frames.size() << " frames, "
         << seq.dataset.tracks.size() << " tracks, " << seq.dataset.imu.size() << " IMU samples\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructFlags {
  std::string dataset;
  std::string trajectory = "split";
  std::string projection = "newton";
  std::string out;
  SolveFlags solve;
};

void add_reconstruct(CLI::App& app, ReconstructFlags& f) {
  auto* c = app.add_subcommand("reconstruct", "Estimate trajectory and structure from a dataset");
  c->add_option("--dataset", f.dataset, "Dataset file")->required();
  c->add_option("--trajectory", f.trajectory, "split | se3")->capture_default_str();
  c->add_option("--projection", f.projection, "static | newton | lifting")->capture_default_str();
  c->add_option("--out", f.out, "Result file to write")->required();
  f.solve.add_to(c);
}

int run_reconstruct(const ReconstructFlags& f, const Streams& io) {
  const Stopwatch clock;
  const Combination combo{trajectory_kind_from_string(f.trajectory), projection_method_from_string(f.projection)};
  const int threads = resolve_threads(f.solve.threads);
  const ReconstructionOptions options = f.solve.options(threads);
  const fs::path dataset_path = fs::absolute(f.dataset).lexically_normal();
  const Dataset dataset = read_dataset(dataset_path);
  const double load_s = clock.seconds();

  const Reconstruction r = reconstruct(dataset, combo.kind, combo.method, options);
  const ResultFile result = make_result(dataset_path.string(), combo, f.solve, r);

  const fs::path out = f.out;
  const fs::path log = sibling(out, ".log.jsonl");
  write_result(out, result);
  write_text_file(log, r.solve.log.to_json_lines());

  Manifest m;
  m.command_line = io.command_line;
  m.command = "reconstruct";
  m.config = f.solve.to_json();
  m.config["trajectory"] = f.trajectory;
  m.config["projection"] = f.projection;
  m.config["threads"] = threads;
  m.seeds = {dataset.meta.seed};
  m.inputs = {dataset_path};
  m.outputs = {out, log};
  m.timings = {{"load_s", load_s},
               {"total_s", clock.seconds()},
               {"mean_iteration_ms", result.mean_iteration_ms}};
  write_manifest(sibling(out, ".manifest.json"), m);

  io.out << combo_name(combo) << ": dt " << num(result.knot_spacing) << " s, " << result.iterations
         << " iterations (" << result.termination << "), relative cost " << num(result.relative_cost())
         << ", " << num(result.mean_iteration_ms) << " ms/iteration\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateFlags {
  std::string result;
  std::string dataset;
  double threshold = 0.25;
  std::string out;
};

void add_evaluate(CLI::App& app, EvaluateFlags& f) {
  auto* c = app.add_subcommand("evaluate", "Area error of results against ground truth");
  c->add_option("--result", f.result, "Result file, or a directory of result files")->required();
  c->add_option("--dataset", f.dataset, "Dataset with ground truth (default: the one named in the result)");
  c->add_option("--threshold", f.threshold, "Inlier threshold in m^2")->capture_default_str();
  c->add_option("--out", f.out, "Metrics file (batch mode: output prefix)");
}

fs::path dataset_for(const ResultFile& r, const fs::path& result_path, const std::string& flag) {
  if (!flag.empty()) return flag;
  fs::path p = r.dataset;
  if (p.empty()) throw Error(Errc::kInvalidArgument, "result names no dataset; pass --dataset");
  if (p.is_relative()) p = result_path.parent_path() / p;
  return p;
}

bool is_auxiliary(const fs::path& p) {
  const std::string name = p.filename().string();
  for (const char* suffix : {".manifest.json", ".metrics.json", ".summary.json"}) {
    const std::string s = suffix;
    if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
  }
  return false;
}

int run_evaluate_single(const EvaluateFlags& f, const Streams& io) {
  const Stopwatch clock;
  const fs::path result_path = f.result;
  const ResultFile r = read_result(result_path);
  const fs::path dataset_path = dataset_for(r, result_path, f.dataset);
  const Dataset dataset = read_dataset(dataset_path);
  const double area = area_against(r.trajectory, dataset);
  const auto [a, b] = dataset.time_span();

  json j;
  j["format_version"] = kFormatVersion;
  j["result"] = result_path.string();
  j["dataset"] = dataset_path.string();
  j["trajectory_kind"] = to_string(r.kind);
  j["projection"] = to_string(r.method);
  j["window"] = {a, b};
  j["area_error"] = area;
  j["threshold"] = f.threshold;
  j["inlier"] = area < f.threshold;
  j["relative_cost"] = r.relative_cost();
  j["iterations"] = r.iterations;
  j["termination"] = r.termination;
  const fs::path out = f.out.empty() ? sibling(result_path, ".metrics.json") : fs::path(f.out);
  write_text_file(out, j.dump(2) + "\n");

  Manifest m;
  m.command_line = io.command_line;
  m.command = "evaluate";
  m.config = {{"threshold", f.threshold}};
  m.seeds = {dataset.meta.seed};
  m.inputs = {result_path, dataset_path};
  m.outputs = {out};
  m.timings["total_s"] = clock.seconds();
  write_manifest(sibling(out, ".manifest.json"), m);

  io.out << "area " << num(area) << " m^2 (" << (area < f.threshold ? "inlier" : "outlier") << ")\n";
  return 0;
}

int run_evaluate_batch(const EvaluateFlags& f, const Streams& io) {
  const Stopwatch clock;
  const fs::path dir = f.result;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json" && !is_auxiliary(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  Table rows({"result", "dataset", "seed", "trajectory", "projection", "area_error", "inlier", "relative_cost",
              "iterations", "termination"});
  std::map<Combination, std::vector<double>> by_combo;
  std::map<fs::path, Dataset> datasets;
  std::set<std::uint64_t> seeds;
  Manifest m;
  for (const auto& path : files) {
    ResultFile r;
    try {
      r = read_result(path);
    } catch (const Error& e) {
      if (e.code() == Errc::kSchema) continue;  // datasets and other documents
      throw;
    }
    const fs::path dp = dataset_for(r, path, f.dataset);
    auto it = datasets.find(dp);
    if (it == datasets.end()) {
      it = datasets.emplace(dp, read_dataset(dp)).first;
      m.inputs.push_back(dp);
    }
    const double area = area_against(r.trajectory, it->second);
    by_combo[{r.kind, r.method}].push_back(area);
    seeds.insert(it->second.meta.seed);
    m.inputs.push_back(path);
    rows.add({path.filename().string(), dp.filename().string(), std::to_string(it->second.meta.seed),
              to_string(r.kind), to_string(r.method), num(area), area < f.threshold ? "1" : "0",
              num(r.relative_cost()), std::to_string(r.iterations), r.termination});
  }
  if (rows.rows() == 0) throw Error(Errc::kInvalidArgument, "no result files in " + dir.string());

  const fs::path prefix = f.out.empty() ? dir / "evaluation" : fs::path(f.out);
  const fs::path csv = prefix.string() + ".csv";
  const fs::path summary = prefix.string() + ".summary.json";
  rows.write(csv);
  json s = json::array();
  for (const auto& [combo, errors] : by_combo) {
    json e = summary_json(summarize(errors, f.threshold));
    e["trajectory"] = to_string(combo.kind);
    e["projection"] = to_string(combo.method);
    s.push_back(e);
    const ErrorSummary es = summarize(errors, f.threshold);
    io.out << std::left << std::setw(16) << combo_name(combo) << " inliers " << es.inliers << "/" << es.count
           << " median " << num(es.median) << " m^2\n";
  }
  write_text_file(summary, json{{"format_version", kFormatVersion}, {"groups", s}}.dump(2) + "\n");

  m.command_line = io.command_line;
  m.command = "evaluate";
  m.config = {{"threshold", f.threshold}, {"batch", true}};
  m.seeds.assign(seeds.begin(), seeds.end());
  m.outputs = {csv, summary};
  m.timings["total_s"] = clock.seconds();
  write_manifest(prefix.string() + ".manifest.json", m);
  return 0;
}

int run_evaluate(const EvaluateFlags& f, const Streams& io) {
  if (fs::is_directory(f.result)) return run_evaluate_batch(f, io);
  return run_evaluate_single(f, io);
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkFlags {
  std::vector<std::string> datasets;
  bool all = false;
  std::string trajectory = "split";
  std::string projection = "newton";
  std::string out = "benchmark.csv";
  int repeat = 1;
  SolveFlags solve;
};

void add_benchmark(CLI::App& app, BenchmarkFlags& f) {
  auto* c = app.add_subcommand("benchmark", "Mean solver iteration time per trajectory and projection choice");
  c->add_option("--dataset", f.datasets, "Dataset file (repeatable)")->required();
  c->add_option("--repeat", f.repeat, "Passes over the datasets")->capture_default_str();
  c->add_flag("--all-combinations", f.all, "Time all six trajectory/projection combinations");
  c->add_option("--trajectory", f.trajectory, "split | se3 (without --all-combinations)")->capture_default_str();
  c->add_option("--projection", f.projection, "static | newton | lifting (without --all-combinations)")
      ->capture_default_str();
  c->add_option("--out", f.out, "Timing table (CSV)")->capture_default_str();
  f.solve.iterations = 10;
  f.solve.add_to(c);
}

int run_benchmark(const BenchmarkFlags& f, const Streams& io) {
  const Stopwatch clock;
  const Combination reference{TrajectoryKind::kSe3, ProjectionMethod::kNewton};
  std::vector<Combination> combos = f.all ? all_combinations() : combinations({f.trajectory}, {f.projection});
  if (std::find(combos.begin(), combos.end(), reference) == combos.end()) combos.insert(combos.begin(), reference);
  const ReconstructionOptions options = f.solve.options(resolve_threads(f.solve.threads));

  std::map<Combination, double> wall_ms;
  std::map<Combination, int> iterations;
  std::set<std::uint64_t> seeds;
  Manifest m;
  if (f.repeat < 1) throw Error(Errc::kInvalidArgument, "--repeat must be positive");
  std::vector<Dataset> datasets;
  for (const auto& path : f.datasets) {
    datasets.push_back(read_dataset(path));
    seeds.insert(datasets.back().meta.seed);
    m.inputs.push_back(path);
  }
  for (int pass = 0; pass < f.repeat; ++pass) {
    for (const auto& dataset : datasets) {
      for (const auto& c : combos) {
        const Reconstruction r = reconstruct(dataset, c.kind, c.method, options);
        // Steps retried after a rejection reuse the linearization and are not
        // counted as iterations here.
        const auto& rec = r.solve.log.records;
        for (std::size_t i = 1; i < rec.size(); ++i) {
          if (!rec[i].linearized) continue;
          wall_ms[c] += rec[i].wall_ms;
          ++iterations[c];
        }
      }
    }
  }
  auto mean = [&](Combination c) { return iterations[c] > 0 ? wall_ms[c] / iterations[c] : std::nan(""); };
  const double ref = mean(reference);

  Table table({"trajectory", "projection", "datasets", "iterations", "mean_iteration_ms", "relative_to_se3_newton"});
  for (const auto& c : combos) {
    table.add({to_string(c.kind), to_string(c.method), std::to_string(f.datasets.size()),
               std::to_string(iterations[c]), num(mean(c)), num(mean(c) / ref)});
    io.out << std::left << std::setw(16) << combo_name(c) << std::right << std::fixed << std::setprecision(3)
           << std::setw(10) << mean(c) << " ms" << std::setprecision(2) << std::setw(8) << mean(c) / ref << "\n";
  }
  io.out.unsetf(std::ios::floatfield);
  const fs::path out = f.out;
  table.write(out);

  m.command_line = io.command_line;
  m.command = "benchmark";
  m.config = f.solve.to_json();
  m.config["all_combinations"] = f.all;
  m.config["repeat"] = f.repeat;
  m.seeds.assign(seeds.begin(), seeds.end());
  m.outputs = {out};
  m.timings["total_s"] = clock.seconds();
  write_manifest(sibling(out, ".manifest.json"), m);
  return 0;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentFlags {
  std::vector<std::string> motions{"free"};
  int count = 20;
  std::uint64_t first_seed = 1;
  double duration = 5.0;
  double sigma_image = 0.5;
  double sigma_imu = 0.01;
  std::vector<std::string> trajectories{"split", "se3"};
  std::vector<std::string> projections{"static", "newton", "lifting"};
  double threshold = 0.25;
  std::string out_dir;
  SolveFlags solve;
};

void add_experiment(CLI::App& app, ExperimentFlags& f) {
  auto* c = app.add_subcommand("experiment", "Simulate, reconstruct and evaluate a batch of sequences");
  c->add_option("--motion", f.motions, "Motion types (repeatable)")->capture_default_str();
  c->add_option("--count", f.count, "Sequences per motion type")->capture_default_str();
  c->add_option("--seed", f.first_seed, "Seed of the first sequence; later ones count up")->capture_default_str();
  c->add_option("--duration", f.duration, "Sequence length in seconds")->capture_default_str();
  c->add_option("--sigma-image", f.sigma_image, "Pixel noise std")->capture_default_str();
  c->add_option("--sigma-imu", f.sigma_imu, "IMU noise std")->capture_default_str();
  c->add_option("--trajectory", f.trajectories, "Trajectory kinds (repeatable)")->capture_default_str();
  c->add_option("--projection", f.projections, "Projection methods (repeatable)")->capture_default_str();
  c->add_option("--threshold", f.threshold, "Inlier threshold in m^2")->capture_default_str();
  c->add_option("--out-dir", f.out_dir, "Directory for datasets and tables")->required();
  f.solve.add_to(c);
}

struct RunRow {
  std::vector<std::string> run;
  std::vector<std::vector<std::string>> iterations;
  Combination combo;
  double area = 0.0;
  double relative_cost = 0.0;
};

struct SequenceOutcome {
  fs::path dataset;
  std::uint64_t seed = 0;
  std::vector<RunRow> rows;
};

int run_experiment(const ExperimentFlags& f, const Streams& io) {
  const Stopwatch clock;
  if (f.count < 1) throw Error(Errc::kInvalidArgument, "--count must be positive");
  std::vector<MotionType> motions;
  for (const auto& s : f.motions) motions.push_back(motion_type_from_string(s));
  const std::vector<Combination> combos = combinations(f.trajectories, f.projections);
  const int threads = resolve_threads(f.solve.threads);
  const ReconstructionOptions options = f.solve.options(1);

  const fs::path dir = f.out_dir;
  fs::create_directories(dir / "datasets");

  struct Task {
    MotionType motion;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto m : motions) {
    for (int i = 0; i < f.count; ++i) tasks.push_back({m, f.first_seed + static_cast<std::uint64_t>(i)});
  }
  std::vector<SequenceOutcome> outcomes(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;

  auto work = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      try {
        const Task task = tasks[t];
        const std::string motion = to_string(task.motion);
        SimConfig config;
        config.seed = task.seed;
        config.duration = f.duration;
        config.sigma_image = f.sigma_image;
        config.sigma_imu = f.sigma_imu;
        const SimulatedSequence seq = simulate(task.motion, config);
        SequenceOutcome& o = outcomes[t];
        o.seed = task.seed;
        o.dataset = dir / "datasets" / (motion + "_" + std::to_string(task.seed) + ".json");
        write_dataset(o.dataset, seq.dataset);
        for (const auto& c : combos) {
          const Stopwatch run_clock;
          RunRow row;
          row.combo = c;
          std::string termination;
          int iterations = 0;
          double mean_ms = std::nan("");
          double mean_lin_ms = std::nan("");
          double dt = std::nan("");
          double initial = std::nan("");
          double final_cost = std::nan("");
          try {
            const Reconstruction r = reconstruct(seq.dataset, c.kind, c.method, options);
            row.area = area_against(r.solve.problem.trajectory, seq.dataset);
            termination = to_string(r.solve.termination);
            iterations = static_cast<int>(r.solve.log.records.size()) - 1;
            mean_ms = r.solve.log.mean_iteration_ms();
            mean_lin_ms = r.solve.log.mean_linearized_iteration_ms();
            dt = r.sew.dt;
            initial = r.solve.initial_cost;
            final_cost = r.solve.final_cost;
            row.relative_cost = final_cost / initial;
            for (const auto& rec : r.solve.log.records) {
              row.iterations.push_back({motion, std::to_string(task.seed), to_string(c.kind), to_string(c.method),
                                        std::to_string(rec.iteration), num(rec.cost), num(rec.relative_cost),
                                        num(rec.wall_ms), rec.accepted ? "1" : "0", rec.linearized ? "1" : "0"});
            }
          } catch (const Error& e) {
            termination = std::string("error:") + errc_name(e.code());
            row.area = std::numeric_limits<double>::infinity();
            row.relative_cost = std::numeric_limits<double>::infinity();
          }
          const double wall = run_clock.seconds();
          row.run = {motion,        std::to_string(task.seed), to_string(c.kind), to_string(c.method),
                     num(dt),       num(row.area),             row.area < f.threshold ? "1" : "0",
                     num(initial),  num(final_cost),           num(row.relative_cost),
                     std::to_string(iterations), num(mean_ms), num(mean_lin_ms), termination,
                     num(wall)};
          {
            std::lock_guard lock(print);
            io.out << motion << " seed " << task.seed << " " << combo_name(c) << ": area " << num(row.area)
                   << " m^2, relative cost " << num(row.relative_cost) << ", " << termination << " ("
                   << std::fixed << std::setprecision(1) << wall << " s)\n";
            io.out.unsetf(std::ios::floatfield);
            io.out << std::setprecision(6);
          }
          o.rows.push_back(std::move(row));
        }
      } catch (const std::exception& e) {
        failures[t] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::min<int>(threads, static_cast<int>(tasks.size())); ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (const auto& msg : failures) {
    if (!msg.empty()) throw Error(Errc::kInvalidArgument, msg);
  }

  Table runs({"motion", "seed", "trajectory", "projection", "knot_spacing", "area_error", "inlier", "initial_cost",
              "final_cost", "relative_cost", "iterations", "mean_iteration_ms", "mean_linearized_iteration_ms", "termination", "wall_s"});
  Table iterations({"motion", "seed", "trajectory", "projection", "iteration", "cost", "relative_cost", "wall_ms",
                    "accepted", "linearized"});
  std::map<std::pair<MotionType, Combination>, std::pair<std::vector<double>, std::vector<double>>> groups;
  Manifest m;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    m.seeds.push_back(tasks[t].seed);
    m.outputs.push_back(outcomes[t].dataset);
    for (auto& row : outcomes[t].rows) {
      runs.add(row.run);
      for (auto& it : row.iterations) iterations.add(it);
      auto& g = groups[{tasks[t].motion, row.combo}];
      g.first.push_back(row.area);
      g.second.push_back(row.relative_cost);
    }
  }
  Table summary({"motion", "trajectory", "projection", "count", "inliers", "inlier_ratio", "median_area",
                 "p40_area", "p60_area", "median_relative_cost"});
  for (const auto& [key, values] : groups) {
    const ErrorSummary s = summarize(values.first, f.threshold);
    summary.add({to_string(key.first), to_string(key.second.kind), to_string(key.second.method),
                 std::to_string(s.count), std::to_string(s.inliers), num(s.inlier_ratio), num(s.median),
                 num(s.p40), num(s.p60), num(percentile(values.second, 50.0))});
    io.out << to_string(key.first) << " " << std::left << std::setw(16) << combo_name(key.second) << std::right
           << " inliers " << s.inliers << "/" << s.count << ", median area " << num(s.median)
           << " m^2, median relative cost " << num(percentile(values.second, 50.0)) << "\n";
  }
  const fs::path runs_csv = dir / "runs.csv";
  const fs::path iterations_csv = dir / "iterations.csv";
  const fs::path summary_csv = dir / "summary.csv";
  runs.write(runs_csv);
  iterations.write(iterations_csv);
  summary.write(summary_csv);

  m.command_line = io.command_line;
  m.command = "experiment";
  m.config = f.solve.to_json();
  m.config["motions"] = f.motions;
  m.config["count"] = f.count;
  m.config["first_seed"] = f.first_seed;
  m.config["duration"] = f.duration;
  m.config["sigma_image"] = f.sigma_image;
  m.config["sigma_imu"] = f.sigma_imu;
  m.config["trajectories"] = f.trajectories;
  m.config["projections"] = f.projections;
  m.config["threshold"] = f.threshold;
  m.config["threads"] = threads;
  m.outputs.insert(m.outputs.end(), {runs_csv, iterations_csv, summary_csv});
  m.timings["total_s"] = clock.seconds();
  write_manifest(dir / "manifest.json", m);
  return 0;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
    case Errc::kSchema:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continuous-time structure from motion for rolling-shutter cameras and IMUs", "ctsfm"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateFlags simulate_flags;
  ReconstructFlags reconstruct_flags;
  EvaluateFlags evaluate_flags;
  BenchmarkFlags benchmark_flags;
  ExperimentFlags experiment_flags;
  add_simulate(app, simulate_flags);
  add_reconstruct(app, reconstruct_flags);
  add_evaluate(app, evaluate_flags);
  add_benchmark(app, benchmark_flags);
  add_experiment(app, experiment_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) {
    if (i) command_line += ' ';
    command_line += argv[i];
  }
  const Streams io{out, err, command_line};
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate") return run_simulate(simulate_flags, io);
    if (name == "reconstruct") return run_reconstruct(reconstruct_flags, io);
    if (name == "evaluate") return run_evaluate(evaluate_flags, io);
    if (name == "benchmark") return run_benchmark(benchmark_flags, io);
    return run_experiment(experiment_flags, io);
  } catch (const Error& e) {
    err << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ctsfm::cli
