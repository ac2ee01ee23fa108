#include <benchmark/benchmark.h>

#include <map>

#include "ctsfm/estimator.hpp"
#include "ctsfm/sew.hpp"
#include "ctsfm/simulator.hpp"

namespace ctsfm {
namespace {

const SimulatedSequence& sequence() {
  static const SimulatedSequence seq = [] {
    SimConfig c;
    c.seed = 11;
    c.duration = 2.0;
    return simulate(MotionType::kFree, c);
  }();
  return seq;
}

SewResult weights() {
  SewResult s;
  s.dt = 0.1;
  s.W_gyro = Eigen::Matrix3d::Identity() * 1e4;
  s.W_accel = Eigen::Matrix3d::Identity() * 1e4;
  return s;
}

/// Cold-start problem moved a few iterations towards the solution so blocks
/// are linearized at a realistic state.
const Problem& problem(TrajectoryKind kind, ProjectionMethod method) {
  static std::map<std::pair<TrajectoryKind, ProjectionMethod>, Problem> cache;
  auto it = cache.find({kind, method});
  if (it == cache.end()) {
    const Problem P = build_problem(sequence().dataset, kind, method, weights());
    SolverConfig cfg;
    cfg.max_iterations = 5;
    it = cache.emplace(std::pair(kind, method), solve(P, cfg).problem).first;
  }
  return it->second;
}

void BM_Pose(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const Trajectory& traj = problem(kind, ProjectionMethod::kStatic).trajectory;
  double t = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(traj.pose(t));
    t = t > 1.8 ? 0.1 : t + 1e-3;
  }
}
BENCHMARK(BM_Pose)->Arg(0)->Arg(1);

void BM_PredictAccel(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const Trajectory& traj = problem(kind, ProjectionMethod::kStatic).trajectory;
  double t = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(traj.predict_accel(t));
    t = t > 1.8 ? 0.1 : t + 1e-3;
  }
}
BENCHMARK(BM_PredictAccel)->Arg(0)->Arg(1);

void BM_LinearizeReprojection(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const auto method = static_cast<ProjectionMethod>(state.range(1));
  const Problem& P = problem(kind, method);
  const int n = static_cast<int>(P.observations.size());
  int b = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(linearize_block(P, b));
    b = (b + 1) % n;
  }
}
BENCHMARK(BM_LinearizeReprojection)->ArgsProduct({{0, 1}, {0, 1, 2}});

void BM_LinearizeImu(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const Problem& P = problem(kind, ProjectionMethod::kStatic);
  const int first = static_cast<int>(P.observations.size());
  const int n = static_cast<int>(2 * P.imu.size());
  int b = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(linearize_block(P, first + b));
    b = (b + 1) % n;
  }
}
BENCHMARK(BM_LinearizeImu)->Arg(0)->Arg(1);

void BM_ProjectNewton(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const Problem& P = problem(kind, ProjectionMethod::kNewton);
  const int n = static_cast<int>(P.observations.size());
  int i = 0;
  for (auto _ : state) {
    const Observation& o = P.observations[i];
    benchmark::DoNotOptimize(try_project_newton(P.camera, P.trajectory, P.landmarks[o.landmark], o));
    i = (i + 1) % n;
  }
}
BENCHMARK(BM_ProjectNewton)->Arg(0)->Arg(1);

void BM_SolverIteration(benchmark::State& state) {
  const auto kind = static_cast<TrajectoryKind>(state.range(0));
  const auto method = static_cast<ProjectionMethod>(state.range(1));
  const Problem& P = problem(kind, method);
  SolverConfig cfg;
  cfg.max_iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(solve(P, cfg));
}
BENCHMARK(BM_SolverIteration)->ArgsProduct({{0, 1}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

void BM_FrequencyResponse(benchmark::State& state) {
  const double dt = state.range(0) * 1e-3;
  for (auto _ : state) {
    clear_frequency_response_cache();
    benchmark::DoNotOptimize(frequency_response(dt, 300.0, 1500));
  }
}
BENCHMARK(BM_FrequencyResponse)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_AnalyzeImu(benchmark::State& state) {
  const Dataset& d = sequence().dataset;
  for (auto _ : state) {
    clear_frequency_response_cache();
    benchmark::DoNotOptimize(analyze_imu(d));
  }
}
BENCHMARK(BM_AnalyzeImu)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ctsfm

BENCHMARK_MAIN();
