#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ctsfm/errors.hpp"
#include "ctsfm/estimator.hpp"
#include "ctsfm/evaluation.hpp"
#include "scenario.hpp"
#include "test_util.hpp"

namespace ctsfm {
namespace {

using testing::Gen;

const SimulatedSequence& clean_sequence() {
  static const SimulatedSequence seq = simulate(MotionType::kFree, testing::scenario_config(3, 1.5, 0.0));
  return seq;
}

const SimulatedSequence& noisy_sequence() {
  static const SimulatedSequence seq = simulate(MotionType::kFree, testing::scenario_config(4, 1.5, 1.0));
  return seq;
}

const SewResult& weights() {
  static const SewResult sew = testing::fixed_weights(0.1, 0.01, 0.01);
  return sew;
}

Problem make(const SimulatedSequence& seq, TrajectoryKind kind, ProjectionMethod method) {
  return build_problem(seq.dataset, kind, method, weights());
}

/// State near the truth: the true (or, for SE(3), fitted) trajectory moved by
/// a random tangent offset.
Problem perturbed(const SimulatedSequence& seq, TrajectoryKind kind, ProjectionMethod method, Gen& g,
                  double scale) {
  Problem P = make(seq, kind, method);
  if (kind == TrajectoryKind::kSplit) {
    P = testing::at_ground_truth(P, seq);
  } else {
    Problem truth = testing::at_ground_truth(make(seq, TrajectoryKind::kSplit, method), seq);
    const KnotGrid& grid = P.trajectory.grid();
    std::vector<Pose> poses;
    for (int k = 0; k < grid.count; ++k) poses.push_back(seq.ground_truth.pose(grid.t0 + k * grid.dt));
    truth.trajectory = Trajectory::from_control_poses(kind, grid, poses, P.trajectory.gravity());
    P = truth;
  }
  Eigen::VectorXd delta(tangent_dimension(P));
  for (int i = 0; i < delta.size(); ++i) delta[i] = g.normal(scale);
  const int nt = 6 * P.trajectory.num_control_points();
  for (int i = nt; i < delta.size(); ++i) delta[i] *= 0.01;
  apply_update(P, delta);
  return P;
}

// ---------------------------------------------------------------------------
// Problem construction

TEST(BuildProblem, KeyframesEveryTenthFrame) {
  const auto& seq = clean_sequence();
  const Problem P = make(seq, TrajectoryKind::kSplit, ProjectionMethod::kNewton);
  const int n = static_cast<int>(seq.dataset.frames.size());
  EXPECT_EQ(static_cast<int>(P.keyframes.size()), (n + 9) / 10);
  for (std::size_t i = 0; i < P.keyframes.size(); ++i) EXPECT_EQ(P.keyframes[i], seq.dataset.frames[10 * i].id);
}

TEST(BuildProblem, AtMostHundredObservationsPerKeyframe) {
  const auto& seq = clean_sequence();
  const Problem P = make(seq, TrajectoryKind::kSplit, ProjectionMethod::kNewton);
  std::map<int, int> per_frame;
  for (const auto& lm : P.landmarks) ++per_frame[lm.ref_frame];
  for (const auto& o : P.observations) ++per_frame[o.frame];
  const std::set<int> keys(P.keyframes.begin(), P.keyframes.end());
  for (const auto& [frame, count] : per_frame) {
    EXPECT_TRUE(keys.count(frame));
    EXPECT_LE(count, 100);
  }
}

TEST(BuildProblem, TracksHaveReferenceAndObservation) {
  const Problem P = make(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kNewton);
  std::vector<int> count(P.landmarks.size(), 0);
  int prev = 0;
  for (const auto& o : P.observations) {
    EXPECT_GE(o.landmark, prev);
    prev = o.landmark;
    ++count[o.landmark];
    EXPECT_GT(o.frame, P.landmarks[o.landmark].ref_frame);
  }
  for (int c : count) EXPECT_GE(c, 1);
}

TEST(BuildProblem, ColdStart) {
  const Problem P = make(clean_sequence(), TrajectoryKind::kSe3, ProjectionMethod::kLifting);
  for (const auto& lm : P.landmarks) EXPECT_EQ(lm.inv_depth, 0.0);
  const KnotGrid& g = P.trajectory.grid();
  for (int k = 0; k < g.count; ++k) {
    const Pose T = P.trajectory.pose(std::clamp(g.t0 + k * g.dt, g.t_min(), std::nextafter(g.t_max(), g.t_min())));
    EXPECT_LT((T.R - Eigen::Matrix3d::Identity()).norm(), 1e-12);
    EXPECT_LT(T.p.norm(), 1e-12);
  }
  ASSERT_EQ(P.lifted_times.size(), P.observations.size());
  for (std::size_t i = 0; i < P.observations.size(); ++i) {
    EXPECT_EQ(P.lifted_times[i], P.observations[i].capture_time(P.camera));
  }
}

TEST(BuildProblem, SelectionIndependentOfMethodAndKind) {
  const auto& seq = clean_sequence();
  const Problem a = make(seq, TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  const Problem b = make(seq, TrajectoryKind::kSe3, ProjectionMethod::kLifting);
  ASSERT_EQ(a.observations.size(), b.observations.size());
  for (std::size_t i = 0; i < a.observations.size(); ++i) {
    EXPECT_EQ(a.observations[i].frame, b.observations[i].frame);
    EXPECT_EQ(a.observations[i].pixel, b.observations[i].pixel);
  }
}

TEST(BuildProblem, RejectsBadOptions) {
  ProblemOptions o;
  o.keyframe_stride = 0;
  try {
    build_problem(clean_sequence().dataset, TrajectoryKind::kSplit, ProjectionMethod::kNewton, weights(), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInvalidArgument);
  }
}

// ---------------------------------------------------------------------------
// Cost

TEST(Huber, Values) {
  EXPECT_DOUBLE_EQ(huber(0.5, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(huber(4.0, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(huber(1.0, 1.0), 1.0);
  EXPECT_NEAR(huber(1.0 + 1e-9, 1.0), huber(1.0 - 1e-9, 1.0), 1e-8);
}

TEST(Cost, DoublingGyroWeightDoublesGyroTerm) {
  Gen g(11);
  Problem P = perturbed(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kNewton, g, 1e-2);
  const CostBreakdown a = evaluate_cost(P);
  P.W_gyro *= 2.0;
  const CostBreakdown b = evaluate_cost(P);
  EXPECT_GT(a.gyro, 0.0);
  EXPECT_NEAR(b.gyro, 2.0 * a.gyro, 1e-9 * a.gyro);
  EXPECT_DOUBLE_EQ(b.accel, a.accel);
  EXPECT_DOUBLE_EQ(b.reprojection, a.reprojection);
}

TEST(Cost, TotalIsSumOfTerms) {
  Gen g(12);
  const Problem P = perturbed(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kLifting, g, 1e-2);
  const CostBreakdown c = evaluate_cost(P);
  EXPECT_NEAR(c.total, c.reprojection + c.time + c.gyro + c.accel, 1e-9 * c.total);
  EXPECT_EQ(c.reprojection_blocks, static_cast<int>(P.observations.size()));
  EXPECT_EQ(c.time_blocks, static_cast<int>(P.observations.size()));
  EXPECT_EQ(c.gyro_blocks, static_cast<int>(P.imu.size()));
  EXPECT_EQ(total_cost(P), c.total);
}

TEST(Cost, NearZeroAtTruth) {
  const auto& seq = clean_sequence();
  for (auto method : {ProjectionMethod::kStatic, ProjectionMethod::kNewton, ProjectionMethod::kLifting}) {
    const Problem cold = make(seq, TrajectoryKind::kSplit, method);
    const Problem truth = testing::at_ground_truth(cold, seq);
    const double c0 = total_cost(cold);
    const double c1 = total_cost(truth);
    EXPECT_LT(c1, 1e-6 * c0) << to_string(method);
  }
}

TEST(Cost, BlockResidualsMatchCost) {
  Gen g(13);
  const Problem P = perturbed(clean_sequence(), TrajectoryKind::kSe3, ProjectionMethod::kStatic, g, 1e-2);
  double imu = 0.0;
  for (int b = static_cast<int>(P.observations.size()); b < num_blocks(P); ++b) imu += evaluate_block(P, b).squaredNorm();
  const CostBreakdown c = evaluate_cost(P);
  EXPECT_NEAR(imu, c.gyro + c.accel, 1e-9 * imu);
}

// ---------------------------------------------------------------------------
// Jacobians against central differences through apply_update

struct JacobianCheck {
  double worst = 0.0;
  int checked = 0;
};

JacobianCheck check_jacobians(TrajectoryKind kind, ProjectionMethod method, BlockType type, std::uint64_t seed,
                              NewtonDerivative route = NewtonDerivative::kUnrolled) {
  Gen g(seed);
  JacobianCheck out;
  const auto& seq = clean_sequence();
  while (out.checked < 50) {
    Problem P = perturbed(seq, kind, method, g, 1e-2);
    P.newton.tolerance_rows = 1e-11;
    P.newton.max_iterations = 30;
    P.newton_derivative = route;
    const int n_obs = static_cast<int>(P.observations.size());
    const int n_imu = static_cast<int>(P.imu.size());
    int block = 0;
    switch (type) {
      case BlockType::kReprojection: block = g.integer(0, n_obs - 1); break;
      case BlockType::kGyro: block = n_obs + g.integer(0, n_imu - 1); break;
      case BlockType::kAccel: block = n_obs + n_imu + g.integer(0, n_imu - 1); break;
    }
    const BlockLinearization lin = linearize_block(P, block);
    EXPECT_EQ(lin.type, type);
    if (lin.behind_camera || lin.newton_fallback) continue;
    EXPECT_EQ(lin.residual.size(), lin.jacobian.rows());
    EXPECT_EQ(static_cast<int>(lin.columns.size()), lin.jacobian.cols());
    const double h = 1e-6;
    Eigen::MatrixXd numeric(lin.jacobian.rows(), lin.jacobian.cols());
    for (std::size_t j = 0; j < lin.columns.size(); ++j) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(tangent_dimension(P));
      Problem plus = P;
      Problem minus = P;
      d[lin.columns[j]] = h;
      apply_update(plus, d);
      apply_update(minus, -d);
      numeric.col(j) = (evaluate_block(plus, block) - evaluate_block(minus, block)) / (2.0 * h);
    }
    EXPECT_LT((lin.residual - evaluate_block(P, block)).norm(), 1e-9 * std::max(1.0, lin.residual.norm()));
    const double err = (lin.jacobian - numeric).norm() / std::max(1.0, numeric.norm());
    out.worst = std::max(out.worst, err);
    ++out.checked;
  }
  return out;
}

struct JacobianCase {
  TrajectoryKind kind;
  ProjectionMethod method;
  BlockType type;
  NewtonDerivative route = NewtonDerivative::kUnrolled;
};

class Jacobians : public ::testing::TestWithParam<JacobianCase> {};

TEST_P(Jacobians, MatchCentralDifferences) {
  const auto& c = GetParam();
  const auto result = check_jacobians(c.kind, c.method, c.type, 100 + static_cast<int>(c.type), c.route);
  EXPECT_EQ(result.checked, 50);
  EXPECT_LT(result.worst, 1e-4);
}

std::string case_name(const ::testing::TestParamInfo<JacobianCase>& info) {
  const char* type = info.param.type == BlockType::kReprojection ? "Reprojection"
                     : info.param.type == BlockType::kGyro       ? "Gyro"
                                                                 : "Accel";
  std::string method = to_string(info.param.method);
  method[0] = static_cast<char>(std::toupper(method[0]));
  const char* route = info.param.route == NewtonDerivative::kImplicit ? "Implicit" : "";
  return std::string(info.param.kind == TrajectoryKind::kSplit ? "Split" : "Se3") + method + route + type;
}

INSTANTIATE_TEST_SUITE_P(
    AllResidualTypes, Jacobians,
    ::testing::Values(JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kStatic, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kNewton, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kLifting, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kStatic, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kNewton, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kNewton, BlockType::kReprojection,
                                   NewtonDerivative::kImplicit},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kNewton, BlockType::kReprojection,
                                   NewtonDerivative::kImplicit},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kLifting, BlockType::kReprojection},
                      JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kStatic, BlockType::kGyro},
                      JacobianCase{TrajectoryKind::kSplit, ProjectionMethod::kStatic, BlockType::kAccel},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kStatic, BlockType::kGyro},
                      JacobianCase{TrajectoryKind::kSe3, ProjectionMethod::kStatic, BlockType::kAccel}),
    case_name);

TEST(NewtonRoutes, AgreeAtConvergence) {
  // Differentiating through the iterations and differentiating the root are
  // two routes to the same derivative once the iteration has converged.
  Gen g(17);
  int checked = 0;
  while (checked < 50) {
    Problem P = perturbed(clean_sequence(), g.integer(0, 1) ? TrajectoryKind::kSplit : TrajectoryKind::kSe3,
                          ProjectionMethod::kNewton, g, 1e-2);
    P.newton.tolerance_rows = 1e-11;
    P.newton.max_iterations = 30;
    const int block = g.integer(0, static_cast<int>(P.observations.size()) - 1);
    const BlockLinearization a = linearize_block(P, block);
    P.newton_derivative = NewtonDerivative::kImplicit;
    const BlockLinearization b = linearize_block(P, block);
    if (a.behind_camera || a.newton_fallback || b.behind_camera || b.newton_fallback) continue;
    EXPECT_LT((a.residual - b.residual).norm(), 1e-6);
    // Columns may differ when the unrolled iterates visit an extra segment.
    std::map<int, Eigen::Vector2d> ca, cb;
    auto gather = [](const BlockLinearization& lin, std::map<int, Eigen::Vector2d>& out) {
      for (std::size_t j = 0; j < lin.columns.size(); ++j) {
        out.try_emplace(lin.columns[j], Eigen::Vector2d::Zero()).first->second += lin.jacobian.col(j);
      }
    };
    gather(a, ca);
    gather(b, cb);
    double diff = 0.0;
    double norm = 0.0;
    for (const auto& [col, v] : ca) {
      const auto it = cb.find(col);
      diff += (v - (it == cb.end() ? Eigen::Vector2d::Zero() : it->second)).squaredNorm();
      norm += v.squaredNorm();
    }
    for (const auto& [col, v] : cb) {
      if (!ca.count(col)) diff += v.squaredNorm();
    }
    EXPECT_LT(std::sqrt(diff), 1e-6 * std::max(1.0, std::sqrt(norm)));
    ++checked;
  }
}

TEST(NewtonRoutes, UnrolledIsDefault) {
  EXPECT_EQ(make(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kNewton).newton_derivative,
            NewtonDerivative::kUnrolled);
}

// ---------------------------------------------------------------------------
// Update

TEST(ApplyUpdate, ProjectsInverseDepthAndLiftedTimes) {
  Problem P = make(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kLifting);
  Eigen::VectorXd d = Eigen::VectorXd::Constant(tangent_dimension(P), -1.0);
  d.head(6 * P.trajectory.num_control_points()).setZero();
  apply_update(P, d);
  for (const auto& lm : P.landmarks) EXPECT_EQ(lm.inv_depth, 0.0);
  for (std::size_t i = 0; i < P.observations.size(); ++i) {
    EXPECT_EQ(P.lifted_times[i], lifting_window(P.camera, P.observations[i].frame_t0).first);
  }
}

TEST(ApplyUpdate, RejectsWrongDimension) {
  Problem P = make(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kNewton);
  EXPECT_THROW(apply_update(P, Eigen::VectorXd::Zero(3)), Error);
}

TEST(ApplyUpdate, TangentLayout) {
  const Problem P = make(clean_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kLifting);
  const int expected = 6 * P.trajectory.num_control_points() + static_cast<int>(P.landmarks.size()) +
                       static_cast<int>(P.observations.size());
  EXPECT_EQ(tangent_dimension(P), expected);
  EXPECT_EQ(num_blocks(P), static_cast<int>(P.observations.size() + 2 * P.imu.size()));
}

// ---------------------------------------------------------------------------
// Solver

SolverConfig short_run(int iterations) {
  SolverConfig c;
  c.max_iterations = iterations;
  return c;
}

TEST(Solve, LogStartsAtOneAndAcceptedCostsDecrease) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kNewton);
  const SolveResult r = solve(P, short_run(15));
  ASSERT_FALSE(r.log.records.empty());
  EXPECT_EQ(r.log.records[0].iteration, 0);
  EXPECT_DOUBLE_EQ(r.log.records[0].relative_cost, 1.0);
  EXPECT_DOUBLE_EQ(r.log.records[0].cost, r.initial_cost);
  double last = r.initial_cost;
  for (std::size_t i = 1; i < r.log.records.size(); ++i) {
    const auto& rec = r.log.records[i];
    EXPECT_EQ(rec.iteration, static_cast<int>(i));
    if (!rec.accepted) continue;
    EXPECT_LE(rec.cost, last);
    EXPECT_NEAR(rec.relative_cost, rec.cost / r.initial_cost, 1e-12);
    last = rec.cost;
  }
  EXPECT_DOUBLE_EQ(r.final_cost, last);
  EXPECT_LT(r.final_cost, 1e-2 * r.initial_cost);
  EXPECT_NEAR(total_cost(r.problem), r.final_cost, 1e-9 * r.final_cost);
}

TEST(Solve, QuaternionsStayNormalized) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  const SolveResult r = solve(P, short_run(10));
  for (const auto& q : r.problem.trajectory.orientation_spline().control_points()) {
    EXPECT_LE(std::abs(q.norm() - 1.0), 1e-9);
  }
}

TEST(Solve, Se3RotationsStayOrthonormal) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSe3, ProjectionMethod::kStatic);
  const SolveResult r = solve(P, short_run(5));
  for (const auto& T : r.problem.trajectory.se3_spline().control_points()) {
    EXPECT_LT((T.R.transpose() * T.R - Eigen::Matrix3d::Identity()).norm(), 1e-9);
  }
}

TEST(Solve, SchurMatchesDense) {
  for (auto method : {ProjectionMethod::kNewton, ProjectionMethod::kLifting}) {
    const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, method);
    SolverConfig c = short_run(4);
    const SolveResult a = solve(P, c);
    c.linear_solver = LinearSolver::kDense;
    const SolveResult b = solve(P, c);
    ASSERT_EQ(a.log.records.size(), b.log.records.size());
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
      EXPECT_NEAR(a.log.records[i].cost, b.log.records[i].cost, 1e-6 * a.log.records[i].cost);
    }
  }
}

TEST(Solve, DeterministicAcrossThreadCounts) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kLifting);
  SolverConfig c = short_run(4);
  const SolveResult a = solve(P, c);
  const SolveResult b = solve(P, c);
  c.num_threads = 3;
  const SolveResult t = solve(P, c);
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  ASSERT_EQ(a.log.records.size(), t.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    EXPECT_EQ(a.log.records[i].cost, b.log.records[i].cost);
    EXPECT_EQ(a.log.records[i].cost, t.log.records[i].cost);
  }
  EXPECT_EQ(a.problem.landmarks[0].inv_depth, t.problem.landmarks[0].inv_depth);
}

TEST(Solve, MaxIterationsFlag) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  const SolveResult r = solve(P, short_run(2));
  EXPECT_TRUE(r.hit_max_iterations);
  EXPECT_EQ(r.termination, Termination::kMaxIterations);
  EXPECT_EQ(r.log.records.size(), 3u);
}

TEST(Solve, TruthIsAFixedPoint) {
  const auto& seq = clean_sequence();
  const Problem P = testing::at_ground_truth(make(seq, TrajectoryKind::kSplit, ProjectionMethod::kNewton), seq);
  const SolveResult r = solve(P, short_run(5));
  EXPECT_LE(r.final_cost, r.initial_cost);
  const auto pair = align(r.problem.trajectory, seq.ground_truth, 100.0, seq.dataset.time_span());
  EXPECT_LT(area_error(pair), 1e-4);
}

TEST(Solve, RobustToOutliers) {
  const auto& seq = noisy_sequence();
  const Problem clean = testing::at_ground_truth(make(seq, TrajectoryKind::kSplit, ProjectionMethod::kNewton), seq);
  Problem dirty = clean;
  Gen g(21);
  for (std::size_t i = 0; i < dirty.observations.size(); i += 20) {
    dirty.observations[i].pixel += Eigen::Vector2d(g.uniform(-1.0, 1.0), g.uniform(-1.0, 1.0)).normalized() * 60.0;
  }
  const auto span = seq.dataset.time_span();
  const SolveResult a = solve(clean, short_run(10));
  const SolveResult b = solve(dirty, short_run(10));
  const double ea = area_error(align(a.problem.trajectory, seq.ground_truth, 100.0, span));
  const double eb = area_error(align(b.problem.trajectory, seq.ground_truth, 100.0, span));
  EXPECT_LT(eb, 3.0 * std::max(ea, 1e-3));
}

TEST(Solve, IterationLogJson) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  const SolveResult r = solve(P, short_run(2));
  const std::string lines = r.log.to_json_lines();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), static_cast<long>(r.log.records.size()));
  EXPECT_NE(lines.find("\"relative_cost\""), std::string::npos);
  EXPECT_GT(r.log.mean_iteration_ms(), 0.0);
}

TEST(Solve, RejectsBadConfig) {
  const Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  SolverConfig c;
  c.huber_c = 0.0;
  EXPECT_THROW(solve(P, c), Error);
}

TEST(Solve, NonFiniteInitialCostDiverges) {
  Problem P = make(noisy_sequence(), TrajectoryKind::kSplit, ProjectionMethod::kStatic);
  P.imu[3].accel.x() = std::numeric_limits<double>::infinity();
  try {
    solve(P);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDiverged);
  }
}

}  // namespace
}  // namespace ctsfm
