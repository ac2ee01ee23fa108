#pragma once

// Continuous-time bundle adjustment: robust reprojection terms over keyframe
// observations plus whitened gyroscope and accelerometer terms, minimized by
// Levenberg-Marquardt over spline control points, inverse depths and (for
// Lifting) per-observation capture times.

#include <string>
#include <vector>

#include "ctsfm/dataset.hpp"
#include "ctsfm/sew.hpp"

namespace ctsfm {

struct ProblemOptions {
  int keyframe_stride = 10;
  int max_observations_per_keyframe = 100;
  /// Buckets per image side for spatial suppression.
  int bucket_grid = 10;
};

/// How the Newton projection is differentiated: through every iteration, or
/// at the converged root by the implicit function theorem.
enum class NewtonDerivative { kUnrolled, kImplicit };

struct Problem {
  RsCamera camera;
  Trajectory trajectory;
  /// inv_depth is the estimate; the reference observation is stored here.
  std::vector<Landmark> landmarks;
  /// Non-reference observations sorted by landmark, then frame.
  /// Observation::landmark indexes `landmarks`.
  std::vector<Observation> observations;
  std::vector<int> keyframes;  // frame ids
  std::vector<ImuSample> imu;
  Eigen::Matrix3d W_gyro = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d W_accel = Eigen::Matrix3d::Identity();
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  ProjectionMethod projection_method = ProjectionMethod::kNewton;
  /// Parallel to `observations`; used by Lifting only.
  std::vector<double> lifted_times;
  NewtonOptions newton;
  NewtonDerivative newton_derivative = NewtonDerivative::kUnrolled;

  /// Throws kInvalidArgument when an invariant is broken.
  void validate() const;
};

/// Runs knot-spacing selection and weighting on the dataset's IMU streams.
SewResult analyze_imu(const Dataset& dataset, const SewOptions& options = {});

/// Keyframe selection, trajectory allocation and cold-start initialization
/// (p = 0, R = I, rho = 0). Selection depends on the dataset only.
Problem build_problem(const Dataset& dataset, TrajectoryKind kind, ProjectionMethod method, const SewResult& sew,
                      const ProblemOptions& options = {});

struct CostBreakdown {
  double reprojection = 0.0;
  double time = 0.0;
  double gyro = 0.0;
  double accel = 0.0;
  double total = 0.0;
  int reprojection_blocks = 0;
  int time_blocks = 0;
  int gyro_blocks = 0;
  int accel_blocks = 0;
  int behind_camera = 0;
  int newton_fallbacks = 0;
};

/// Huber with parameter c on the norm s of a 2-D residual: s^2 or 2cs - c^2.
double huber(double s, double c);

CostBreakdown evaluate_cost(const Problem& problem, double huber_c = 1.0);
double total_cost(const Problem& problem, double huber_c = 1.0);

// ---------------------------------------------------------------------------
// Residual blocks
//
// The tangent vector stacks 6 values per control point (Split: position then
// rotation; SE(3): translation then rotation of the right-multiplied twist)
// followed by one group per landmark: rho, then for Lifting one time per
// observation of that landmark. Blocks are the observations in order, then
// one gyro block per IMU sample, then one accel block per IMU sample.

enum class BlockType { kReprojection, kGyro, kAccel };

struct BlockLinearization {
  BlockType type = BlockType::kReprojection;
  /// Reprojection: pixel residual, plus the time residual in rows for Lifting.
  /// IMU: residual premultiplied by the weight's Cholesky factor.
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  std::vector<int> columns;
  bool behind_camera = false;
  bool newton_fallback = false;
};

int num_blocks(const Problem& problem);
int tangent_dimension(const Problem& problem);
BlockLinearization linearize_block(const Problem& problem, int block);
/// Residual only, computed without derivative propagation.
Eigen::VectorXd evaluate_block(const Problem& problem, int block);
/// Applies delta in the tangent space, re-normalizes rotations and projects
/// rho onto rho >= 0 and lifted times onto their windows.
void apply_update(Problem& problem, const Eigen::VectorXd& delta);

// ---------------------------------------------------------------------------
// Solver

enum class LinearSolver { kSchur, kDense };

struct SolverConfig {
  int max_iterations = 50;
  double huber_c = 1.0;
  double function_tolerance = 1e-8;
  double initial_damping = 1e-4;
  int num_threads = 1;
  LinearSolver linear_solver = LinearSolver::kSchur;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double relative_cost = 1.0;
  double wall_ms = 0.0;
  double elapsed_ms = 0.0;
  double damping = 0.0;
  bool accepted = true;
  /// False when the step reused the previous linearization after a rejection.
  bool linearized = true;
  int reprojection_blocks = 0;
  int time_blocks = 0;
  int gyro_blocks = 0;
  int accel_blocks = 0;
  int behind_camera = 0;
  int newton_fallbacks = 0;
};

struct IterationLog {
  std::vector<IterationRecord> records;

  /// One JSON object per line.
  std::string to_json_lines() const;
  /// Mean wall time over iterations 1..n.
  double mean_iteration_ms() const;
  /// Mean over the iterations that relinearized the problem.
  double mean_linearized_iteration_ms() const;
};

enum class Termination { kConverged, kMaxIterations, kNoProgress };

const char* to_string(Termination termination);

struct SolveResult {
  /// Final state: trajectory, landmarks and lifted times.
  Problem problem;
  IterationLog log;
  Termination termination = Termination::kConverged;
  bool hit_max_iterations = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

/// Throws kDiverged when the initial cost is not finite.
SolveResult solve(const Problem& problem, const SolverConfig& config = {});

struct ReconstructionOptions {
  SewOptions sew;
  ProblemOptions problem;
  SolverConfig solver;
};

struct Reconstruction {
  SewResult sew;
  SolveResult solve;
};

/// Knot spacing and weights from the IMU streams, keyframe selection, cold
/// start and solve.
Reconstruction reconstruct(const Dataset& dataset, TrajectoryKind kind, ProjectionMethod method,
                           const ReconstructionOptions& options = {});

/// 1 / depth of `position` in the reference camera of `landmark` under `trajectory`.
double reference_inverse_depth(const RsCamera& camera, const Trajectory& trajectory, const Landmark& landmark,
                               const Eigen::Vector3d& position);

}  // namespace ctsfm
