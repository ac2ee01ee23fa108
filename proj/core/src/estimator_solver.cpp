#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "estimator_internal.hpp"

namespace ctsfm {

const char* to_string(Termination termination) {
  switch (termination) {
    case Termination::kConverged: return "converged";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kNoProgress: return "no_progress";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (max_iterations < 1 || !(huber_c > 0.0) || !(function_tolerance > 0.0) || !(initial_damping > 0.0) ||
      num_threads < 1) {
    throw Error(Errc::kInvalidArgument, "solver settings must be positive");
  }
}

std::string IterationLog::to_json_lines() const {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["cost"] = r.cost;
    j["relative_cost"] = r.relative_cost;
    j["wall_ms"] = r.wall_ms;
    j["elapsed_ms"] = r.elapsed_ms;
    j["damping"] = r.damping;
    j["accepted"] = r.accepted;
    j["linearized"] = r.linearized;
    j["blocks"] = {{"reprojection", r.reprojection_blocks},
                   {"time", r.time_blocks},
                   {"gyro", r.gyro_blocks},
                   {"accel", r.accel_blocks},
                   {"behind_camera", r.behind_camera},
                   {"newton_fallbacks", r.newton_fallbacks}};
    out << j.dump() << '\n';
  }
  return out.str();
}

double IterationLog::mean_iteration_ms() const {
  if (records.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 1; i < records.size(); ++i) sum += records[i].wall_ms;
  return sum / static_cast<double>(records.size() - 1);
}

double IterationLog::mean_linearized_iteration_ms() const {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (!records[i].linearized) continue;
    sum += records[i].wall_ms;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

namespace {

using Clock = std::chrono::steady_clock;
using est::Block;
using est::BlockValue;
using est::Layout;

constexpr double kMinDiagonal = 1e-6;
constexpr double kMaxDiagonal = 1e32;
constexpr double kMaxDamping = 1e16;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

struct Evaluation {
  CostBreakdown cost;
  bool finite = false;
};

Evaluation evaluate_all(const Problem& P, double huber_c, int threads, std::vector<BlockValue>& values) {
  Evaluation out;
  try {
    est::parallel_for(static_cast<int>(values.size()), threads, [&](int b) { est::evaluate(P, b, values[b]); });
  } catch (const Error&) {
    out.cost.total = std::numeric_limits<double>::infinity();
    return out;
  }
  out.cost = est::accumulate(values, huber_c);
  out.finite = std::isfinite(out.cost.total);
  return out;
}

/// Applies the IRLS weight to the pixel rows in place.
void robustify(Block& b, double c) {
  if (b.type != BlockType::kReprojection) return;
  const double w = std::sqrt(est::huber_weight(b.r.head<2>().norm(), c));
  if (w == 1.0) return;
  b.r.head<2>() *= w;
  b.Jc.topRows<2>() *= w;
  b.Jg.topRows<2>() *= w;
}

/// Gauss-Newton system split into the trajectory part and per-landmark groups.
struct GroupSystem {
  std::vector<int> cps;  // touched control points
  Eigen::MatrixXd B;     // 6 |cps| x n
  Eigen::MatrixXd C;
  Eigen::VectorXd g;
};

struct NormalEquations {
  Eigen::MatrixXd A;
  Eigen::VectorXd gc;
  std::vector<GroupSystem> groups;
};

void add_trajectory_terms(const Block& b, NormalEquations& ne) {
  const int n = 6 * b.num_cps;
  const auto J = b.Jc.topLeftCorner(b.dim, n);
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  const Eigen::VectorXd Jtr = J.transpose() * b.r.head(b.dim);
  for (int a = 0; a < b.num_cps; ++a) {
    ne.gc.segment<6>(6 * b.cps[a]) += Jtr.segment<6>(6 * a);
    for (int c = 0; c < b.num_cps; ++c) {
      ne.A.block<6, 6>(6 * b.cps[a], 6 * b.cps[c]) += JtJ.block<6, 6>(6 * a, 6 * c);
    }
  }
}

NormalEquations build_normal_equations(const Problem& P, const Layout& layout, const std::vector<Block>& blocks) {
  NormalEquations ne;
  const int nt = layout.trajectory_dim;
  ne.A = Eigen::MatrixXd::Zero(nt, nt);
  ne.gc = Eigen::VectorXd::Zero(nt);
  const int L = static_cast<int>(P.landmarks.size());
  ne.groups.resize(L);
  std::vector<int> local(P.trajectory.num_control_points(), -1);
  for (int k = 0; k < L; ++k) {
    GroupSystem& gs = ne.groups[k];
    const int ng = layout.group_size[k];
    for (int i = layout.obs_begin[k]; i < layout.obs_begin[k + 1]; ++i) {
      for (int s = 0; s < blocks[i].num_cps; ++s) {
        const int c = blocks[i].cps[s];
        if (local[c] < 0) {
          local[c] = static_cast<int>(gs.cps.size());
          gs.cps.push_back(c);
        }
      }
    }
    gs.B = Eigen::MatrixXd::Zero(6 * gs.cps.size(), ng);
    gs.C = Eigen::MatrixXd::Zero(ng, ng);
    gs.g = Eigen::VectorXd::Zero(ng);
    for (int i = layout.obs_begin[k]; i < layout.obs_begin[k + 1]; ++i) {
      const Block& b = blocks[i];
      if (b.behind_camera) continue;
      add_trajectory_terms(b, ne);
      const Eigen::VectorXd r = b.r.head(b.dim);
      for (int u = 0; u < b.num_group_cols; ++u) {
        const Eigen::VectorXd ju = b.Jg.col(u).head(b.dim);
        gs.g[b.group_cols[u]] += ju.dot(r);
        for (int v = 0; v < b.num_group_cols; ++v) {
          gs.C(b.group_cols[u], b.group_cols[v]) += ju.dot(b.Jg.col(v).head(b.dim));
        }
        for (int s = 0; s < b.num_cps; ++s) {
          gs.B.block<6, 1>(6 * local[b.cps[s]], b.group_cols[u]) +=
              b.Jc.block(0, 6 * s, b.dim, 6).transpose() * ju;
        }
      }
    }
    for (int c : gs.cps) local[c] = -1;
  }
  for (std::size_t i = P.observations.size(); i < blocks.size(); ++i) add_trajectory_terms(blocks[i], ne);
  return ne;
}

/// Removes rho of the given groups from the system (fixed at its bound).
NormalEquations freeze_rho(const NormalEquations& ne, const std::vector<bool>& frozen) {
  NormalEquations out = ne;
  for (std::size_t k = 0; k < frozen.size(); ++k) {
    if (!frozen[k]) continue;
    GroupSystem& gs = out.groups[k];
    gs.B.col(0).setZero();
    gs.C.row(0).setZero();
    gs.C.col(0).setZero();
    gs.C(0, 0) = 1.0;
    gs.g[0] = 0.0;
  }
  return out;
}

Eigen::VectorXd clamped_diagonal(const Eigen::MatrixXd& M) {
  return M.diagonal().cwiseMax(kMinDiagonal).cwiseMin(kMaxDiagonal);
}

struct Step {
  Eigen::VectorXd delta;
  double predicted = 0.0;
};

/// Solves (H + lambda D) delta = -g by eliminating the landmark groups.
bool solve_schur(const NormalEquations& ne, const Layout& layout, double lambda, Step& step) {
  const int nt = layout.trajectory_dim;
  const Eigen::VectorXd DA = clamped_diagonal(ne.A);
  Eigen::MatrixXd S = ne.A;
  S.diagonal() += lambda * DA;
  Eigen::VectorXd rhs = -ne.gc;

  const int L = static_cast<int>(ne.groups.size());
  std::vector<Eigen::MatrixXd> C_inv(L);
  std::vector<Eigen::VectorXd> DC(L);
  for (int k = 0; k < L; ++k) {
    const GroupSystem& gs = ne.groups[k];
    DC[k] = clamped_diagonal(gs.C);
    Eigen::MatrixXd Cd = gs.C;
    Cd.diagonal() += lambda * DC[k];
    const Eigen::LLT<Eigen::MatrixXd> llt(Cd);
    if (llt.info() != Eigen::Success) return false;
    C_inv[k] = llt.solve(Eigen::MatrixXd::Identity(Cd.rows(), Cd.cols()));
    const Eigen::MatrixXd M = gs.B * C_inv[k];
    const Eigen::MatrixXd MBt = M * gs.B.transpose();
    const Eigen::VectorXd Mg = M * gs.g;
    const int m = static_cast<int>(gs.cps.size());
    for (int a = 0; a < m; ++a) {
      rhs.segment<6>(6 * gs.cps[a]) += Mg.segment<6>(6 * a);
      for (int b = 0; b < m; ++b) {
        S.block<6, 6>(6 * gs.cps[a], 6 * gs.cps[b]) -= MBt.block<6, 6>(6 * a, 6 * b);
      }
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd x = llt.solve(rhs);

  step.delta = Eigen::VectorXd::Zero(layout.dim);
  step.delta.head(nt) = x;
  double g_dot = ne.gc.dot(x);
  double dDd = x.dot(DA.cwiseProduct(x));
  for (int k = 0; k < L; ++k) {
    const GroupSystem& gs = ne.groups[k];
    Eigen::VectorXd xs(6 * gs.cps.size());
    for (std::size_t a = 0; a < gs.cps.size(); ++a) xs.segment<6>(6 * a) = x.segment<6>(6 * gs.cps[a]);
    const Eigen::VectorXd y = C_inv[k] * (-gs.g - gs.B.transpose() * xs);
    step.delta.segment(layout.group_offset[k], y.size()) = y;
    g_dot += gs.g.dot(y);
    dDd += y.dot(DC[k].cwiseProduct(y));
  }
  step.predicted = -g_dot + lambda * dDd;
  return step.delta.allFinite();
}

/// Same system assembled and factored as one dense matrix.
bool solve_dense(const NormalEquations& ne, const Layout& layout, double lambda, Step& step) {
  const int nt = layout.trajectory_dim;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(layout.dim, layout.dim);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout.dim);
  H.topLeftCorner(nt, nt) = ne.A;
  g.head(nt) = ne.gc;
  for (std::size_t k = 0; k < ne.groups.size(); ++k) {
    const GroupSystem& gs = ne.groups[k];
    const int off = layout.group_offset[k];
    const int n = static_cast<int>(gs.C.rows());
    H.block(off, off, n, n) = gs.C;
    g.segment(off, n) = gs.g;
    for (std::size_t a = 0; a < gs.cps.size(); ++a) {
      H.block(6 * gs.cps[a], off, 6, n) = gs.B.middleRows(6 * a, 6);
      H.block(off, 6 * gs.cps[a], n, 6) = gs.B.middleRows(6 * a, 6).transpose();
    }
  }
  const Eigen::VectorXd D = clamped_diagonal(H);
  H.diagonal() += lambda * D;
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return false;
  step.delta = llt.solve(-g);
  step.predicted = -g.dot(step.delta) + lambda * step.delta.dot(D.cwiseProduct(step.delta));
  return step.delta.allFinite();
}

IterationRecord make_record(int iteration, const CostBreakdown& c, double cost0) {
  IterationRecord r;
  r.iteration = iteration;
  r.cost = c.total;
  r.relative_cost = iteration == 0 ? 1.0 : c.total / cost0;
  r.reprojection_blocks = c.reprojection_blocks;
  r.time_blocks = c.time_blocks;
  r.gyro_blocks = c.gyro_blocks;
  r.accel_blocks = c.accel_blocks;
  r.behind_camera = c.behind_camera;
  r.newton_fallbacks = c.newton_fallbacks;
  return r;
}

}  // namespace

SolveResult solve(const Problem& problem, const SolverConfig& config) {
  config.validate();
  problem.validate();
  const Clock::time_point start = Clock::now();
  const int threads = config.num_threads;
  const double c = config.huber_c;

  SolveResult result;
  result.problem = problem;
  Problem& P = result.problem;
  const Layout layout = est::make_layout(P);
  const int n_blocks = num_blocks(P);

  std::vector<BlockValue> values(n_blocks);
  Evaluation current = evaluate_all(P, c, threads, values);
  if (!current.finite) {
    throw Error(Errc::kDiverged, "initial cost is not finite");
  }
  const double cost0 = current.cost.total;
  result.initial_cost = cost0;
  {
    IterationRecord r0 = make_record(0, current.cost, cost0);
    r0.wall_ms = r0.elapsed_ms = ms_since(start);
    r0.damping = config.initial_damping;
    result.log.records.push_back(r0);
  }

  std::vector<Block> blocks(n_blocks);
  NormalEquations ne;
  bool relinearize = true;
  double lambda = config.initial_damping;
  double nu = 2.0;
  result.termination = Termination::kMaxIterations;

  for (int it = 1; it <= config.max_iterations; ++it) {
    const Clock::time_point t_iter = Clock::now();
    const bool linearized = relinearize;
    if (relinearize) {
      est::parallel_for(n_blocks, threads, [&](int b) {
        est::linearize(P, layout, b, blocks[b]);
        robustify(blocks[b], c);
      });
      ne = build_normal_equations(P, layout, blocks);
      relinearize = false;
    }

    // Inverse depths resting on rho = 0 that the step would push negative are
    // held fixed and the step recomputed.
    Step step;
    std::vector<bool> frozen(P.landmarks.size(), false);
    bool solved = false;
    for (int pass = 0; pass < 4; ++pass) {
      const NormalEquations sys = pass == 0 ? ne : freeze_rho(ne, frozen);
      solved = config.linear_solver == LinearSolver::kSchur ? solve_schur(sys, layout, lambda, step)
                                                            : solve_dense(sys, layout, lambda, step);
      if (!solved) break;
      bool changed = false;
      for (std::size_t k = 0; k < P.landmarks.size(); ++k) {
        if (!frozen[k] && P.landmarks[k].inv_depth <= 0.0 && step.delta[layout.group_offset[k]] < 0.0) {
          frozen[k] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }
    bool accepted = false;
    bool converged = false;
    Evaluation trial;
    if (solved && step.predicted > 0.0) {
      Problem candidate = P;
      apply_update(candidate, step.delta);
      trial = evaluate_all(candidate, c, threads, values);
      const double actual = current.cost.total - trial.cost.total;
      if (trial.finite && actual > 0.0) {
        const double rho = actual / step.predicted;
        accepted = true;
        converged = actual <= config.function_tolerance * current.cost.total;
        P = std::move(candidate);
        current = trial;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        relinearize = true;
      } else if (trial.finite && std::abs(actual) <= config.function_tolerance * current.cost.total) {
        converged = true;
      }
    }
    if (!accepted) {
      lambda *= nu;
      nu *= 2.0;
    }

    IterationRecord r = make_record(it, current.cost, cost0);
    r.accepted = accepted;
    r.linearized = linearized;
    r.damping = lambda;
    r.wall_ms = ms_since(t_iter);
    r.elapsed_ms = ms_since(start);
    result.log.records.push_back(r);

    if (converged) {
      result.termination = Termination::kConverged;
      break;
    }
    if (lambda > kMaxDamping) {
      result.termination = Termination::kNoProgress;
      break;
    }
  }
  result.hit_max_iterations = result.termination == Termination::kMaxIterations;
  result.final_cost = current.cost.total;
  return result;
}

}  // namespace ctsfm
