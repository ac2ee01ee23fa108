#pragma once

// Residual evaluation shared by the cost, the block API and the solver.

#include <array>
#include <functional>
#include <optional>
#include <type_traits>
#include <vector>

#include <ceres/jet.h>

#include "ctsfm/estimator.hpp"

namespace ctsfm::est {

/// Tangent offsets of the landmark groups.
struct Layout {
  int trajectory_dim = 0;
  int dim = 0;
  std::vector<int> group_offset;
  std::vector<int> group_size;
  /// Observation range [obs_begin[k], obs_begin[k + 1]) of landmark k.
  std::vector<int> obs_begin;
  /// Position of each observation's lifted time inside its group (0 is rho).
  std::vector<int> obs_local;
};

Layout make_layout(const Problem& problem);

/// Two segments need 8 control points; Newton iterates that cross a knot add one more.
inline constexpr int kMaxSlots = 9;
inline constexpr int kCpCols = 6 * kMaxSlots;

/// One linearized block. Jc columns 6s..6s+5 belong to control point cps[s].
struct Block {
  BlockType type = BlockType::kReprojection;
  int dim = 0;
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  int num_cps = 0;
  std::array<int, kMaxSlots> cps{};
  Eigen::Matrix<double, 3, kCpCols> Jc;
  int group = -1;
  int num_group_cols = 0;
  std::array<int, 2> group_cols{};  // local indices inside the group
  Eigen::Matrix<double, 3, 2> Jg;
  bool behind_camera = false;
  bool newton_fallback = false;
};

/// Residual value of one block without derivatives.
struct BlockValue {
  BlockType type = BlockType::kReprojection;
  int dim = 0;
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  bool behind_camera = false;
  bool newton_fallback = false;
};

void linearize(const Problem& problem, const Layout& layout, int block, Block& out);
void evaluate(const Problem& problem, int block, BlockValue& out);

/// Robust cost of one block.
double block_cost(const BlockValue& v, double huber_c);
/// Per-term sums over block values in order.
CostBreakdown accumulate(const std::vector<BlockValue>& values, double huber_c);
/// IRLS weight applied to the first two rows of a reprojection block.
double huber_weight(double s, double c);

/// Upper Cholesky factor U with W = U^T U.
Eigen::Matrix3d weight_factor(const Eigen::Matrix3d& W);

/// Runs fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Dual-number control points

template <typename S>
S param(double value, int index) {
  if constexpr (std::is_same_v<S, double>) {
    (void)index;
    return value;
  } else {
    S s(value);
    if (index >= 0) s.v[index] = 1.0;
    return s;
  }
}

enum class SeedMode { kNone, kFull, kRotationOnly };

/// Up to kMaxSlots distinct control points, perturbed in their tangent spaces.
template <typename S>
struct ControlJets {
  const Trajectory* traj = nullptr;
  SeedMode mode = SeedMode::kNone;
  int count = 0;
  std::array<int, kMaxSlots> index{};
  // Constructed on first use; zero-initializing every slot of a wide Jet
  // costs more than the IMU residuals themselves.
  std::array<std::optional<Vec3<S>>, kMaxSlots> p;
  std::array<std::optional<Quat<S>>, kMaxSlots> q;
  std::array<std::optional<PoseT<S>>, kMaxSlots> T;

  int slot_of(int c) const {
    for (int s = 0; s < count; ++s) {
      if (index[s] == c) return s;
    }
    return -1;
  }

  /// Control points of `segment` not yet held.
  int missing(int segment) const {
    int n = 0;
    for (int j = 0; j < 4; ++j) n += slot_of(segment + j) < 0 ? 1 : 0;
    return n;
  }

  void add_segment(int segment) {
    for (int j = 0; j < 4; ++j) add(segment + j);
  }

  void add(int c) {
    if (slot_of(c) >= 0) return;
    const int s = count++;
    index[s] = c;
    const int pos_base = mode == SeedMode::kFull ? 6 * s : -1;
    const int rot_base = mode == SeedMode::kFull ? 6 * s + 3 : (mode == SeedMode::kRotationOnly ? 3 * s : -1);
    auto seed = [](int base, int i) { return base < 0 ? -1 : base + i; };
    Vec3<S> d_pos;
    Vec3<S> d_rot;
    for (int i = 0; i < 3; ++i) {
      d_pos[i] = param<S>(0.0, seed(pos_base, i));
      d_rot[i] = param<S>(0.0, seed(rot_base, i));
    }
    if (traj->kind() == TrajectoryKind::kSplit) {
      const Eigen::Vector3d& p0 = traj->position_spline().control_points()[c];
      const UnitQuaternion& q0 = traj->orientation_spline().control_points()[c];
      p[s] = p0.cast<S>() + d_pos;
      if (rot_base < 0) {
        q[s] = q0.cast<S>();
      } else {
        const Quat<S> dq(S(1.0), d_rot.x() * 0.5, d_rot.y() * 0.5, d_rot.z() * 0.5);
        q[s] = q0.cast<S>() * dq;
      }
    } else {
      const Pose& T0 = traj->se3_spline().control_points()[c];
      const Mat3<S> R = T0.R.cast<S>();
      PoseT<S>& Ts = T[s].emplace();
      Ts.R = rot_base < 0 ? R : Mat3<S>(R * (Mat3<S>::Identity() + skew(d_rot)));
      Ts.p = pos_base < 0 ? T0.p.cast<S>() : Vec3<S>(T0.p.cast<S>() + R * d_pos);
    }
  }

  SplitSegment<S> split_segment(int segment) const {
    SplitSegment<S> seg;
    for (int j = 0; j < 4; ++j) {
      const int s = slot_of(segment + j);
      seg.p[j] = *p[s];
      seg.q[j] = *q[s];
    }
    return seg;
  }

  Se3Segment<S> se3_segment(int segment) const {
    Se3Segment<S> seg;
    for (int j = 0; j < 4; ++j) seg.T_[j] = *T[slot_of(segment + j)];
    return seg;
  }

  PoseT<S> pose(const S& t) const {
    const CumulativeBasis<S> basis = cumulative_basis(traj->grid(), t);
    if (traj->kind() == TrajectoryKind::kSplit) {
      return split_pose(basis, split_segment(basis.segment));
    }
    return se3_pose(basis, se3_segment(basis.segment));
  }
};

inline int segment_of(const Trajectory& traj, double t) { return locate_segment(traj.grid(), t).first; }

}  // namespace ctsfm::est
