#pragma once

// In-memory form of a recorded or simulated sequence.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctsfm/rs_camera.hpp"

namespace ctsfm {

struct ImuSample {
  double t = 0.0;
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();   // rad/s
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // m/s^2
};

struct Frame {
  int id = 0;
  double t0 = 0.0;  // time of the first row
};

struct TrackEntry {
  int frame = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct Track {
  int landmark = 0;
  std::vector<TrackEntry> entries;
};

/// Noise-free observation with the capture time found by root search.
struct CleanObservation {
  int landmark = 0;
  int frame = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double time = 0.0;
};

struct GroundTruthLandmark {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  /// Inverse depth along the ray of the track's first entry.
  double inv_depth = 0.0;
};

struct GroundTruth {
  /// Split trajectory as knot grid plus per-knot control poses.
  KnotGrid grid;
  std::vector<Pose> control_poses;
  /// Dense pose samples (t, pose), for consumers that do not evaluate splines.
  std::vector<std::pair<double, Pose>> samples;
  std::vector<GroundTruthLandmark> landmarks;
  std::vector<CleanObservation> clean_observations;

  Trajectory trajectory(const Eigen::Vector3d& gravity) const;
};

struct DatasetMeta {
  RsCamera camera;
  double imu_rate = 300.0;
  double sigma_image = 0.5;
  double sigma_imu = 0.01;
  std::uint64_t seed = 0;
  std::string motion = "free";
  Eigen::Vector3d gravity = default_gravity();
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Frame> frames;
  std::vector<Track> tracks;
  std::vector<ImuSample> imu;
  std::optional<GroundTruth> ground_truth;

  /// Throws Error(kSchema) naming the offending field.
  void validate() const;
  const Frame& frame(int id) const;
  /// Interval covered by both the frames (including readout) and the IMU stream.
  std::pair<double, double> time_span() const;
};

}  // namespace ctsfm
