#pragma once

// JSON files for datasets and estimated trajectories. Every file carries
// `format_version: 1`; doubles are written in shortest round-trip form so a
// read after a write reproduces every value bit for bit.

#include <filesystem>
#include <string>

#include "ctsfm/dataset.hpp"

namespace ctsfm {

inline constexpr int kFormatVersion = 1;

/// Validates before writing. Throws kIo on file errors.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
/// Throws kSchema naming the offending field, kIo when the file cannot be read.
Dataset read_dataset(const std::filesystem::path& path);

std::string dataset_to_string(const Dataset& dataset);
Dataset dataset_from_string(const std::string& text);

/// Knot grid, kind, gravity and raw control points.
void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory read_trajectory(const std::filesystem::path& path);

std::string trajectory_to_string(const Trajectory& trajectory);
Trajectory trajectory_from_string(const std::string& text);

/// Outcome of one reconstruction: settings, estimated state and solver summary.
struct ResultFile {
  std::string dataset;
  TrajectoryKind kind = TrajectoryKind::kSplit;
  ProjectionMethod method = ProjectionMethod::kNewton;
  double q_hat = 0.99;
  double knot_spacing = 0.0;
  Eigen::Matrix3d W_gyro = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d W_accel = Eigen::Matrix3d::Identity();
  Trajectory trajectory;
  std::vector<Landmark> landmarks;
  std::string termination;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  double mean_iteration_ms = 0.0;

  double relative_cost() const { return initial_cost > 0.0 ? final_cost / initial_cost : 0.0; }
};

void write_result(const std::filesystem::path& path, const ResultFile& result);
ResultFile read_result(const std::filesystem::path& path);

std::string result_to_string(const ResultFile& result);
ResultFile result_from_string(const std::string& text);

/// Whole-file helpers shared by the result writers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ctsfm
