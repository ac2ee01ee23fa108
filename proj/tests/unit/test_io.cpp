#include <gtest/gtest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "ctsfm/errors.hpp"
#include "ctsfm/io.hpp"
#include "ctsfm/simulator.hpp"
#include "test_util.hpp"

namespace ctsfm {
namespace {

const SimulatedSequence& sequence() {
  static const SimulatedSequence seq = [] {
    SimConfig c;
    c.seed = 17;
    c.duration = 1.0;
    c.gyro_bias = Eigen::Vector3d(1e-3, -2e-3, 0.1 / 3.0);
    return simulate(MotionType::kFree, c);
  }();
  return seq;
}

void expect_same_pose(const Pose& a, const Pose& b) {
  EXPECT_TRUE((a.R.array() == b.R.array()).all());
  EXPECT_TRUE((a.p.array() == b.p.array()).all());
}

void expect_same(const Dataset& a, const Dataset& b) {
  const auto& ca = a.meta.camera;
  const auto& cb = b.meta.camera;
  EXPECT_EQ(ca.fx, cb.fx);
  EXPECT_EQ(ca.fy, cb.fy);
  EXPECT_EQ(ca.cx, cb.cx);
  EXPECT_EQ(ca.cy, cb.cy);
  EXPECT_EQ(ca.Nu, cb.Nu);
  EXPECT_EQ(ca.Nv, cb.Nv);
  EXPECT_EQ(ca.readout, cb.readout);
  EXPECT_EQ(ca.frame_period, cb.frame_period);
  EXPECT_EQ(a.meta.imu_rate, b.meta.imu_rate);
  EXPECT_EQ(a.meta.sigma_image, b.meta.sigma_image);
  EXPECT_EQ(a.meta.sigma_imu, b.meta.sigma_imu);
  EXPECT_EQ(a.meta.seed, b.meta.seed);
  EXPECT_EQ(a.meta.motion, b.meta.motion);
  EXPECT_EQ(a.meta.gravity, b.meta.gravity);
  EXPECT_EQ(a.meta.gyro_bias, b.meta.gyro_bias);
  EXPECT_EQ(a.meta.accel_bias, b.meta.accel_bias);

  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].id, b.frames[i].id);
    EXPECT_EQ(a.frames[i].t0, b.frames[i].t0);
  }
  ASSERT_EQ(a.tracks.size(), b.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    EXPECT_EQ(a.tracks[i].landmark, b.tracks[i].landmark);
    ASSERT_EQ(a.tracks[i].entries.size(), b.tracks[i].entries.size());
    for (std::size_t k = 0; k < a.tracks[i].entries.size(); ++k) {
      EXPECT_EQ(a.tracks[i].entries[k].frame, b.tracks[i].entries[k].frame);
      EXPECT_EQ(a.tracks[i].entries[k].pixel, b.tracks[i].entries[k].pixel);
    }
  }
  ASSERT_EQ(a.imu.size(), b.imu.size());
  for (std::size_t i = 0; i < a.imu.size(); ++i) {
    EXPECT_EQ(a.imu[i].t, b.imu[i].t);
    EXPECT_EQ(a.imu[i].gyro, b.imu[i].gyro);
    EXPECT_EQ(a.imu[i].accel, b.imu[i].accel);
  }
  ASSERT_EQ(a.ground_truth.has_value(), b.ground_truth.has_value());
  if (!a.ground_truth) return;
  const auto& ga = *a.ground_truth;
  const auto& gb = *b.ground_truth;
  EXPECT_EQ(ga.grid.t0, gb.grid.t0);
  EXPECT_EQ(ga.grid.dt, gb.grid.dt);
  EXPECT_EQ(ga.grid.count, gb.grid.count);
  ASSERT_EQ(ga.control_poses.size(), gb.control_poses.size());
  for (std::size_t i = 0; i < ga.control_poses.size(); ++i) expect_same_pose(ga.control_poses[i], gb.control_poses[i]);
  ASSERT_EQ(ga.samples.size(), gb.samples.size());
  for (std::size_t i = 0; i < ga.samples.size(); ++i) {
    EXPECT_EQ(ga.samples[i].first, gb.samples[i].first);
    expect_same_pose(ga.samples[i].second, gb.samples[i].second);
  }
  ASSERT_EQ(ga.landmarks.size(), gb.landmarks.size());
  for (std::size_t i = 0; i < ga.landmarks.size(); ++i) {
    EXPECT_EQ(ga.landmarks[i].id, gb.landmarks[i].id);
    EXPECT_EQ(ga.landmarks[i].position, gb.landmarks[i].position);
    EXPECT_EQ(ga.landmarks[i].inv_depth, gb.landmarks[i].inv_depth);
  }
  ASSERT_EQ(ga.clean_observations.size(), gb.clean_observations.size());
  for (std::size_t i = 0; i < ga.clean_observations.size(); ++i) {
    EXPECT_EQ(ga.clean_observations[i].landmark, gb.clean_observations[i].landmark);
    EXPECT_EQ(ga.clean_observations[i].frame, gb.clean_observations[i].frame);
    EXPECT_EQ(ga.clean_observations[i].pixel, gb.clean_observations[i].pixel);
    EXPECT_EQ(ga.clean_observations[i].time, gb.clean_observations[i].time);
  }
}

Errc error_code_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::kInvalidArgument;
}

TEST(DatasetIo, StringRoundTripIsBitExact) {
  const Dataset& d = sequence().dataset;
  ASSERT_TRUE(d.ground_truth.has_value());
  expect_same(d, dataset_from_string(dataset_to_string(d)));
}

TEST(DatasetIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "ctsfm_io_test" / "seq.json";
  write_dataset(path, sequence().dataset);
  expect_same(sequence().dataset, read_dataset(path));
  std::filesystem::remove_all(path.parent_path());
}

TEST(DatasetIo, AwkwardDoublesSurvive) {
  Dataset d = sequence().dataset;
  d.ground_truth.reset();
  d.imu[0].gyro = Eigen::Vector3d(0.1 + 0.2, std::nextafter(1.0, 2.0), 5e-324);
  d.imu[0].accel = Eigen::Vector3d(-1.0 / 3.0, 1e300, -0.0);
  const Dataset back = dataset_from_string(dataset_to_string(d));
  EXPECT_EQ(back.imu[0].gyro, d.imu[0].gyro);
  EXPECT_EQ(back.imu[0].accel, d.imu[0].accel);
  EXPECT_TRUE(std::signbit(back.imu[0].accel.z()));
}

TEST(DatasetIo, MissingFieldIsNamed) {
  auto j = nlohmann::json::parse(dataset_to_string(sequence().dataset));
  j["meta"]["camera"].erase("readout");
  std::string msg;
  EXPECT_EQ(error_code_of([&] { dataset_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("meta.camera.readout"), std::string::npos) << msg;
}

TEST(DatasetIo, WrongTypeIsNamed) {
  auto j = nlohmann::json::parse(dataset_to_string(sequence().dataset));
  j["frames"][2]["t0"] = "soon";
  std::string msg;
  EXPECT_EQ(error_code_of([&] { dataset_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("frames[2].t0"), std::string::npos) << msg;
}

TEST(DatasetIo, SingleEntryTrackRejected) {
  auto j = nlohmann::json::parse(dataset_to_string(sequence().dataset));
  auto& entries = j["tracks"][0]["entries"];
  entries.erase(entries.begin() + 1, entries.end());
  std::string msg;
  EXPECT_EQ(error_code_of([&] { dataset_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("tracks[0].entries"), std::string::npos) << msg;
}

TEST(DatasetIo, PixelOutsideImageRejected) {
  Dataset d = sequence().dataset;
  d.tracks[1].entries[0].pixel.x() = d.meta.camera.Nu + 1.0;
  EXPECT_EQ(error_code_of([&] { dataset_to_string(d); }), Errc::kSchema);
}

TEST(DatasetIo, NonIncreasingTimesRejected) {
  Dataset d = sequence().dataset;
  d.imu[5].t = d.imu[4].t;
  std::string msg;
  EXPECT_EQ(error_code_of([&] { d.validate(); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("imu[5].t"), std::string::npos) << msg;
  Dataset e = sequence().dataset;
  std::swap(e.frames[0].t0, e.frames[1].t0);
  EXPECT_EQ(error_code_of([&] { e.validate(); }), Errc::kSchema);
}

TEST(DatasetIo, VersionMismatchRejected) {
  auto j = nlohmann::json::parse(dataset_to_string(sequence().dataset));
  j["format_version"] = 2;
  std::string msg;
  EXPECT_EQ(error_code_of([&] { dataset_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("format_version"), std::string::npos) << msg;
  j.erase("format_version");
  EXPECT_EQ(error_code_of([&] { dataset_from_string(j.dump()); }), Errc::kSchema);
}

TEST(DatasetIo, GarbageAndMissingFiles) {
  EXPECT_EQ(error_code_of([] { dataset_from_string("{not json"); }), Errc::kSchema);
  EXPECT_EQ(error_code_of([] { read_dataset("/nonexistent/ctsfm/none.json"); }), Errc::kIo);
}

TEST(TrajectoryIo, RoundTripBothKinds) {
  testing::Gen g(3);
  const KnotGrid grid{-0.3, 0.1, 14};
  const auto poses = testing::random_walk_poses(g, grid.count, 0.4, 0.2);
  for (auto kind : {TrajectoryKind::kSplit, TrajectoryKind::kSe3}) {
    auto traj = Trajectory::from_control_poses(kind, grid, poses, Eigen::Vector3d(0.1, 0.0, -9.7));
    const Trajectory back = trajectory_from_string(trajectory_to_string(traj));
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(back.grid().t0, grid.t0);
    EXPECT_EQ(back.grid().count, grid.count);
    EXPECT_EQ(back.gravity(), traj.gravity());
    for (double t = grid.t_min(); t < grid.t_max(); t += 0.013) {
      expect_same_pose(back.pose(t), traj.pose(t));
      EXPECT_EQ(back.predict_accel(t), traj.predict_accel(t));
    }
  }
}

TEST(TrajectoryIo, CountMismatchRejected) {
  const auto traj = Trajectory::constant(TrajectoryKind::kSplit, KnotGrid{0.0, 0.1, 6});
  auto j = nlohmann::json::parse(trajectory_to_string(traj));
  j["control_points"].erase(0);
  std::string msg;
  EXPECT_EQ(error_code_of([&] { trajectory_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("control_points"), std::string::npos) << msg;
  j = nlohmann::json::parse(trajectory_to_string(traj));
  j["kind"] = "bezier";
  EXPECT_EQ(error_code_of([&] { trajectory_from_string(j.dump()); }, &msg), Errc::kSchema);
  EXPECT_NE(msg.find("kind"), std::string::npos) << msg;
}

}  // namespace
}  // namespace ctsfm
