#include "ctsfm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ctsfm {

Trajectory GroundTruth::trajectory(const Eigen::Vector3d& gravity) const {
  return Trajectory::from_control_poses(TrajectoryKind::kSplit, grid, control_poses, gravity);
}

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& what) {
  throw Error(Errc::kSchema, path + ": " + what);
}

bool finite2(const Eigen::Vector2d& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }
bool finite3(const Eigen::Vector3d& v) { return v.allFinite(); }

}  // namespace

void Dataset::validate() const {
  try {
    meta.camera.validate();
  } catch (const Error& e) {
    schema("meta.camera", e.what());
  }
  if (!(meta.imu_rate > 0.0)) schema("meta.imu_rate", "must be positive");
  if (frames.empty()) schema("frames", "must not be empty");
  std::unordered_set<int> ids;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string path = "frames[" + std::to_string(i) + "]";
    if (!std::isfinite(frames[i].t0)) schema(path + ".t0", "must be finite");
    if (i > 0 && !(frames[i].t0 > frames[i - 1].t0)) schema(path + ".t0", "frame times must be strictly increasing");
    if (!ids.insert(frames[i].id).second) schema(path + ".id", "duplicate frame id");
  }
  for (std::size_t i = 0; i < imu.size(); ++i) {
    const std::string path = "imu[" + std::to_string(i) + "]";
    if (!std::isfinite(imu[i].t) || !finite3(imu[i].gyro) || !finite3(imu[i].accel)) schema(path, "must be finite");
    if (i > 0 && !(imu[i].t > imu[i - 1].t)) schema(path + ".t", "imu times must be strictly increasing");
  }
  std::unordered_set<int> landmarks;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string path = "tracks[" + std::to_string(i) + "]";
    const Track& tr = tracks[i];
    if (!landmarks.insert(tr.landmark).second) schema(path + ".landmark", "duplicate landmark id");
    if (tr.entries.size() < 2) schema(path + ".entries", "a track needs at least 2 entries");
    for (std::size_t j = 0; j < tr.entries.size(); ++j) {
      const std::string epath = path + ".entries[" + std::to_string(j) + "]";
      if (!ids.count(tr.entries[j].frame)) schema(epath + ".frame", "unknown frame id");
      if (!finite2(tr.entries[j].pixel) || !meta.camera.in_image(tr.entries[j].pixel)) {
        schema(epath + ".pixel", "pixel outside the image");
      }
    }
  }
}

const Frame& Dataset::frame(int id) const {
  const auto it = std::find_if(frames.begin(), frames.end(), [&](const Frame& f) { return f.id == id; });
  if (it == frames.end()) throw Error(Errc::kInvalidArgument, "unknown frame id " + std::to_string(id));
  return *it;
}

std::pair<double, double> Dataset::time_span() const {
  if (frames.empty() || imu.empty()) {
    throw Error(Errc::kInvalidArgument, "time span needs frames and IMU samples");
  }
  return {std::max(frames.front().t0, imu.front().t),
          std::min(frames.back().t0 + meta.camera.readout, imu.back().t)};
}

}  // namespace ctsfm
