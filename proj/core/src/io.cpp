#include "ctsfm/io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctsfm/errors.hpp"
#include "json_util.hpp"

namespace ctsfm {

using nlohmann::json;
using jsonutil::Field;

namespace {

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_json(const Pose& T) {
  json row = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) row.push_back(T.R(r, c));
  }
  for (int i = 0; i < 3; ++i) row.push_back(T.p[i]);
  return row;
}

Pose pose_from(const Field& f) {
  const auto v = f.numbers(12);
  Pose T;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) T.R(r, c) = v[r * 3 + c];
  }
  T.p = Eigen::Vector3d(v[9], v[10], v[11]);
  return T;
}

json grid_json(const KnotGrid& g) { return json{{"t0", g.t0}, {"dt", g.dt}, {"count", g.count}}; }

KnotGrid grid_from(const Field& f) {
  KnotGrid g;
  g.t0 = f["t0"].number();
  g.dt = f["dt"].number();
  g.count = f["count"].integer();
  if (!(g.dt > 0.0)) f["dt"].fail("must be positive");
  if (g.count < 4) f["count"].fail("a spline needs at least 4 control points");
  return g;
}

json camera_json(const RsCamera& c) {
  return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"Nu", c.Nu},
              {"Nv", c.Nv}, {"readout", c.readout}, {"frame_period", c.frame_period}};
}

RsCamera camera_from(const Field& f) {
  RsCamera c;
  c.fx = f["fx"].number();
  c.fy = f["fy"].number();
  c.cx = f["cx"].number();
  c.cy = f["cy"].number();
  c.Nu = f["Nu"].integer();
  c.Nv = f["Nv"].integer();
  c.readout = f["readout"].number();
  c.frame_period = f["frame_period"].number();
  return c;
}

json ground_truth_json(const GroundTruth& gt) {
  json j;
  j["grid"] = grid_json(gt.grid);
  json cps = json::array();
  for (const auto& T : gt.control_poses) cps.push_back(pose_json(T));
  j["control_poses"] = std::move(cps);
  json samples = json::array();
  for (const auto& [t, T] : gt.samples) {
    json row = json::array({t});
    for (const auto& v : pose_json(T)) row.push_back(v);
    samples.push_back(std::move(row));
  }
  j["samples"] = std::move(samples);
  json lms = json::array();
  for (const auto& l : gt.landmarks) {
    lms.push_back(json::array({l.id, l.position.x(), l.position.y(), l.position.z(), l.inv_depth}));
  }
  j["landmarks"] = std::move(lms);
  json clean = json::array();
  for (const auto& o : gt.clean_observations) {
    clean.push_back(json::array({o.landmark, o.frame, o.pixel.x(), o.pixel.y(), o.time}));
  }
  j["clean_observations"] = std::move(clean);
  return j;
}

GroundTruth ground_truth_from(const Field& f) {
  GroundTruth gt;
  gt.grid = grid_from(f["grid"]);
  const Field cps = f["control_poses"];
  for (std::size_t i = 0; i < cps.size(); ++i) gt.control_poses.push_back(pose_from(cps[i]));
  if (static_cast<int>(gt.control_poses.size()) != gt.grid.count) {
    cps.fail("expected one pose per knot (" + std::to_string(gt.grid.count) + ")");
  }
  const Field samples = f["samples"];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = samples[i].numbers(13);
    Pose T;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) T.R(r, c) = v[1 + r * 3 + c];
    }
    T.p = Eigen::Vector3d(v[10], v[11], v[12]);
    gt.samples.emplace_back(v[0], T);
  }
  const Field lms = f["landmarks"];
  for (std::size_t i = 0; i < lms.size(); ++i) {
    const Field row = lms[i];
    row.expect_array(5);
    GroundTruthLandmark l;
    l.id = row[0].integer();
    l.position = Eigen::Vector3d(row[1].number(), row[2].number(), row[3].number());
    l.inv_depth = row[4].number();
    gt.landmarks.push_back(l);
  }
  const Field clean = f["clean_observations"];
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Field row = clean[i];
    row.expect_array(5);
    CleanObservation o;
    o.landmark = row[0].integer();
    o.frame = row[1].integer();
    o.pixel = Eigen::Vector2d(row[2].number(), row[3].number());
    o.time = row[4].number();
    gt.clean_observations.push_back(o);
  }
  return gt;
}

json dataset_json(const Dataset& d) {
  json j;
  j["format_version"] = kFormatVersion;
  j["meta"] = json{{"camera", camera_json(d.meta.camera)},
                   {"imu_rate", d.meta.imu_rate},
                   {"sigma_image", d.meta.sigma_image},
                   {"sigma_imu", d.meta.sigma_imu},
                   {"seed", d.meta.seed},
                   {"motion", d.meta.motion},
                   {"gravity", vec_json(d.meta.gravity)},
                   {"gyro_bias", vec_json(d.meta.gyro_bias)},
                   {"accel_bias", vec_json(d.meta.accel_bias)}};
  json frames = json::array();
  for (const auto& f : d.frames) frames.push_back(json{{"id", f.id}, {"t0", f.t0}});
  j["frames"] = std::move(frames);
  json tracks = json::array();
  for (const auto& tr : d.tracks) {
    json entries = json::array();
    for (const auto& e : tr.entries) entries.push_back(json::array({e.frame, e.pixel.x(), e.pixel.y()}));
    tracks.push_back(json{{"landmark", tr.landmark}, {"entries", std::move(entries)}});
  }
  j["tracks"] = std::move(tracks);
  json imu = json::array();
  for (const auto& s : d.imu) {
    imu.push_back(json::array({s.t, s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z()}));
  }
  j["imu"] = std::move(imu);
  if (d.ground_truth) j["ground_truth"] = ground_truth_json(*d.ground_truth);
  return j;
}

Eigen::Vector3d vec_from(const Field& f) {
  const auto v = f.numbers(3);
  return Eigen::Vector3d(v[0], v[1], v[2]);
}

Dataset dataset_from(const json& root) {
  const Field top(root, "");
  jsonutil::check_version(top, kFormatVersion);
  Dataset d;
  const Field meta = top["meta"];
  d.meta.camera = camera_from(meta["camera"]);
  d.meta.imu_rate = meta["imu_rate"].number();
  d.meta.sigma_image = meta["sigma_image"].number();
  d.meta.sigma_imu = meta["sigma_imu"].number();
  d.meta.seed = meta["seed"].unsigned_integer();
  d.meta.motion = meta["motion"].string();
  d.meta.gravity = vec_from(meta["gravity"]);
  d.meta.gyro_bias = meta.has("gyro_bias") ? vec_from(meta["gyro_bias"]) : Eigen::Vector3d::Zero();
  d.meta.accel_bias = meta.has("accel_bias") ? vec_from(meta["accel_bias"]) : Eigen::Vector3d::Zero();

  const Field frames = top["frames"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    d.frames.push_back(Frame{frames[i]["id"].integer(), frames[i]["t0"].number()});
  }
  const Field tracks = top["tracks"];
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    Track tr;
    tr.landmark = tracks[i]["landmark"].integer();
    const Field entries = tracks[i]["entries"];
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const Field row = entries[k];
      row.expect_array(3);
      tr.entries.push_back(TrackEntry{row[0].integer(), Eigen::Vector2d(row[1].number(), row[2].number())});
    }
    d.tracks.push_back(std::move(tr));
  }
  const Field imu = top["imu"];
  for (std::size_t i = 0; i < imu.size(); ++i) {
    const auto v = imu[i].numbers(7);
    d.imu.push_back(ImuSample{v[0], Eigen::Vector3d(v[1], v[2], v[3]), Eigen::Vector3d(v[4], v[5], v[6])});
  }
  if (top.has("ground_truth")) d.ground_truth = ground_truth_from(top["ground_truth"]);
  d.validate();
  return d;
}

json trajectory_json(const Trajectory& traj) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = to_string(traj.kind());
  j["grid"] = grid_json(traj.grid());
  j["gravity"] = vec_json(traj.gravity());
  json cps = json::array();
  if (traj.kind() == TrajectoryKind::kSplit) {
    const auto& p = traj.position_spline().control_points();
    const auto& q = traj.orientation_spline().control_points();
    for (std::size_t k = 0; k < p.size(); ++k) {
      cps.push_back(json::array({p[k].x(), p[k].y(), p[k].z(), q[k].w(), q[k].x(), q[k].y(), q[k].z()}));
    }
  } else {
    for (const auto& T : traj.se3_spline().control_points()) cps.push_back(pose_json(T));
  }
  j["control_points"] = std::move(cps);
  return j;
}

Trajectory trajectory_from(const json& root) {
  const Field top(root, "");
  jsonutil::check_version(top, kFormatVersion);
  TrajectoryKind kind;
  try {
    kind = trajectory_kind_from_string(top["kind"].string());
  } catch (const Error& e) {
    top["kind"].fail(e.what());
  }
  const KnotGrid grid = grid_from(top["grid"]);
  const Eigen::Vector3d g = vec_from(top["gravity"]);
  const Field cps = top["control_points"];
  if (static_cast<int>(cps.size()) != grid.count) {
    cps.fail("expected " + std::to_string(grid.count) + " control points");
  }
  if (kind == TrajectoryKind::kSplit) {
    std::vector<Eigen::Vector3d> p;
    std::vector<UnitQuaternion> q;
    for (std::size_t k = 0; k < cps.size(); ++k) {
      const auto v = cps[k].numbers(7);
      p.emplace_back(v[0], v[1], v[2]);
      q.emplace_back(v[3], v[4], v[5], v[6]);
    }
    Trajectory out = Trajectory::split(R3Spline(grid, p), So3Spline(grid, q), g);
    // Keep the stored bits rather than the renormalized ones.
    out.orientation_spline().control_points() = q;
    return out;
  }
  std::vector<Pose> poses;
  for (std::size_t k = 0; k < cps.size(); ++k) poses.push_back(pose_from(cps[k]));
  return Trajectory::se3(Se3Spline(grid, poses), g);
}

json matrix_json(const Eigen::Matrix3d& M) {
  json row = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) row.push_back(M(r, c));
  }
  return row;
}

Eigen::Matrix3d matrix_from(const Field& f) {
  const auto v = f.numbers(9);
  Eigen::Matrix3d M;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) M(r, c) = v[r * 3 + c];
  }
  return M;
}

json result_json(const ResultFile& r) {
  json j;
  j["format_version"] = kFormatVersion;
  j["dataset"] = r.dataset;
  j["trajectory_kind"] = to_string(r.kind);
  j["projection"] = to_string(r.method);
  j["quality"] = r.q_hat;
  j["knot_spacing"] = r.knot_spacing;
  j["W_gyro"] = matrix_json(r.W_gyro);
  j["W_accel"] = matrix_json(r.W_accel);
  j["trajectory"] = trajectory_json(r.trajectory);
  json lms = json::array();
  for (const auto& lm : r.landmarks) {
    lms.push_back(json::array({lm.id, lm.ref_frame, lm.ref_frame_t0, lm.ref_obs.x(), lm.ref_obs.y(), lm.inv_depth}));
  }
  j["landmarks"] = std::move(lms);
  j["termination"] = r.termination;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  j["relative_cost"] = r.relative_cost();
  j["iterations"] = r.iterations;
  j["mean_iteration_ms"] = r.mean_iteration_ms;
  return j;
}

ResultFile result_from(const json& root) {
  const Field top(root, "");
  jsonutil::check_version(top, kFormatVersion);
  ResultFile r;
  r.dataset = top["dataset"].string();
  try {
    r.kind = trajectory_kind_from_string(top["trajectory_kind"].string());
  } catch (const Error& e) {
    top["trajectory_kind"].fail(e.what());
  }
  try {
    r.method = projection_method_from_string(top["projection"].string());
  } catch (const Error& e) {
    top["projection"].fail(e.what());
  }
  r.q_hat = top["quality"].number();
  r.knot_spacing = top["knot_spacing"].number();
  r.W_gyro = matrix_from(top["W_gyro"]);
  r.W_accel = matrix_from(top["W_accel"]);
  try {
    r.trajectory = trajectory_from(top["trajectory"].raw());
  } catch (const Error& e) {
    top["trajectory"].fail(e.what());
  }
  const Field lms = top["landmarks"];
  for (std::size_t i = 0; i < lms.size(); ++i) {
    const Field row = lms[i];
    row.expect_array(6);
    Landmark lm;
    lm.id = row[0].integer();
    lm.ref_frame = row[1].integer();
    lm.ref_frame_t0 = row[2].number();
    lm.ref_obs = Eigen::Vector2d(row[3].number(), row[4].number());
    lm.inv_depth = row[5].number();
    r.landmarks.push_back(lm);
  }
  r.termination = top["termination"].string();
  r.initial_cost = top["initial_cost"].number();
  r.final_cost = top["final_cost"].number();
  r.iterations = top["iterations"].integer();
  r.mean_iteration_ms = top["mean_iteration_ms"].number();
  return r;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::kSchema, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::kIo, "write failed for " + path.string());
}

std::string dataset_to_string(const Dataset& dataset) {
  dataset.validate();
  return dataset_json(dataset).dump(1) + "\n";
}

Dataset dataset_from_string(const std::string& text) { return dataset_from(parse(text)); }

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_text_file(path, dataset_to_string(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_string(read_text_file(path)); }

std::string trajectory_to_string(const Trajectory& trajectory) { return trajectory_json(trajectory).dump(1) + "\n"; }

Trajectory trajectory_from_string(const std::string& text) { return trajectory_from(parse(text)); }

void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  write_text_file(path, trajectory_to_string(trajectory));
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  return trajectory_from_string(read_text_file(path));
}

std::string result_to_string(const ResultFile& result) { return result_json(result).dump(1) + "\n"; }

ResultFile result_from_string(const std::string& text) { return result_from(parse(text)); }

void write_result(const std::filesystem::path& path, const ResultFile& result) {
  write_text_file(path, result_to_string(result));
}

ResultFile read_result(const std::filesystem::path& path) { return result_from_string(read_text_file(path)); }

}  // namespace ctsfm
