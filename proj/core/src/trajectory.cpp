#include "egopose/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "egopose/binary_io.hpp"
#include "egopose/errors.hpp"
#include "egopose/kv_document.hpp"

namespace egopose {

std::vector<std::size_t> Trajectory::nearest_indices(std::size_t frame_count, double frame_rate) const {
  if (poses.empty()) throw ValidationError("trajectory: no poses");
  if (!(frame_rate > 0.0)) throw ValidationError("trajectory: frame rate must be positive");
  std::vector<std::size_t> out(frame_count);
  std::size_t k = 0;
  for (std::size_t i = 0; i < frame_count; ++i) {
    const double t = static_cast<double>(i) / frame_rate;
    while (k + 1 < poses.size() && std::abs(poses[k + 1].timestamp - t) < std::abs(poses[k].timestamp - t)) ++k;
    out[i] = k;
  }
  return out;
}

std::vector<RigidTransform> Trajectory::associate(std::size_t frame_count, double frame_rate) const {
  std::vector<RigidTransform> out;
  out.reserve(frame_count);
  for (std::size_t k : nearest_indices(frame_count, frame_rate)) out.push_back(poses[k].transform());
  return out;
}

Trajectory parse_trajectory(std::string_view text, const std::string& source) {
  Trajectory traj;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') {
      if (end == text.size()) break;
      continue;
    }
    const std::string ctx = source + ":" + std::to_string(line_no);
    std::istringstream in(line);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) v.push_back(parse_double(tok, ctx));
    if (v.size() != 8) {
      throw ValidationError(ctx + ": expected 8 fields (timestamp tx ty tz qx qy qz qw), found " +
                            std::to_string(v.size()));
    }
    TrajectoryPose p;
    p.timestamp = v[0];
    p.position = {v[1], v[2], v[3]};
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double n = q.norm();
    if (!(n > 1e-12)) throw ValidationError(ctx + ": zero quaternion");
    if (std::abs(n - 1.0) > kQuaternionNormTolerance) {
      traj.warnings.push_back(ctx + ": quaternion norm " + format_double(n) + " normalized to 1");
    }
    q.coeffs() /= n;
    p.rotation = q;
    if (!traj.poses.empty() && !(p.timestamp > traj.poses.back().timestamp)) {
      throw ValidationError(ctx + ": timestamp " + format_double(p.timestamp) + " does not increase");
    }
    traj.poses.push_back(p);
    if (end == text.size()) break;
  }
  if (traj.poses.empty()) throw ValidationError(source + ": trajectory has no poses");
  return traj;
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_trajectory(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::string out = "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& p : traj.poses) {
    const auto& q = p.rotation;
    for (double v : {p.timestamp, p.position.x(), p.position.y(), p.position.z(), q.x(), q.y(), q.z()}) {
      out += format_double(v);
      out += ' ';
    }
    out += format_double(q.w());
    out += '\n';
  }
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

Trajectory trajectory_from_transforms(std::span<const RigidTransform> poses, double frame_rate) {
  Trajectory traj;
  traj.poses.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    TrajectoryPose p;
    p.timestamp = static_cast<double>(i) / frame_rate;
    p.position = poses[i].t;
    p.rotation = Eigen::Quaterniond(poses[i].R).normalized();
    traj.poses.push_back(p);
  }
  return traj;
}

Similarity fit_similarity(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target) {
  if (source.cols() != target.cols()) throw ValidationError("similarity: point sets differ in size");
  if (source.cols() < 3) throw NumericalError("similarity: need at least 3 correspondences");
  const Eigen::Matrix3Xd sc = source.colwise() - source.rowwise().mean();
  const Eigen::Matrix3Xd tc = target.colwise() - target.rowwise().mean();
  const Eigen::Vector3d ss = Eigen::JacobiSVD<Eigen::Matrix3Xd>(sc).singularValues();
  const Eigen::Vector3d ts = Eigen::JacobiSVD<Eigen::Matrix3Xd>(tc).singularValues();
  const double tol = 1e-9;
  if (!(ss[1] > tol * std::max(ss[0], 1.0)) || !(ts[1] > tol * std::max(ts[0], 1.0))) {
    throw NumericalError("similarity: collinear or coincident correspondences");
  }
  const Eigen::Matrix4d M = Eigen::umeyama(source, target, true);
  Similarity s;
  const Eigen::Matrix3d sR = M.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sR.determinant());
  s.R = sR / s.scale;
  s.t = M.topRightCorner<3, 1>();
  return s;
}

ScaleAlignment align_trajectory_scale(const Trajectory& traj, std::span<const Eigen::Vector3d> reference) {
  if (reference.size() != traj.poses.size()) {
    throw ValidationError("align_trajectory_scale: " + std::to_string(reference.size()) + " reference points for " +
                          std::to_string(traj.poses.size()) + " poses");
  }
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(reference.size()));
  Eigen::Matrix3Xd dst(3, src.cols());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = traj.poses[i].position;
    dst.col(static_cast<Eigen::Index>(i)) = reference[i];
  }
  ScaleAlignment out;
  out.transform = fit_similarity(src, dst);
  out.scale = out.transform.scale;
  out.trajectory = traj;
  out.trajectory.scale *= out.scale;
  const Eigen::Quaterniond qR(out.transform.R);
  for (auto& p : out.trajectory.poses) {
    p.position = out.transform.apply(p.position);
    p.rotation = (qR * p.rotation).normalized();
  }
  return out;
}

}  // namespace egopose
