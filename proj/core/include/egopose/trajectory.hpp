#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "egopose/fisheye.hpp"

namespace egopose {

/// Camera-to-world pose at one timestamp.
struct TrajectoryPose {
  double timestamp = 0.0;  // seconds
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  RigidTransform transform() const { return {rotation.toRotationMatrix(), position}; }
};

struct Trajectory {
  std::vector<TrajectoryPose> poses;
  double scale = 1.0;  // product of scale factors applied so far
  std::vector<std::string> warnings;

  /// For each frame time i / frame_rate, the pose with the nearest timestamp
  /// (earlier one on ties).
  std::vector<RigidTransform> associate(std::size_t frame_count, double frame_rate) const;
  std::vector<std::size_t> nearest_indices(std::size_t frame_count, double frame_rate) const;
};

/// Quaternions further than this from unit norm are normalized with a warning.
inline constexpr double kQuaternionNormTolerance = 1e-6;

/// Parses "timestamp tx ty tz qx qy qz qw" lines; blank lines and lines
/// starting with '#' are skipped. Timestamps must increase strictly.
Trajectory parse_trajectory(std::string_view text, const std::string& source = "<memory>");
Trajectory load_trajectory(const std::filesystem::path& path);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);

Trajectory trajectory_from_transforms(std::span<const RigidTransform> poses, double frame_rate);

struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (R * p) + t; }
};

/// Least-squares target ~ s R source + t. Throws NumericalError for fewer
/// than 3 points or a collinear/coincident configuration.
Similarity fit_similarity(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target);

struct ScaleAlignment {
  Trajectory trajectory;
  double scale = 1.0;
  Similarity transform;
};

/// Similarity-aligns the trajectory positions to `reference` (one point per
/// pose) and applies it to every pose: positions s R p + t, rotations R q.
ScaleAlignment align_trajectory_scale(const Trajectory& traj, std::span<const Eigen::Vector3d> reference);

}  // namespace egopose
