#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "egopose/skeleton.hpp"

namespace egopose {

/// Omnidirectional polynomial fisheye model. Camera convention: z forward,
/// x right, y down. A point at elevation rho = atan(z / sqrt(x^2 + y^2))
/// lands at radius f(rho) = sum_i coeffs[i] * rho^i from the distortion
/// center, along the (x, y) direction.
struct FisheyeCalib {
  std::vector<double> coeffs;  // pixels
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2i image_size = Eigen::Vector2i::Zero();
  double rho_min = -1.5;  // radians; the polynomial is trusted only inside
  double rho_max = 1.5;

  void validate() const;
  double radius(double rho) const;
  double radius_derivative(double rho) const;
  double clamp_rho(double rho) const;
};

/// Documented 4th-degree calibration of the synthetic 640x640 head camera.
FisheyeCalib synthetic_calibration();

FisheyeCalib load_calibration(const std::filesystem::path& path);
void save_calibration(const FisheyeCalib& calib, const std::filesystem::path& path);

inline constexpr double kOnAxisProjectEpsilon = 1e-9;
inline constexpr double kOnAxisJacobianEpsilon = 1e-6;

/// Projects a camera-frame point to pixels. Points within 1e-9 of the
/// optical axis map to the center. Throws ValidationError on non-finite input.
Eigen::Vector2d project(const Eigen::Vector3d& p, const FisheyeCalib& calib);

/// Analytic d(u, v)/d(x, y, z). Throws NumericalError within 1e-6 of the
/// optical axis where the direction (x, y)/r is undefined. The derivative of
/// f is zero where rho is clamped.
Eigen::Matrix<double, 2, 3> project_jacobian(const Eigen::Vector3d& p, const FisheyeCalib& calib);

/// True when project_jacobian is defined at p.
bool jacobian_defined(const Eigen::Vector3d& p);

/// True when rho of p lies inside the calibrated range.
bool within_rho_range(const Eigen::Vector3d& p, const FisheyeCalib& calib);

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  bool is_valid(double tol = 1e-6) const;
};

inline Eigen::Vector3d transform_point(const Eigen::Vector3d& p, const RigidTransform& T) { return T.R * p + T.t; }

/// Returns the transform that applies `first` and then `second`.
RigidTransform compose(const RigidTransform& second, const RigidTransform& first);

Pose transform_pose(const Pose& pose, const RigidTransform& T);

/// Rotation about +z (the world vertical) by `angle` radians.
Eigen::Matrix3d rotation_about_z(double angle);

}  // namespace egopose
