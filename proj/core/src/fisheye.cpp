#include "egopose/fisheye.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "egopose/errors.hpp"
#include "egopose/kv_document.hpp"

namespace egopose {

void FisheyeCalib::validate() const {
  if (coeffs.empty()) throw ValidationError("fisheye calibration: at least one coefficient required");
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw ValidationError("fisheye calibration: non-finite coefficient");
  }
  if (image_size.x() <= 0 || image_size.y() <= 0) throw ValidationError("fisheye calibration: image size must be positive");
  if (!center.allFinite()) throw ValidationError("fisheye calibration: non-finite center");
  const double half_pi = std::numbers::pi / 2.0;
  if (!(rho_min < rho_max) || rho_min <= -half_pi || rho_max >= half_pi) {
    throw ValidationError("fisheye calibration: rho_range must satisfy -pi/2 < rho_min < rho_max < pi/2");
  }
}

double FisheyeCalib::radius(double rho) const {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * rho + *it;
  return acc;
}

double FisheyeCalib::radius_derivative(double rho) const {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 1;) acc = acc * rho + static_cast<double>(i) * coeffs[i];
  return acc;
}

double FisheyeCalib::clamp_rho(double rho) const { return std::clamp(rho, rho_min, rho_max); }

FisheyeCalib synthetic_calibration() {
  // In terms of the angle from the optical axis, theta = pi/2 - rho:
  //   f = 175 theta - 6 theta^3 + 1.5 theta^4
  // which is monotone, zero on the axis and 306 px at rho = -0.3.
  // Expanded below into powers of rho.
  FisheyeCalib c;
  const std::array<double, 5> theta_coeffs = {0.0, 175.0, 0.0, -6.0, 1.5};
  const double a = std::numbers::pi / 2.0;
  c.coeffs.assign(5, 0.0);
  for (std::size_t n = 0; n < theta_coeffs.size(); ++n) {
    // (a - rho)^n = sum_k C(n,k) a^(n-k) (-rho)^k
    double binom = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      c.coeffs[k] += theta_coeffs[n] * binom * std::pow(a, static_cast<double>(n - k)) * sign;
      binom = binom * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
  }
  c.center = {320.0, 320.0};
  c.image_size = {640, 640};
  c.rho_min = -0.3;
  c.rho_max = 1.56;
  return c;
}

FisheyeCalib load_calibration(const std::filesystem::path& path) {
  const auto doc = KvDocument::load(path);
  FisheyeCalib c;
  c.coeffs = doc.get_doubles("coeffs");
  const auto center = doc.get_doubles("center", 2);
  const auto size = doc.get_doubles("image_size", 2);
  const auto range = doc.get_doubles("rho_range", 2);
  c.center = {center[0], center[1]};
  c.image_size = {static_cast<int>(size[0]), static_cast<int>(size[1])};
  if (static_cast<double>(c.image_size.x()) != size[0] || static_cast<double>(c.image_size.y()) != size[1]) {
    throw ValidationError(path.string() + ": image_size must be integers");
  }
  c.rho_min = range[0];
  c.rho_max = range[1];
  c.validate();
  return c;
}

void save_calibration(const FisheyeCalib& calib, const std::filesystem::path& path) {
  KvDocument doc;
  doc.add_comment("egopose fisheye calibration: f(rho) = sum coeffs[i] * rho^i, pixels");
  doc.set("coeffs", std::span<const double>(calib.coeffs));
  const double center[2] = {calib.center.x(), calib.center.y()};
  doc.set("center", std::span<const double>(center));
  doc.set("image_size", std::to_string(calib.image_size.x()) + " " + std::to_string(calib.image_size.y()));
  const double range[2] = {calib.rho_min, calib.rho_max};
  doc.set("rho_range", std::span<const double>(range));
  doc.save(path);
}

Eigen::Vector2d project(const Eigen::Vector3d& p, const FisheyeCalib& calib) {
  if (!p.allFinite()) throw ValidationError("project: non-finite point");
  const double r = std::hypot(p.x(), p.y());
  if (r < kOnAxisProjectEpsilon) return calib.center;
  const double rho = calib.clamp_rho(std::atan2(p.z(), r));
  const double f = calib.radius(rho);
  return calib.center + Eigen::Vector2d(p.x() / r, p.y() / r) * f;
}

bool jacobian_defined(const Eigen::Vector3d& p) { return std::hypot(p.x(), p.y()) >= kOnAxisJacobianEpsilon; }

bool within_rho_range(const Eigen::Vector3d& p, const FisheyeCalib& calib) {
  const double rho = std::atan2(p.z(), std::hypot(p.x(), p.y()));
  return rho >= calib.rho_min && rho <= calib.rho_max;
}

Eigen::Matrix<double, 2, 3> project_jacobian(const Eigen::Vector3d& p, const FisheyeCalib& calib) {
  if (!p.allFinite()) throw ValidationError("project_jacobian: non-finite point");
  const double x = p.x(), y = p.y(), z = p.z();
  const double r2 = x * x + y * y;
  const double r = std::sqrt(r2);
  if (r < kOnAxisJacobianEpsilon) throw NumericalError("project_jacobian: singular configuration (point on optical axis)");

  const double raw_rho = std::atan2(z, r);
  const double rho = calib.clamp_rho(raw_rho);
  const double f = calib.radius(rho);
  const bool clamped = raw_rho < calib.rho_min || raw_rho > calib.rho_max;
  const double df = clamped ? 0.0 : calib.radius_derivative(rho);

  // rho = atan2(z, r): d/dx = -z x / (r (r^2 + z^2)), d/dz = r / (r^2 + z^2)
  const double d2 = r2 + z * z;
  const Eigen::RowVector3d drho(-z * x / (r * d2), -z * y / (r * d2), r / d2);
  const double r3 = r2 * r;
  // d(x/r), d(y/r) with respect to (x, y, z)
  const Eigen::RowVector3d dux(y * y / r3, -x * y / r3, 0.0);
  const Eigen::RowVector3d duy(-x * y / r3, x * x / r3, 0.0);

  Eigen::Matrix<double, 2, 3> J;
  J.row(0) = dux * f + (x / r) * df * drho;
  J.row(1) = duy * f + (y / r) * df * drho;
  return J;
}

bool RigidTransform::is_valid(double tol) const {
  if (!R.allFinite() || !t.allFinite()) return false;
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
  return {second.R * first.R, second.R * first.t + second.t};
}

Pose transform_pose(const Pose& pose, const RigidTransform& T) { return (T.R * pose).colwise() + T.t; }

Eigen::Matrix3d rotation_about_z(double angle) {
  return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace egopose
