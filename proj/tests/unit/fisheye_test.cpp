#include <cmath>
#include <numbers>

#include "egopose/errors.hpp"
#include "egopose/fisheye.hpp"
#include "support.hpp"

namespace egopose {
namespace {

FisheyeCalib constant_calib(double f) {
  FisheyeCalib c;
  c.coeffs = {f};
  c.center = {0, 0};
  c.image_size = {640, 640};
  return c;
}

Eigen::Vector3d off_axis_point(Rng& rng) {
  for (;;) {
    const Eigen::Vector3d p(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -0.3, 1.5));
    if (std::hypot(p.x(), p.y()) > 1e-2) return p;
  }
}

TEST(Project, ConstantRadius) {
  const Eigen::Vector2d uv = project({1, 0, 1}, constant_calib(100));
  EXPECT_DOUBLE_EQ(uv.x(), 100.0);
  EXPECT_DOUBLE_EQ(uv.y(), 0.0);
}

TEST(Project, OnAxisMapsToCenter) {
  const FisheyeCalib c = synthetic_calibration();
  EXPECT_EQ(project({0, 0, 1}, c), c.center);
  EXPECT_EQ(project({1e-10, 0, 2}, c), c.center);
}

TEST(Project, HandEvaluatedLinearPolynomial) {
  FisheyeCalib c;
  c.coeffs = {80, -20};
  c.center = {320, 320};
  c.image_size = {640, 640};
  const double x = 0.3, y = -0.4, z = 0.5;
  const double r = std::sqrt(x * x + y * y);  // 0.5
  const double rho = std::atan(z / r);
  const double f = 80.0 - 20.0 * rho;
  const Eigen::Vector2d uv = project({x, y, z}, c);
  EXPECT_NEAR(uv.x(), 320.0 + x / r * f, 1e-9);
  EXPECT_NEAR(uv.y(), 320.0 + y / r * f, 1e-9);
}

TEST(Project, NonFiniteRejected) {
  EXPECT_THROW(project({std::nan(""), 0, 1}, synthetic_calibration()), ValidationError);
}

TEST(Project, RotationEquivariantAboutOpticalAxis) {
  const FisheyeCalib c = synthetic_calibration();
  Rng rng = make_rng(11, "fisheye");
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d p = off_axis_point(rng);
    const double th = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Eigen::Matrix3d Rz = rotation_about_z(th);
    const Eigen::Vector2d a = project(p, c) - c.center;
    const Eigen::Vector2d b = project(Rz * p, c) - c.center;
    const Eigen::Vector2d expect = Rz.topLeftCorner<2, 2>() * a;
    EXPECT_NEAR((b - expect).norm(), 0.0, 1e-9 * std::max(1.0, a.norm()));
  }
}

TEST(ProjectJacobian, MatchesCentralDifferences) {
  const FisheyeCalib c = synthetic_calibration();
  Rng rng = make_rng(12, "fisheye");
  const double h = 1e-5;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Vector3d p = off_axis_point(rng);
    const Eigen::Matrix<double, 2, 3> J = project_jacobian(p, c);
    Eigen::Matrix<double, 2, 3> N;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d up = p, dn = p;
      up[k] += h;
      dn[k] -= h;
      N.col(k) = (project(up, c) - project(dn, c)) / (2 * h);
    }
    // Skip the clamp boundary where the one-sided slopes differ.
    const double rho = std::atan2(p.z(), std::hypot(p.x(), p.y()));
    if (std::abs(rho - c.rho_min) < 1e-3 || std::abs(rho - c.rho_max) < 1e-3) continue;
    EXPECT_LE((J - N).cwiseAbs().maxCoeff() / std::max(N.cwiseAbs().maxCoeff(), 1e-8), 1e-4);
  }
}

TEST(ProjectJacobian, SymmetryOnXAxis) {
  const FisheyeCalib c = synthetic_calibration();
  const Eigen::Matrix<double, 2, 3> J = project_jacobian({0.4, 0.0, 0.7}, c);
  EXPECT_EQ(J(1, 0), 0.0);
  EXPECT_EQ(J(1, 2), 0.0);
}

TEST(ProjectJacobian, FlatWhereRhoIsClamped) {
  FisheyeCalib c = synthetic_calibration();
  const Eigen::Vector3d p(0.3, 0.2, -5.0);  // far below rho_min
  ASSERT_FALSE(within_rho_range(p, c));
  const Eigen::Matrix<double, 2, 3> J = project_jacobian(p, c);
  EXPECT_EQ(J(0, 2), 0.0);
  EXPECT_EQ(J(1, 2), 0.0);
  // Radial motion no longer changes the radius either.
  EXPECT_NEAR((J * p.normalized()).norm(), 0.0, 1e-12);
}

TEST(ProjectJacobian, OnAxisIsSingular) {
  EXPECT_THROW(project_jacobian({0, 0, 1}, synthetic_calibration()), NumericalError);
  EXPECT_FALSE(jacobian_defined({0, 5e-7, 1}));
}

TEST(Calibration, ValidationAndRoundTrip) {
  FisheyeCalib bad = synthetic_calibration();
  bad.coeffs.clear();
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = synthetic_calibration();
  bad.rho_min = 0.5;
  bad.rho_max = 0.4;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = synthetic_calibration();
  bad.rho_max = 1.6;
  EXPECT_THROW(bad.validate(), ValidationError);

  const FisheyeCalib c = synthetic_calibration();
  const auto path = test::scratch_dir("calib") / "calib.txt";
  save_calibration(c, path);
  const FisheyeCalib d = load_calibration(path);
  EXPECT_EQ(d.coeffs, c.coeffs);
  EXPECT_EQ(d.center, c.center);
  EXPECT_EQ(d.image_size, c.image_size);
  EXPECT_EQ(d.rho_min, c.rho_min);
  EXPECT_EQ(d.rho_max, c.rho_max);
}

TEST(SyntheticCalibration, MonotoneRadius) {
  const FisheyeCalib c = synthetic_calibration();
  c.validate();
  for (double rho = c.rho_min; rho < c.rho_max; rho += 0.01) EXPECT_LT(c.radius_derivative(rho), 0.0);
}

TEST(TransformPoint, Basics) {
  const Eigen::Vector3d p(0.3, -2, 5);
  EXPECT_EQ(transform_point(p, RigidTransform::identity()), p);
  RigidTransform T;
  T.t = {1, 2, 3};
  EXPECT_EQ(transform_point(Eigen::Vector3d::Zero(), T), Eigen::Vector3d(1, 2, 3));
}

TEST(TransformPoint, ComposeEqualsSequential) {
  Rng rng = make_rng(13, "fisheye");
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform a = test::random_rigid(rng), b = test::random_rigid(rng);
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const Eigen::Vector3d seq = transform_point(transform_point(p, a), b);
    EXPECT_NEAR((transform_point(p, compose(b, a)) - seq).norm(), 0.0, 1e-12);
    EXPECT_TRUE(compose(b, a).is_valid());
    EXPECT_NEAR((transform_point(transform_point(p, a), a.inverse()) - p).norm(), 0.0, 1e-12);
  }
}

TEST(TransformPoint, PreservesDistances) {
  Rng rng = make_rng(14, "fisheye");
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform T = test::random_rigid(rng, 10.0);
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const Eigen::Vector3d q(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const double d0 = (p - q).norm();
    EXPECT_LE(test::rel_error((transform_point(p, T) - transform_point(q, T)).norm(), d0), 1e-9);
  }
}

}  // namespace
}  // namespace egopose
