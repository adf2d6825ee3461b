#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "egopose/fisheye.hpp"
#include "egopose/random.hpp"
#include "egopose/skeleton.hpp"

namespace egopose::test {

inline Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng));
  return q.normalized().toRotationMatrix();
}

inline RigidTransform random_rigid(Rng& rng, double translation = 1.0) {
  return {random_rotation(rng),
          Eigen::Vector3d(uniform(rng, -translation, translation), uniform(rng, -translation, translation),
                          uniform(rng, -translation, translation))};
}

inline Pose random_pose(Rng& rng, double extent = 1.0) {
  Pose p;
  for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = uniform(rng, -extent, extent);
  return p;
}

inline PoseSeq random_seq(Rng& rng, std::size_t frames, Space space = Space::World, double extent = 1.0) {
  PoseFrames f(frames);
  for (auto& p : f) p = random_pose(rng, extent);
  return {std::move(f), space};
}

/// A fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "egopose_tests" /
             (std::string(info->test_suite_name()) + "." + info->name() + "." + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace egopose::test
