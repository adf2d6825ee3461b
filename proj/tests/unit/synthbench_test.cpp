#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

#include "egopose/dataset.hpp"
#include "egopose/errors.hpp"
#include "egopose/metrics.hpp"
#include "egopose/prior_vae.hpp"
#include "egopose/synthbench.hpp"
#include "support.hpp"

namespace egopose {
namespace {

TEST(GenerateMotion, ConstantBonesAndPlantedFeet) {
  for (MotionKind kind : {MotionKind::Walk, MotionKind::ArmWave, MotionKind::Squat, MotionKind::Turn}) {
    MotionGenConfig cfg;
    cfg.seed = 111;
    cfg.frame_count = 200;
    cfg.vocabulary = {kind};
    const GeneratedMotion m = generate_motion(cfg);
    ASSERT_EQ(m.world.length(), 200u);
    ASSERT_EQ(m.stance.size(), 200u);
    ASSERT_EQ(m.camera.size(), 200u);
    const BoneLengths L0 = bone_lengths(m.world[0]);
    EXPECT_LE((L0 - m.body.bone_lengths()).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
    for (std::size_t i = 1; i < 200; ++i) {
      EXPECT_LE((bone_lengths(m.world[i]) - L0).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind) << " frame " << i;
      for (std::size_t f = 0; f < 2; ++f) {
        if (!(m.stance[i][f] && m.stance[i - 1][f])) continue;
        for (int j : {f == 0 ? kRightAnkle : kLeftAnkle, f == 0 ? kRightToe : kLeftToe}) {
          EXPECT_EQ(m.world[i].col(j), m.world[i - 1].col(j)) << to_string(kind) << " frame " << i;
        }
      }
    }
    for (const auto& c : m.camera) EXPECT_TRUE(c.is_valid());
  }
}

TEST(GenerateMotion, WalkAdvances) {
  MotionGenConfig cfg;
  cfg.seed = 112;
  cfg.frame_count = 120;
  cfg.vocabulary = {MotionKind::Walk};
  const GeneratedMotion m = generate_motion(cfg);
  const Eigen::Vector3d dir = (m.world[119].col(kNeck) - m.world[0].col(kNeck)).normalized();
  EXPECT_GT((m.world[119].col(kNeck) - m.world[0].col(kNeck)).norm(), 1.0);
  for (std::size_t i = 1; i < 120; ++i) EXPECT_GE((m.world[i].col(kNeck) - m.world[i - 1].col(kNeck)).dot(dir), 0.0);
}

TEST(GenerateMotion, HeadCameraRig) {
  MotionGenConfig cfg;
  cfg.seed = 113;
  cfg.frame_count = 50;
  const GeneratedMotion m = generate_motion(cfg);
  for (std::size_t i = 0; i < 50; ++i) {
    const Eigen::Vector3d neck = m.world[i].col(kNeck);
    const double dist = (m.camera[i].t - neck).norm();
    EXPECT_NEAR(dist, Eigen::Vector3d(0.0, -0.11, 0.06).norm(), 1e-12);
    // Pitched down 30 degrees from the torso's forward direction.
    const Pose& P = m.world[i];
    const Eigen::Vector3d up = (P.col(kNeck) - 0.5 * (P.col(kRightHip) + P.col(kLeftHip))).normalized();
    const Eigen::Vector3d right = (P.col(kRightHip) - P.col(kLeftHip)).normalized();
    EXPECT_NEAR(m.camera[i].R.col(2).dot(up), -std::sin(30.0 * std::numbers::pi / 180.0), 1e-12);
    EXPECT_NEAR(m.camera[i].R.col(0).dot(right), 1.0, 1e-12);
    EXPECT_LE((m.camera[i].R.transpose() * m.camera[i].R - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  }
}

TEST(GenerateMotion, DeterministicPerSeed) {
  MotionGenConfig cfg;
  cfg.seed = 114;
  cfg.frame_count = 80;
  const GeneratedMotion a = generate_motion(cfg), b = generate_motion(cfg);
  for (std::size_t i = 0; i < 80; ++i) EXPECT_EQ(std::memcmp(a.world[i].data(), b.world[i].data(), sizeof(Pose)), 0);
  cfg.seed = 115;
  EXPECT_NE(generate_motion(cfg).world[10], a.world[10]);
}

TEST(DeriveObservations, ZeroCorruptionRoundTrip) {
  MotionGenConfig cfg;
  cfg.seed = 116;
  cfg.frame_count = 60;
  const SyntheticCapture cap = make_capture(cfg);
  const auto cams = cap.dataset.trajectory.associate(60, cap.dataset.frame_rate);
  for (std::size_t i = 0; i < 60; ++i) {
    EXPECT_LE((transform_pose(cap.dataset.initial[i], cams[i]) - cap.eval.gt_world[i]).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_EQ(cap.dataset.heatmaps.size(), 60u);
  EXPECT_EQ(cap.dataset.heatmaps[0].width(), 64);
}

TEST(DeriveObservations, NoiseBand) {
  MotionGenConfig cfg;
  cfg.seed = 117;
  cfg.frame_count = 300;
  cfg.corruption.noise_sigma_mm = 30.0;
  const SyntheticCapture cap = make_capture(cfg);
  const double pa = pa_mpjpe(cap.dataset.initial, cap.eval.gt_local);
  EXPECT_GE(pa, 25.0);
  EXPECT_LE(pa, 40.0);
}

TEST(DeriveObservations, FullOcclusionIsBimodal) {
  MotionGenConfig cfg;
  cfg.seed = 118;
  cfg.frame_count = 20;
  cfg.corruption.occlusion_probability = 1.0;
  const SyntheticCapture cap = make_capture(cfg);
  int in_range = 0, spurious_wins = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const double stride = cap.dataset.heatmaps[i].stride;
    for (int j = 0; j < kNumJoints; ++j) {
      EXPECT_TRUE(cap.eval.occluded[i][static_cast<std::size_t>(j)]);
      const auto& g = cap.dataset.heatmaps[i].grids[static_cast<std::size_t>(j)];
      if (!within_rho_range(cap.eval.gt_local[i].col(j), cap.dataset.calib)) continue;
      ++in_range;
      const Eigen::Vector2d uv = project(cap.eval.gt_local[i].col(j), cap.dataset.calib);
      // The weaker true mode is still there.
      EXPECT_GE(sample(g, uv, stride), 0.3);
      EXPECT_LE(g.maxCoeff(), kSpuriousPeak + 1e-6);
      Eigen::Index r, c;
      g.maxCoeff(&r, &c);
      const Eigen::Vector2d peak((static_cast<double>(c) + 0.5) * stride, (static_cast<double>(r) + 0.5) * stride);
      if ((peak - uv).norm() > 2.0 * stride) ++spurious_wins;
    }
  }
  ASSERT_GT(in_range, 100);
  EXPECT_GE(spurious_wins, in_range * 9 / 10);
}

TEST(DeriveObservations, FootskateInjectionOnlyTouchesObservation) {
  MotionGenConfig cfg;
  cfg.seed = 119;
  cfg.frame_count = 120;
  cfg.vocabulary = {MotionKind::Walk};
  cfg.corruption.stance_jitter_mm = 20.0;
  const SyntheticCapture cap = make_capture(cfg);
  EXPECT_EQ(footskate_rate(cap.eval.gt_world, cap.eval.stance), 0.0);
  const auto cams = cap.dataset.trajectory.associate(120, cap.dataset.frame_rate);
  PoseSeq observed(zero_frames(120), Space::World);
  for (std::size_t i = 0; i < 120; ++i) observed[i] = transform_pose(cap.dataset.initial[i], cams[i]);
  EXPECT_GT(footskate_rate(observed, cap.eval.stance), 0.5);
}

TEST(BuildPriorCorpus, ShapesSeedsAndStatistics) {
  MotionGenConfig cfg;
  cfg.seed = 120;
  const auto local = build_prior_corpus(cfg, 1000, Space::Local);
  ASSERT_EQ(local.size(), 1000u);
  std::set<std::vector<unsigned char>> seen;
  for (const auto& s : local) {
    EXPECT_EQ(s.length(), 10u);
    EXPECT_EQ(s.space, Space::Local);
    std::vector<unsigned char> bytes(sizeof(Pose) * 10);
    for (std::size_t i = 0; i < 10; ++i) std::memcpy(bytes.data() + i * sizeof(Pose), s[i].data(), sizeof(Pose));
    seen.insert(std::move(bytes));
  }
  EXPECT_EQ(seen.size(), 1000u);
  const NormalizationStats st = compute_normalization(local);
  EXPECT_TRUE(st.mean.allFinite());
  EXPECT_TRUE(st.scale.allFinite());
  EXPECT_GE(st.scale.minCoeff(), kMinChannelScale * (1 - 1e-6));
}

TEST(BuildPriorCorpus, WorldSegmentsAreCanonical) {
  MotionGenConfig cfg;
  cfg.seed = 121;
  const auto world = build_prior_corpus(cfg, 50, Space::World, 8);
  for (const auto& s : world) {
    EXPECT_EQ(s.length(), 8u);
    EXPECT_EQ(s.space, Space::World);
    EXPECT_LE(s[0].col(kNeck).norm(), 1e-12);
    const Eigen::Vector3d hips = s[0].col(kRightHip) - s[0].col(kLeftHip);
    EXPECT_NEAR(hips.y(), 0.0, 1e-12);
    EXPECT_GT(hips.x(), 0.0);
  }
  EXPECT_THROW(build_prior_corpus(cfg, 0, Space::World), ValidationError);
}

TEST(MotionGenConfig, Validation) {
  MotionGenConfig cfg;
  cfg.corruption.outlier_probability = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.vocabulary.clear();
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_EQ(parse_motion_kind("squat"), MotionKind::Squat);
  EXPECT_THROW(parse_motion_kind("jump"), ValidationError);
}

}  // namespace
}  // namespace egopose
