#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "egopose/fisheye.hpp"
#include "egopose/skeleton.hpp"

namespace egopose {

/// Per frame: {right foot, left foot} in stance.
using StanceLabels = std::vector<std::array<bool, 2>>;

inline constexpr int kGlobalBatchFrames = 100;
inline constexpr double kFootskateThresholdMm = 20.0;

/// Least-squares R, t with target ~ R * source + t (rotation only, no
/// scale). Throws NumericalError when the cross-covariance has rank < 2.
RigidTransform procrustes_rigid(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target);
RigidTransform procrustes_rigid(const Pose& source, const Pose& target);

/// Mean joint distance without alignment, millimeters.
double mpjpe(const PoseSeq& pred, const PoseSeq& gt);

double pa_mpjpe(const PoseSeq& pred, const PoseSeq& gt);

/// Per-frame, per-joint distances after per-frame rigid alignment (mm).
std::vector<Eigen::Matrix<double, kNumJoints, 1>> pa_joint_errors(const PoseSeq& pred, const PoseSeq& gt);

/// Root-outward retarget: every bone keeps its direction and takes the
/// standard length. Returns false when some bone has zero length.
bool retarget(const Pose& pose, const BoneLengths& standard, Pose& out, const Skeleton& skel = default_skeleton());

/// PA-MPJPE after retargeting both sequences. Frames with a zero-length
/// bone in either sequence are skipped and listed in `excluded`.
double ba_mpjpe(const PoseSeq& pred, const PoseSeq& gt, const BoneLengths& standard,
                std::vector<int>* excluded = nullptr, const Skeleton& skel = default_skeleton());

/// One rigid alignment per batch of frames, then mean joint distance (mm).
double global_mpjpe(const PoseSeq& pred, const PoseSeq& gt, int batch = kGlobalBatchFrames);

/// Mean second-difference magnitude over frames and joints, mm / frame^2.
double jitter(const PoseSeq& seq);

/// Fraction of consecutive stance-labeled frame pairs (per foot) whose ankle
/// or toe moves more than `threshold_mm`.
double footskate_rate(const PoseSeq& seq, const StanceLabels& stance, double threshold_mm = kFootskateThresholdMm);

struct MetricReport {
  double pa_mpjpe = 0.0;
  double ba_mpjpe = 0.0;
  double global_mpjpe = 0.0;
  double jitter = 0.0;
  double footskate_rate = 0.0;
  int ba_excluded_frames = 0;
};

MetricReport evaluate(const PoseSeq& pred, const PoseSeq& gt, const StanceLabels& stance, const BoneLengths& standard);

void write_metric_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_metric_report(const std::filesystem::path& path);
std::string metric_csv_header();
std::string metric_csv_row(const std::string& label, const MetricReport& report);
/// Parses a file written as header + rows; returns (label, report) pairs.
std::vector<std::pair<std::string, MetricReport>> read_metric_csv(const std::filesystem::path& path);

}  // namespace egopose
