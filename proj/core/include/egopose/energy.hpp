#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "egopose/fisheye.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/skeleton.hpp"

namespace egopose {

struct EnergyWeights {
  double lambda_R = 0.01;  // reprojection
  double lambda_J = 0.01;  // stay near the initialization
  double lambda_T = 1.0;   // acceleration
  double lambda_B = 0.01;  // bone-length consistency

  void validate() const;
  static EnergyWeights local_defaults() { return {}; }
  static EnergyWeights global_defaults() { return {0.0, 0.01, 1.0, 0.01}; }
};

/// Value and dense d value / d poses of one energy term.
struct TermResult {
  double value = 0.0;
  PoseFrames gradient;
  std::vector<Diagnostic> diagnostics;
};

/// Raw (unweighted) term values; total is the weighted sum.
struct EnergyBreakdown {
  double total = 0.0;
  double reproj = 0.0;
  double pose = 0.0;
  double smooth = 0.0;
  double bone = 0.0;
  PoseFrames gradient;
  std::vector<Diagnostic> diagnostics;
};

/// Heatmap reprojection: -sum over frames and joints of sample(grid, project(joint))^2.
/// Joints within 1e-6 of the optical axis contribute nothing.
TermResult e_reproj(const PoseSeq& seq, std::span<const HeatmapStack> heatmaps, const FisheyeCalib& calib);

/// sum_i ||P_i - init_i||^2
TermResult e_pose(const PoseSeq& seq, const PoseSeq& init);

/// Sum of squared second differences over all frames; needs B >= 3.
TermResult e_smooth(const PoseSeq& seq);

/// sum_i ||L(P_i) - mean_j L(P_j)||^2 over the 14 bone lengths. A zero-length
/// bone contributes no gradient for that frame and raises a diagnostic.
TermResult e_bone(const PoseSeq& seq, const Skeleton& skel = default_skeleton());

/// 2D keypoints per frame, with the peak value as confidence.
struct Detections2d {
  Eigen::Matrix<double, 2, kNumJoints> uv = Eigen::Matrix<double, 2, kNumJoints>::Zero();
  Eigen::Matrix<double, kNumJoints, 1> confidence = Eigen::Matrix<double, kNumJoints, 1>::Ones();
};

/// Detections below this peak value are ignored by the conventional term.
inline constexpr double kMinDetectionConfidence = 0.1;

std::vector<Detections2d> argmax_detections(std::span<const HeatmapStack> heatmaps);

/// sum ||project(joint) - detection||^2 in pixels over confident detections.
TermResult conventional_reproj(const PoseSeq& seq, std::span<const Detections2d> detections, const FisheyeCalib& calib);

EnergyBreakdown local_objective(const PoseSeq& seq, const PoseSeq& init, std::span<const HeatmapStack> heatmaps,
                                const FisheyeCalib& calib, const EnergyWeights& weights);

/// The reprojection ablation: conventional_reproj replaces e_reproj.
EnergyBreakdown local_objective_conventional(const PoseSeq& seq, const PoseSeq& init,
                                             std::span<const Detections2d> detections, const FisheyeCalib& calib,
                                             const EnergyWeights& weights);

/// lambda_J e_pose + lambda_T e_smooth + lambda_B e_bone; lambda_R is ignored.
EnergyBreakdown global_objective(const PoseSeq& seq, const PoseSeq& init, const EnergyWeights& weights);

}  // namespace egopose
