#include "egopose/energy.hpp"

#include <cmath>
#include <string>

#include "egopose/errors.hpp"

namespace egopose {

void EnergyWeights::validate() const {
  for (double w : {lambda_R, lambda_J, lambda_T, lambda_B}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("energy weights must be finite and non-negative");
  }
}

namespace {

void check_heatmaps(const PoseSeq& seq, std::span<const HeatmapStack> heatmaps, const FisheyeCalib& calib) {
  if (heatmaps.size() != seq.length()) {
    throw ValidationError("e_reproj: " + std::to_string(heatmaps.size()) + " heatmap stacks for " +
                          std::to_string(seq.length()) + " frames");
  }
  for (const auto& hm : heatmaps) {
    const double w = hm.width() * hm.stride;
    const double h = hm.height() * hm.stride;
    if (std::abs(w - calib.image_size.x()) > 1e-6 * calib.image_size.x() ||
        std::abs(h - calib.image_size.y()) > 1e-6 * calib.image_size.y()) {
      throw ValidationError("e_reproj: heatmap grid (" + std::to_string(hm.width()) + "x" + std::to_string(hm.height()) +
                            ", stride " + std::to_string(hm.stride) + ") does not cover the calibrated image");
    }
  }
}

void check_same_shape(const PoseSeq& a, const PoseSeq& b, const char* what) {
  if (a.length() != b.length()) {
    throw ValidationError(std::string(what) + ": sequences have " + std::to_string(a.length()) + " and " +
                          std::to_string(b.length()) + " frames");
  }
}

void accumulate(EnergyBreakdown& out, double weight, TermResult&& term) {
  for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += weight * term.gradient[i];
  for (auto& d : term.diagnostics) out.diagnostics.push_back(std::move(d));
}

EnergyBreakdown regularizers(const PoseSeq& seq, const PoseSeq& init, const EnergyWeights& weights) {
  weights.validate();
  EnergyBreakdown out;
  out.gradient = zero_frames(seq.length());
  auto pose = e_pose(seq, init);
  auto smooth = e_smooth(seq);
  auto bone = e_bone(seq);
  out.pose = pose.value;
  out.smooth = smooth.value;
  out.bone = bone.value;
  accumulate(out, weights.lambda_J, std::move(pose));
  accumulate(out, weights.lambda_T, std::move(smooth));
  accumulate(out, weights.lambda_B, std::move(bone));
  return out;
}

void finish(EnergyBreakdown& out, const EnergyWeights& w) {
  out.total = w.lambda_R * out.reproj + w.lambda_J * out.pose + w.lambda_T * out.smooth + w.lambda_B * out.bone;
}

}  // namespace

TermResult e_reproj(const PoseSeq& seq, std::span<const HeatmapStack> heatmaps, const FisheyeCalib& calib) {
  check_heatmaps(seq, heatmaps, calib);
  TermResult r;
  r.gradient = zero_frames(seq.length());
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const auto& hm = heatmaps[i];
    for (int j = 0; j < kNumJoints; ++j) {
      const Eigen::Vector3d p = seq[i].col(j);
      if (!jacobian_defined(p)) continue;
      const Eigen::Vector2d uv = project(p, calib);
      const auto& grid = hm.grids[static_cast<std::size_t>(j)];
      const double h = sample(grid, uv, hm.stride);
      r.value -= h * h;
      if (h == 0.0) continue;
      const Eigen::Vector2d dh = sample_gradient(grid, uv, hm.stride);
      r.gradient[i].col(j) = -2.0 * h * (project_jacobian(p, calib).transpose() * dh);
    }
  }
  return r;
}

TermResult e_pose(const PoseSeq& seq, const PoseSeq& init) {
  check_same_shape(seq, init, "e_pose");
  TermResult r;
  r.gradient = zero_frames(seq.length());
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const Pose d = seq[i] - init[i];
    r.value += d.squaredNorm();
    r.gradient[i] = 2.0 * d;
  }
  return r;
}

TermResult e_smooth(const PoseSeq& seq) {
  if (seq.length() < 3) throw ValidationError("e_smooth: needs at least 3 frames, got " + std::to_string(seq.length()));
  TermResult r;
  r.gradient = zero_frames(seq.length());
  for (std::size_t i = 2; i < seq.length(); ++i) {
    const Pose a = seq[i] - 2.0 * seq[i - 1] + seq[i - 2];
    r.value += a.squaredNorm();
    r.gradient[i] += 2.0 * a;
    r.gradient[i - 1] -= 4.0 * a;
    r.gradient[i - 2] += 2.0 * a;
  }
  return r;
}

TermResult e_bone(const PoseSeq& seq, const Skeleton& skel) {
  if (seq.length() < 1) throw ValidationError("e_bone: empty sequence");
  TermResult r;
  r.gradient = zero_frames(seq.length());
  std::vector<BoneLengths> lengths;
  lengths.reserve(seq.length());
  for (const auto& f : seq.frames) lengths.push_back(bone_lengths(f, skel));
  // Averaging offsets from frame 0 keeps constant lengths exactly constant.
  BoneLengths offset = BoneLengths::Zero();
  for (const auto& l : lengths) offset += l - lengths[0];
  const BoneLengths mean = lengths[0] + offset / static_cast<double>(seq.length());
  // The mean's own dependence cancels: sum_i (L_i - mean) = 0.
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const BoneLengths dev = lengths[i] - mean;
    r.value += dev.squaredNorm();
    for (int k = 0; k < kNumBones; ++k) {
      const auto [parent, child] = skel.bones[static_cast<std::size_t>(k)];
      const double len = lengths[i][k];
      if (len < kZeroBoneLength) {
        r.diagnostics.push_back({Diagnostic::Kind::ZeroLengthBone, static_cast<int>(i), child,
                                 "zero-length bone ending at " + std::string(skel.joint_names[static_cast<std::size_t>(child)]) +
                                     " in frame " + std::to_string(i) + ": no gradient"});
        continue;
      }
      const Eigen::Vector3d dir = (seq[i].col(child) - seq[i].col(parent)) / len;
      const Eigen::Vector3d g = 2.0 * dev[k] * dir;
      r.gradient[i].col(child) += g;
      r.gradient[i].col(parent) -= g;
    }
  }
  return r;
}

std::vector<Detections2d> argmax_detections(std::span<const HeatmapStack> heatmaps) {
  std::vector<Detections2d> out(heatmaps.size());
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      const auto& grid = heatmaps[i].grids[static_cast<std::size_t>(j)];
      out[i].uv.col(j) = argmax_uv(grid, heatmaps[i].stride);
      out[i].confidence[j] = grid.size() > 0 ? static_cast<double>(grid.maxCoeff()) : 0.0;
    }
  }
  return out;
}

TermResult conventional_reproj(const PoseSeq& seq, std::span<const Detections2d> detections, const FisheyeCalib& calib) {
  if (detections.size() != seq.length()) {
    throw ValidationError("conventional_reproj: " + std::to_string(detections.size()) + " detection sets for " +
                          std::to_string(seq.length()) + " frames");
  }
  TermResult r;
  r.gradient = zero_frames(seq.length());
  for (std::size_t i = 0; i < seq.length(); ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (detections[i].confidence[j] < kMinDetectionConfidence) continue;
      const Eigen::Vector3d p = seq[i].col(j);
      const Eigen::Vector2d res = project(p, calib) - detections[i].uv.col(j);
      r.value += res.squaredNorm();
      if (jacobian_defined(p)) r.gradient[i].col(j) = 2.0 * (project_jacobian(p, calib).transpose() * res);
    }
  }
  return r;
}

EnergyBreakdown local_objective(const PoseSeq& seq, const PoseSeq& init, std::span<const HeatmapStack> heatmaps,
                                const FisheyeCalib& calib, const EnergyWeights& weights) {
  EnergyBreakdown out = regularizers(seq, init, weights);
  auto reproj = e_reproj(seq, heatmaps, calib);
  out.reproj = reproj.value;
  accumulate(out, weights.lambda_R, std::move(reproj));
  finish(out, weights);
  return out;
}

EnergyBreakdown local_objective_conventional(const PoseSeq& seq, const PoseSeq& init,
                                             std::span<const Detections2d> detections, const FisheyeCalib& calib,
                                             const EnergyWeights& weights) {
  EnergyBreakdown out = regularizers(seq, init, weights);
  auto reproj = conventional_reproj(seq, detections, calib);
  out.reproj = reproj.value;
  accumulate(out, weights.lambda_R, std::move(reproj));
  finish(out, weights);
  return out;
}

EnergyBreakdown global_objective(const PoseSeq& seq, const PoseSeq& init, const EnergyWeights& weights) {
  EnergyBreakdown out = regularizers(seq, init, weights);
  out.total = weights.lambda_J * out.pose + weights.lambda_T * out.smooth + weights.lambda_B * out.bone;
  return out;
}

}  // namespace egopose
