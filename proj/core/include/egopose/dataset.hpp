#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "egopose/fisheye.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/metrics.hpp"
#include "egopose/skeleton.hpp"
#include "egopose/trajectory.hpp"

namespace egopose {

inline constexpr long long kManifestVersion = 1;

/// Everything the optimizer consumes for one capture: initial local poses,
/// per-frame heatmaps, the camera trajectory and the calibration.
struct CaptureDataset {
  double frame_rate = 30.0;
  FisheyeCalib calib;
  PoseSeq initial{{}, Space::Local};
  std::vector<HeatmapStack> heatmaps;
  Trajectory trajectory;
  /// Ground-truth camera positions for trajectory scale alignment.
  std::optional<Trajectory> reference_trajectory;
  std::vector<std::string> warnings;

  std::size_t frame_count() const { return initial.length(); }
  /// Stream lengths, heatmap/calibration agreement, finite poses.
  void validate() const;
};

/// Ground truth and labels used only for evaluation.
struct EvalData {
  PoseSeq gt_world{{}, Space::World};
  PoseSeq gt_local{{}, Space::Local};
  StanceLabels stance;
  std::vector<std::array<bool, kNumJoints>> occluded;  // heatmap shows a wrong dominant mode or nothing
  BoneLengths standard_bones = BoneLengths::Ones();

  std::size_t frame_count() const { return gt_world.length(); }
};

/// Manifest keys: format_version, frame_count, frame_rate, calibration,
/// heatmap_dir, heatmap_pattern (one printf-style %d field), heatmap_resolution,
/// heatmap_stride, initial_poses, trajectory and optionally
/// reference_trajectory. Paths are relative to the manifest's directory.
CaptureDataset load_dataset(const std::filesystem::path& manifest);
/// Writes manifest.txt and its streams into `dir`.
void write_dataset(const CaptureDataset& data, const std::filesystem::path& dir);

/// eval.txt keys: format_version, frame_count, gt_world, gt_local, stance,
/// occlusion, standard_bone_lengths.
EvalData load_eval(const std::filesystem::path& manifest);
void write_eval(const EvalData& eval, const std::filesystem::path& dir);

/// Poses as little-endian float32, [frame][joint][xyz].
void write_poses(const std::filesystem::path& path, const PoseSeq& seq);
PoseSeq read_poses(const std::filesystem::path& path, std::size_t frame_count, Space space);
/// Frame count implied by the file size.
std::size_t pose_file_frames(const std::filesystem::path& path);

/// Text table: frame index then 45 coordinates per row.
void write_pose_table(const std::filesystem::path& path, const PoseSeq& seq);

/// Expands the single %d / %0Nd field of `pattern` with `index`.
std::string format_frame_pattern(const std::string& pattern, long long index);

}  // namespace egopose
