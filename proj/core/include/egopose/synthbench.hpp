#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "egopose/dataset.hpp"
#include "egopose/fisheye.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/metrics.hpp"
#include "egopose/skeleton.hpp"

namespace egopose {

enum class MotionKind { Walk, ArmWave, Squat, Turn };

std::string_view to_string(MotionKind kind);
MotionKind parse_motion_kind(std::string_view text);

/// Segment lengths of the generated body, meters.
struct BodyShape {
  double shoulder_half_width = 0.18;
  double shoulder_drop = 0.04;
  double upper_arm = 0.28;
  double forearm = 0.26;
  double hip_half_width = 0.10;
  double torso = 0.52;  // neck to hip center
  double thigh = 0.44;
  double shin = 0.43;
  double foot = 0.15;          // ankle to toe
  double ankle_height = 0.08;  // toe rests on the floor

  BodyShape scaled(double s) const;
  BoneLengths bone_lengths() const;
};

/// Bone lengths of the nominal BodyShape: the mean body of every generated
/// corpus, used as the standard skeleton for BA-MPJPE.
BoneLengths standard_bone_lengths();

/// Head-mounted camera: offset from the neck in the head frame (x right,
/// y down, z forward) and downward pitch.
struct HeadRig {
  Eigen::Vector3d offset{0.0, -0.11, 0.06};
  double pitch_deg = 30.0;
};

struct CorruptionSpec {
  double noise_sigma_mm = 0.0;        // RMS 3D displacement per joint and frame
  double outlier_probability = 0.0;   // per joint and frame
  double outlier_magnitude_mm = 100.0;
  double occlusion_probability = 0.0;  // long-run fraction of occluded joint-frames
  double occlusion_mean_frames = 6.0;  // mean episode length
  double occlusion_offset_px = 60.0;   // spurious mode distance from the true projection
  double heatmap_sigma_px = 15.0;
  double traj_rotation_deg = 0.0;   // per-frame rotation noise
  double traj_translation_mm = 0.0;  // per-frame translation noise, per axis
  double slam_scale = 1.0;           // trajectory translations are multiplied by this
  double stance_jitter_mm = 0.0;     // uniform +- per axis on stance feet before deriving initial poses

  void validate() const;
};

struct MotionGenConfig {
  std::uint64_t seed = 1;
  int frame_count = 300;
  double frame_rate = 30.0;
  std::vector<MotionKind> vocabulary{MotionKind::Walk, MotionKind::ArmWave, MotionKind::Squat, MotionKind::Turn};
  double body_scale_spread = 0.05;  // body scale uniform in 1 +- spread
  HeadRig rig;
  CorruptionSpec corruption;
  int heatmap_resolution = kDefaultHeatmapResolution;

  void validate() const;
};

struct GeneratedMotion {
  PoseSeq world{{}, Space::World};
  StanceLabels stance;
  std::vector<RigidTransform> camera;  // camera-to-world per frame
  std::vector<MotionKind> kind;        // active clip per frame
  BodyShape body;
  double frame_rate = 30.0;
};

/// Chains randomly drawn clips from the vocabulary. Bone lengths are exactly
/// constant and stance feet exactly still.
GeneratedMotion generate_motion(const MotionGenConfig& config);

/// Camera-frame poses of a world sequence.
PoseSeq to_camera_frame(const PoseSeq& world, std::span<const RigidTransform> camera);

struct SyntheticCapture {
  CaptureDataset dataset;
  EvalData eval;
};

/// Initial poses, heatmaps and trajectory observed from a generated motion
/// under the given corruption. Joints outside the calibrated range get an
/// empty heatmap and count as occluded.
SyntheticCapture derive_observations(const GeneratedMotion& motion, const FisheyeCalib& calib,
                                     const CorruptionSpec& corruption, std::uint64_t seed,
                                     int heatmap_resolution = kDefaultHeatmapResolution);

/// generate_motion + derive_observations with the config's corruption.
SyntheticCapture make_capture(const MotionGenConfig& config, const FisheyeCalib& calib = synthetic_calibration());

/// `count` clean B-frame segments cut from freshly generated motions: camera
/// frame for Space::Local, canonicalized world frame for Space::World.
std::vector<PoseSeq> build_prior_corpus(const MotionGenConfig& config, int count, Space space, int length = 10);

}  // namespace egopose
