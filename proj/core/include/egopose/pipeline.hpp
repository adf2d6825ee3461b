#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopose/dataset.hpp"
#include "egopose/energy.hpp"
#include "egopose/kv_document.hpp"
#include "egopose/prior_vae.hpp"

namespace egopose {

enum class ReprojectionMode { Heatmap, Conventional };

std::string_view to_string(ReprojectionMode mode);
ReprojectionMode parse_reprojection_mode(std::string_view text);

/// Adam over the latent code (or over the poses when the prior is off).
struct LatentOptimizerConfig {
  double step_size = 0.01;
  int max_iterations = 500;
  double tolerance = 1e-6;  // relative decrease over `window` iterations
  int window = 10;
  bool zero_init = false;   // start from z = 0 instead of encode(init).mu
  double pose_step_size = 1e-3;  // meters, used when the prior is off

  void validate() const;
};

struct OptimizationConfig {
  int segment_length = 10;
  LatentOptimizerConfig optimizer;
  EnergyWeights local_weights = EnergyWeights::local_defaults();
  EnergyWeights global_weights = EnergyWeights::global_defaults();
  bool use_prior = true;
  ReprojectionMode reprojection = ReprojectionMode::Heatmap;
  bool skip_local = false;
  bool skip_global = false;
  bool blend_segments = false;
  int blend_overlap = 2;
  std::uint64_t seed = 1;

  void validate() const;

  /// Every field under a stable key; from_document overrides only the keys present.
  KvDocument to_document() const;
  static OptimizationConfig from_document(const KvDocument& doc, OptimizationConfig base);
  static OptimizationConfig from_document(const KvDocument& doc);
};

/// Outcome of one stage on one segment. `final_objective` is the lowest
/// objective seen, the initialization included, so it never exceeds
/// `initial_objective`.
struct StageResult {
  PoseSeq poses;
  bool ran = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool fell_back = false;  // non-finite objective; poses are the initialization
  std::vector<double> curve;  // objective at every iterate
  std::vector<Diagnostic> diagnostics;
  double wall_ms = 0.0;
};

StageResult optimize_local_segment(const PoseSeq& init, std::span<const HeatmapStack> heatmaps,
                                   const FisheyeCalib& calib, const PriorModel* prior, const OptimizationConfig& config);

StageResult optimize_global_segment(const PoseSeq& init, const PriorModel* prior, const OptimizationConfig& config);

/// P_world = R_i P_i + t_i per frame.
PoseSeq to_world(const PoseSeq& local, std::span<const RigidTransform> cameras);

/// Frames [first, first + count) are optimized together; frames before
/// first + keep_from were already produced by an earlier window.
struct SegmentWindow {
  int first = 0;
  int count = 0;
  int keep_from = 0;
};

/// Disjoint windows with a right-aligned last window, or windows advancing by
/// length - overlap when blending. Needs frame_count >= length.
std::vector<SegmentWindow> plan_segments(int frame_count, int length, bool blend = false, int overlap = 2);

/// Reassembles per-window results: kept frames only, or a linear crossfade
/// over shared frames when blending.
PoseSeq assemble_segments(std::span<const PoseSeq> parts, std::span<const SegmentWindow> windows, int frame_count,
                          bool blend);

/// Camera-to-world transform per frame. With a reference trajectory the
/// estimated one is first similarity-aligned to it (nearest timestamps).
struct CameraTrack {
  std::vector<RigidTransform> cameras;
  double scale = 1.0;
  bool aligned = false;
  std::vector<std::string> warnings;
};

CameraTrack camera_track(const CaptureDataset& data);

struct SegmentReport {
  SegmentWindow window;
  StageResult local;
  StageResult global;
};

struct RunResult {
  PoseSeq local{{}, Space::Local};
  PoseSeq world{{}, Space::World};
  std::vector<SegmentReport> segments;
  CameraTrack track;
  std::vector<std::string> warnings;
  double wall_ms = 0.0;

  /// Segments where any stage fell back to its initialization.
  int flagged_segments() const;
};

using SegmentCallback = std::function<void(std::size_t index, const SegmentReport&)>;

/// Local stage per window, world transform, global stage per window.
RunResult run(const CaptureDataset& data, const PriorModel* local_prior, const PriorModel* global_prior,
              const OptimizationConfig& config, const SegmentCallback& on_segment = {});

/// poses.bin (world), poses_local.bin, poses.txt, report.txt and
/// objective_curves.csv. Wall times are written only with `include_timing`,
/// so the default artifacts are reproducible byte for byte.
void write_run_outputs(const RunResult& result, const OptimizationConfig& config, const std::filesystem::path& dir,
                       bool include_timing = false);

}  // namespace egopose
