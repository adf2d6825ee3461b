#include "egopose/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include "egopose/adam.hpp"
#include "egopose/errors.hpp"

namespace egopose {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool all_finite(const PoseFrames& frames) {
  return std::all_of(frames.begin(), frames.end(), [](const Pose& p) { return p.allFinite(); });
}

std::vector<double> flatten(const PoseFrames& frames) {
  std::vector<double> out(frames.size() * kPoseChannels);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::copy_n(frames[i].data(), kPoseChannels, out.data() + i * kPoseChannels);
  }
  return out;
}

PoseFrames unflatten(const std::vector<double>& flat) {
  PoseFrames frames(flat.size() / kPoseChannels);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::copy_n(flat.data() + i * kPoseChannels, kPoseChannels, frames[i].data());
  }
  return frames;
}

using Objective = std::function<EnergyBreakdown(const PoseSeq&)>;

// Adam on z (prior given) or directly on the poses. The initialization is
// the first candidate for the best iterate.
StageResult optimize(const PoseSeq& init, const Objective& objective, const PriorModel* prior,
                     const LatentOptimizerConfig& opt) {
  const auto start = Clock::now();
  StageResult r;
  r.ran = true;
  r.poses = init;

  const EnergyBreakdown e0 = objective(init);
  r.diagnostics = e0.diagnostics;
  if (!std::isfinite(e0.total)) {
    r.fell_back = true;
    r.diagnostics.push_back({Diagnostic::Kind::NonFinite, -1, -1, "objective is not finite at the initialization"});
    r.wall_ms = elapsed_ms(start);
    return r;
  }
  r.initial_objective = e0.total;
  r.final_objective = e0.total;

  std::vector<double> params;
  if (prior != nullptr) {
    const LatentVec z0 = opt.zero_init ? LatentVec::Zero(prior->latent_dim()) : prior->encode(init).mu;
    params.assign(z0.data(), z0.data() + z0.size());
  } else {
    params = flatten(init.frames);
  }
  Adam adam(params.size(), {prior != nullptr ? opt.step_size : opt.pose_step_size});
  ConvVae::Tape tape;

  for (int it = 0; it < opt.max_iterations; ++it) {
    PoseSeq current;
    if (prior != nullptr) {
      current = prior->decode(Eigen::Map<const LatentVec>(params.data(), static_cast<Eigen::Index>(params.size())), tape);
    } else {
      current = PoseSeq(unflatten(params), init.space);
    }
    const EnergyBreakdown e = objective(current);
    if (!std::isfinite(e.total) || !all_finite(e.gradient)) {
      r.poses = init;
      r.final_objective = r.initial_objective;
      r.fell_back = true;
      r.diagnostics.push_back({Diagnostic::Kind::NonFinite, -1, -1,
                               "objective became non-finite at iteration " + std::to_string(it)});
      break;
    }
    r.curve.push_back(e.total);
    r.iterations = it + 1;
    if (e.total < r.final_objective) {
      r.final_objective = e.total;
      r.poses = std::move(current);
    }
    const std::size_t k = r.curve.size();
    if (k > static_cast<std::size_t>(opt.window)) {
      const double before = r.curve[k - 1 - static_cast<std::size_t>(opt.window)];
      if (before - e.total < opt.tolerance * std::max(std::abs(before), 1e-300)) {
        r.converged = true;
        break;
      }
    }
    if (prior != nullptr) {
      const LatentVec g = prior->vjp(tape, e.gradient);
      adam.step(params, std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
    } else {
      adam.step(params, flatten(e.gradient));
    }
  }
  r.wall_ms = elapsed_ms(start);
  return r;
}

void check_prior(const PriorModel* prior, Space space, const OptimizationConfig& config, const char* stage) {
  if (!config.use_prior) return;
  if (prior == nullptr) throw ValidationError(std::string(stage) + " stage needs a prior (or disable the prior)");
  if (prior->space() != space) {
    throw ValidationError(std::string(stage) + " prior models " + std::string(to_string(prior->space())) +
                          " segments, expected " + std::string(to_string(space)));
  }
  if (prior->length() != config.segment_length) {
    throw ValidationError(std::string(stage) + " prior was trained on " + std::to_string(prior->length()) +
                          "-frame segments, config uses " + std::to_string(config.segment_length));
  }
}

StageResult skipped(const PoseSeq& init) {
  StageResult r;
  r.poses = init;
  return r;
}

std::vector<Eigen::Vector3d> nearest_reference_positions(const Trajectory& traj, const Trajectory& ref) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(traj.poses.size());
  std::size_t j = 0;
  for (const auto& p : traj.poses) {
    while (j + 1 < ref.poses.size() &&
           std::abs(ref.poses[j + 1].timestamp - p.timestamp) < std::abs(ref.poses[j].timestamp - p.timestamp)) {
      ++j;
    }
    out.push_back(ref.poses[j].position);
  }
  return out;
}

void write_stage(KvDocument& doc, const std::string& prefix, const StageResult& s, bool include_timing) {
  doc.set(prefix + ".ran", s.ran);
  doc.set(prefix + ".initial_objective", s.initial_objective);
  doc.set(prefix + ".final_objective", s.final_objective);
  doc.set(prefix + ".iterations", s.iterations);
  doc.set(prefix + ".converged", s.converged);
  doc.set(prefix + ".fell_back", s.fell_back);
  doc.set(prefix + ".diagnostics", static_cast<long long>(s.diagnostics.size()));
  if (include_timing) doc.set(prefix + ".wall_ms", s.wall_ms);
}

}  // namespace

std::string_view to_string(ReprojectionMode mode) {
  return mode == ReprojectionMode::Heatmap ? "heatmap" : "conventional";
}

ReprojectionMode parse_reprojection_mode(std::string_view text) {
  if (text == "heatmap") return ReprojectionMode::Heatmap;
  if (text == "conventional") return ReprojectionMode::Conventional;
  throw ValidationError("unknown reprojection mode '" + std::string(text) + "' (heatmap or conventional)");
}

void LatentOptimizerConfig::validate() const {
  if (!(step_size > 0.0) || !(pose_step_size > 0.0)) throw ValidationError("optimizer: step sizes must be positive");
  if (max_iterations < 1) throw ValidationError("optimizer: iteration cap must be >= 1");
  if (!(tolerance >= 0.0)) throw ValidationError("optimizer: tolerance must be non-negative");
  if (window < 1) throw ValidationError("optimizer: convergence window must be >= 1");
}

void OptimizationConfig::validate() const {
  if (segment_length < 3) throw ValidationError("config: segment length must be >= 3");
  if (blend_overlap < 1 || blend_overlap >= segment_length) {
    throw ValidationError("config: blend overlap must lie in [1, segment_length)");
  }
  optimizer.validate();
  local_weights.validate();
  global_weights.validate();
}

KvDocument OptimizationConfig::to_document() const {
  KvDocument doc;
  doc.set("segment_length", segment_length);
  doc.set("optimizer.step_size", optimizer.step_size);
  doc.set("optimizer.max_iterations", optimizer.max_iterations);
  doc.set("optimizer.tolerance", optimizer.tolerance);
  doc.set("optimizer.window", optimizer.window);
  doc.set("optimizer.zero_init", optimizer.zero_init);
  doc.set("optimizer.pose_step_size", optimizer.pose_step_size);
  doc.set("local.lambda_R", local_weights.lambda_R);
  doc.set("local.lambda_J", local_weights.lambda_J);
  doc.set("local.lambda_T", local_weights.lambda_T);
  doc.set("local.lambda_B", local_weights.lambda_B);
  doc.set("global.lambda_J", global_weights.lambda_J);
  doc.set("global.lambda_T", global_weights.lambda_T);
  doc.set("global.lambda_B", global_weights.lambda_B);
  doc.set("use_prior", use_prior);
  doc.set("reprojection", std::string(to_string(reprojection)));
  doc.set("skip_local", skip_local);
  doc.set("skip_global", skip_global);
  doc.set("blend_segments", blend_segments);
  doc.set("blend_overlap", blend_overlap);
  doc.set("seed", std::to_string(seed));
  return doc;
}

OptimizationConfig OptimizationConfig::from_document(const KvDocument& doc, OptimizationConfig c) {
  auto num = [&](const char* key, double& v) {
    if (doc.contains(key)) v = doc.get_double(key);
  };
  auto integer = [&](const char* key, int& v) {
    if (doc.contains(key)) v = static_cast<int>(doc.get_int(key));
  };
  auto flag = [&](const char* key, bool& v) {
    if (doc.contains(key)) v = doc.get_bool(key);
  };
  integer("segment_length", c.segment_length);
  num("optimizer.step_size", c.optimizer.step_size);
  integer("optimizer.max_iterations", c.optimizer.max_iterations);
  num("optimizer.tolerance", c.optimizer.tolerance);
  integer("optimizer.window", c.optimizer.window);
  flag("optimizer.zero_init", c.optimizer.zero_init);
  num("optimizer.pose_step_size", c.optimizer.pose_step_size);
  num("local.lambda_R", c.local_weights.lambda_R);
  num("local.lambda_J", c.local_weights.lambda_J);
  num("local.lambda_T", c.local_weights.lambda_T);
  num("local.lambda_B", c.local_weights.lambda_B);
  num("global.lambda_J", c.global_weights.lambda_J);
  num("global.lambda_T", c.global_weights.lambda_T);
  num("global.lambda_B", c.global_weights.lambda_B);
  flag("use_prior", c.use_prior);
  if (doc.contains("reprojection")) c.reprojection = parse_reprojection_mode(doc.get_string("reprojection"));
  flag("skip_local", c.skip_local);
  flag("skip_global", c.skip_global);
  flag("blend_segments", c.blend_segments);
  integer("blend_overlap", c.blend_overlap);
  if (doc.contains("seed")) {
    const long long s = doc.get_int("seed");
    if (s < 0) throw ValidationError(doc.source() + ": seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  c.validate();
  return c;
}

OptimizationConfig OptimizationConfig::from_document(const KvDocument& doc) {
  return from_document(doc, OptimizationConfig{});
}

StageResult optimize_local_segment(const PoseSeq& init, std::span<const HeatmapStack> heatmaps,
                                   const FisheyeCalib& calib, const PriorModel* prior, const OptimizationConfig& config) {
  if (init.space != Space::Local) throw ValidationError("local stage: initial poses must be in the camera frame");
  if (heatmaps.size() != init.length()) throw ValidationError("local stage: one heatmap stack per frame required");
  check_prior(prior, Space::Local, config, "local");
  if (config.use_prior && static_cast<int>(init.length()) != prior->length()) {
    throw ValidationError("local stage: segment length does not match the prior");
  }

  Objective objective;
  if (config.reprojection == ReprojectionMode::Heatmap) {
    objective = [&](const PoseSeq& s) { return local_objective(s, init, heatmaps, calib, config.local_weights); };
  } else {
    auto detections = std::make_shared<std::vector<Detections2d>>(argmax_detections(heatmaps));
    objective = [&, detections](const PoseSeq& s) {
      return local_objective_conventional(s, init, *detections, calib, config.local_weights);
    };
  }
  return optimize(init, objective, config.use_prior ? prior : nullptr, config.optimizer);
}

StageResult optimize_global_segment(const PoseSeq& init, const PriorModel* prior, const OptimizationConfig& config) {
  if (init.space != Space::World) throw ValidationError("global stage: initial poses must be in the world frame");
  if (init.length() < 1) throw ValidationError("global stage: empty segment");
  check_prior(prior, Space::World, config, "global");
  if (config.use_prior && static_cast<int>(init.length()) != prior->length()) {
    throw ValidationError("global stage: segment length does not match the prior");
  }

  const RigidTransform T = canonicalizing_transform(init[0]);
  const PoseSeq canonical = apply_transform(init, T);
  const Objective objective = [&](const PoseSeq& s) { return global_objective(s, canonical, config.global_weights); };
  StageResult r = optimize(canonical, objective, config.use_prior ? prior : nullptr, config.optimizer);
  // The untouched initialization is returned as given rather than round-tripped.
  r.poses = r.final_objective < r.initial_objective ? apply_transform(r.poses, T.inverse()) : init;
  return r;
}

PoseSeq to_world(const PoseSeq& local, std::span<const RigidTransform> cameras) {
  if (local.space != Space::Local) throw ValidationError("to_world: input must be in the camera frame");
  if (cameras.size() != local.length()) {
    throw ValidationError("to_world: " + std::to_string(cameras.size()) + " camera poses for " +
                          std::to_string(local.length()) + " frames");
  }
  PoseSeq out(PoseFrames(local.length()), Space::World);
  for (std::size_t i = 0; i < local.length(); ++i) out[i] = transform_pose(local[i], cameras[i]);
  return out;
}

std::vector<SegmentWindow> plan_segments(int frame_count, int length, bool blend, int overlap) {
  if (length < 1) throw ValidationError("plan_segments: length must be positive");
  if (frame_count < length) {
    throw ValidationError("sequence has " + std::to_string(frame_count) + " frames, fewer than the segment length " +
                          std::to_string(length));
  }
  if (blend && (overlap < 1 || overlap >= length)) throw ValidationError("plan_segments: overlap out of range");
  const int step = blend ? length - overlap : length;
  std::vector<SegmentWindow> windows{{0, length, 0}};
  while (windows.back().first + length < frame_count) {
    const int end = windows.back().first + length;
    const int first = std::min(windows.back().first + step, frame_count - length);
    windows.push_back({first, length, end - first});
  }
  return windows;
}

PoseSeq assemble_segments(std::span<const PoseSeq> parts, std::span<const SegmentWindow> windows, int frame_count,
                          bool blend) {
  if (parts.size() != windows.size() || parts.empty()) throw ValidationError("assemble_segments: part/window mismatch");
  const Space space = parts.front().space;
  PoseSeq out(PoseFrames(static_cast<std::size_t>(frame_count), Pose::Zero()), space);
  if (!blend) {
    for (std::size_t w = 0; w < windows.size(); ++w) {
      for (int k = windows[w].keep_from; k < windows[w].count; ++k) {
        out[static_cast<std::size_t>(windows[w].first + k)] = parts[w][static_cast<std::size_t>(k)];
      }
    }
    return out;
  }
  std::vector<double> total(static_cast<std::size_t>(frame_count), 0.0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const int left = win.keep_from;
    const int right = w + 1 < windows.size() ? win.first + win.count - windows[w + 1].first : 0;
    for (int k = 0; k < win.count; ++k) {
      const double weight = std::min({1.0, (k + 1.0) / (left + 1.0), (win.count - k + 0.0) / (right + 1.0)});
      const auto f = static_cast<std::size_t>(win.first + k);
      out[f] += weight * parts[w][static_cast<std::size_t>(k)];
      total[f] += weight;
    }
  }
  for (std::size_t f = 0; f < out.length(); ++f) out[f] /= total[f];
  return out;
}

CameraTrack camera_track(const CaptureDataset& data) {
  CameraTrack track;
  const std::size_t n = data.frame_count();
  if (data.trajectory.poses.empty()) throw ValidationError("dataset has an empty trajectory");
  if (data.reference_trajectory && !data.reference_trajectory->poses.empty()) {
    const auto ref = nearest_reference_positions(data.trajectory, *data.reference_trajectory);
    try {
      const ScaleAlignment aligned = align_trajectory_scale(data.trajectory, ref);
      track.cameras = aligned.trajectory.associate(n, data.frame_rate);
      track.scale = aligned.scale;
      track.aligned = true;
    } catch (const NumericalError& e) {
      // A camera that stays put or moves on a line leaves the rotation open.
      track.cameras = data.trajectory.associate(n, data.frame_rate);
      track.warnings.push_back(std::string("reference trajectory is degenerate (") + e.what() +
                               "); trajectory scale left at 1.0");
    }
  } else {
    track.cameras = data.trajectory.associate(n, data.frame_rate);
    track.warnings.push_back("no reference trajectory; trajectory scale left at 1.0");
  }
  return track;
}

int RunResult::flagged_segments() const {
  return static_cast<int>(
      std::count_if(segments.begin(), segments.end(), [](const auto& s) { return s.local.fell_back || s.global.fell_back; }));
}

RunResult run(const CaptureDataset& data, const PriorModel* local_prior, const PriorModel* global_prior,
              const OptimizationConfig& config, const SegmentCallback& on_segment) {
  const auto start = Clock::now();
  config.validate();
  data.validate();
  if (!config.skip_local) check_prior(local_prior, Space::Local, config, "local");
  if (!config.skip_global) check_prior(global_prior, Space::World, config, "global");

  const int n = static_cast<int>(data.frame_count());
  const auto windows = plan_segments(n, config.segment_length, config.blend_segments, config.blend_overlap);
  RunResult result;
  result.track = camera_track(data);
  result.warnings = data.warnings;
  result.warnings.insert(result.warnings.end(), result.track.warnings.begin(), result.track.warnings.end());
  result.segments.resize(windows.size());

  std::vector<PoseSeq> parts(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    result.segments[w].window = win;
    const PoseSeq init = data.initial.slice(static_cast<std::size_t>(win.first), static_cast<std::size_t>(win.count));
    result.segments[w].local =
        config.skip_local
            ? skipped(init)
            : optimize_local_segment(init,
                                     std::span<const HeatmapStack>(data.heatmaps)
                                         .subspan(static_cast<std::size_t>(win.first), static_cast<std::size_t>(win.count)),
                                     data.calib, local_prior, config);
    parts[w] = result.segments[w].local.poses;
  }
  result.local = config.skip_local ? data.initial : assemble_segments(parts, windows, n, config.blend_segments);

  const PoseSeq world_init = to_world(result.local, result.track.cameras);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const PoseSeq init = world_init.slice(static_cast<std::size_t>(win.first), static_cast<std::size_t>(win.count));
    result.segments[w].global = config.skip_global ? skipped(init) : optimize_global_segment(init, global_prior, config);
    parts[w] = result.segments[w].global.poses;
    if (on_segment) on_segment(w, result.segments[w]);
  }
  result.world = config.skip_global ? world_init : assemble_segments(parts, windows, n, config.blend_segments);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (result.segments[w].local.fell_back || result.segments[w].global.fell_back) {
      result.warnings.push_back("segment " + std::to_string(w) + " fell back to its initialization");
    }
  }
  result.wall_ms = elapsed_ms(start);
  return result;
}

void write_run_outputs(const RunResult& result, const OptimizationConfig& config, const std::filesystem::path& dir,
                       bool include_timing) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_poses(dir / "poses.bin", result.world);
  write_poses(dir / "poses_local.bin", result.local);
  write_pose_table(dir / "poses.txt", result.world);

  KvDocument doc;
  doc.add_comment("run report");
  doc.set("format_version", 1);
  doc.set("frame_count", static_cast<long long>(result.world.length()));
  doc.set("segment_count", static_cast<long long>(result.segments.size()));
  doc.set("flagged_segments", result.flagged_segments());
  doc.set("trajectory_aligned", result.track.aligned);
  doc.set("trajectory_scale", result.track.scale);
  doc.set("warning_count", static_cast<long long>(result.warnings.size()));
  for (std::size_t i = 0; i < result.warnings.size(); ++i) doc.set("warning." + std::to_string(i), result.warnings[i]);
  const KvDocument config_doc = config.to_document();
  for (const auto& [key, value] : config_doc.entries()) doc.set("config." + key, value);
  for (std::size_t i = 0; i < result.segments.size(); ++i) {
    const auto& s = result.segments[i];
    const std::string p = "segment." + std::to_string(i);
    doc.set(p + ".first", s.window.first);
    doc.set(p + ".count", s.window.count);
    doc.set(p + ".keep_from", s.window.keep_from);
    write_stage(doc, p + ".local", s.local, include_timing);
    write_stage(doc, p + ".global", s.global, include_timing);
  }
  if (include_timing) doc.set("wall_ms", result.wall_ms);
  doc.save(dir / "report.txt");

  std::ofstream csv(dir / "objective_curves.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (dir / "objective_curves.csv").string());
  csv << "segment,stage,iteration,objective\n";
  for (std::size_t i = 0; i < result.segments.size(); ++i) {
    const auto& s = result.segments[i];
    for (std::size_t k = 0; k < s.local.curve.size(); ++k) {
      csv << i << ",local," << k << ',' << format_double(s.local.curve[k]) << '\n';
    }
    for (std::size_t k = 0; k < s.global.curve.size(); ++k) {
      csv << i << ",global," << k << ',' << format_double(s.global.curve[k]) << '\n';
    }
  }
  if (!csv) throw IoError("failed writing " + (dir / "objective_curves.csv").string());
}

}  // namespace egopose
