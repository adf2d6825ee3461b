#include "egopose/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "egopose/binary_io.hpp"
#include "egopose/errors.hpp"
#include "egopose/kv_document.hpp"

namespace egopose {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "manifest.txt";
constexpr const char* kEvalName = "eval.txt";

void check_version(const KvDocument& doc) {
  const long long v = doc.get_int("format_version");
  if (v != kManifestVersion) {
    throw ValidationError(doc.source() + ": format_version " + std::to_string(v) + " is not supported (expected " +
                          std::to_string(kManifestVersion) + ")");
  }
}

fs::path resolve(const fs::path& base, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : base / p;
}

std::size_t frame_count_of(const KvDocument& doc) {
  const long long n = doc.get_int("frame_count");
  if (n < 1) throw ValidationError(doc.source() + ": frame_count must be positive");
  return static_cast<std::size_t>(n);
}

}  // namespace

std::string format_frame_pattern(const std::string& pattern, long long index) {
  const auto pct = pattern.find('%');
  if (pct == std::string::npos || pattern.find('%', pct + 1) != std::string::npos) {
    throw ValidationError("frame pattern '" + pattern + "' must contain exactly one %d field");
  }
  std::size_t i = pct + 1;
  bool zero = false;
  int width = 0;
  if (i < pattern.size() && pattern[i] == '0') {
    zero = true;
    ++i;
  }
  while (i < pattern.size() && pattern[i] >= '0' && pattern[i] <= '9') width = width * 10 + (pattern[i++] - '0');
  if (i >= pattern.size() || pattern[i] != 'd' || width > 32) {
    throw ValidationError("frame pattern '" + pattern + "' must use %d or %0Nd");
  }
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), zero ? '0' : ' ');
  return pattern.substr(0, pct) + digits + pattern.substr(i + 1);
}

void CaptureDataset::validate() const {
  calib.validate();
  if (!(frame_rate > 0.0)) throw ValidationError("dataset: frame rate must be positive");
  const std::size_t n = frame_count();
  if (n == 0) throw ValidationError("dataset: no frames");
  if (initial.space != Space::Local) throw ValidationError("dataset: initial poses must be local");
  if (heatmaps.size() != n) {
    throw ValidationError("dataset: " + std::to_string(heatmaps.size()) + " heatmap stacks for " + std::to_string(n) +
                          " frames");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!initial[i].allFinite()) throw ValidationError("dataset: non-finite initial pose in frame " + std::to_string(i));
    const auto& hm = heatmaps[i];
    if (std::abs(hm.width() * hm.stride - calib.image_size.x()) > 1e-6 * calib.image_size.x() ||
        std::abs(hm.height() * hm.stride - calib.image_size.y()) > 1e-6 * calib.image_size.y()) {
      throw ValidationError("dataset: heatmaps of frame " + std::to_string(i) + " do not cover the calibrated image");
    }
  }
  if (trajectory.poses.empty()) throw ValidationError("dataset: empty trajectory");
  if (reference_trajectory && reference_trajectory->poses.size() != trajectory.poses.size()) {
    throw ValidationError("dataset: reference trajectory has " + std::to_string(reference_trajectory->poses.size()) +
                          " poses, trajectory " + std::to_string(trajectory.poses.size()));
  }
}

void write_poses(const fs::path& path, const PoseSeq& seq) {
  std::vector<float> data;
  data.reserve(seq.length() * kPoseChannels);
  for (const auto& f : seq.frames) {
    for (Eigen::Index k = 0; k < kPoseChannels; ++k) data.push_back(static_cast<float>(f.data()[k]));
  }
  write_f32_file(path, data);
}

PoseSeq read_poses(const fs::path& path, std::size_t frame_count, Space space) {
  const auto data = read_f32_file(path, frame_count * kPoseChannels);
  PoseSeq seq(zero_frames(frame_count), space);
  for (std::size_t i = 0; i < frame_count; ++i) {
    for (Eigen::Index k = 0; k < kPoseChannels; ++k) {
      const float v = data[i * kPoseChannels + static_cast<std::size_t>(k)];
      if (!std::isfinite(v)) {
        throw ValidationError(path.string() + ": non-finite coordinate in frame " + std::to_string(i));
      }
      seq[i].data()[k] = v;
    }
  }
  return seq;
}

std::size_t pose_file_frames(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  const std::size_t frame_bytes = sizeof(float) * kPoseChannels;
  if (size % frame_bytes != 0) {
    throw IoError(path.string() + ": size " + std::to_string(size) + " bytes is not a multiple of " +
                  std::to_string(frame_bytes) + " (one frame)");
  }
  return static_cast<std::size_t>(size / frame_bytes);
}

void write_pose_table(const fs::path& path, const PoseSeq& seq) {
  std::string out = "# frame";
  const auto& skel = default_skeleton();
  for (int j = 0; j < kNumJoints; ++j) {
    for (const char* axis : {"x", "y", "z"}) {
      out += ' ';
      out += skel.joint_names[static_cast<std::size_t>(j)];
      out += '.';
      out += axis;
    }
  }
  out += '\n';
  for (std::size_t i = 0; i < seq.length(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index k = 0; k < kPoseChannels; ++k) {
      out += ' ';
      out += format_double(seq[i].data()[k]);
    }
    out += '\n';
  }
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

CaptureDataset load_dataset(const fs::path& manifest) {
  const auto doc = KvDocument::load(manifest);
  check_version(doc);
  const fs::path base = manifest.parent_path();
  const std::size_t n = frame_count_of(doc);
  CaptureDataset d;
  d.frame_rate = doc.get_double("frame_rate");
  d.calib = load_calibration(resolve(base, doc.get_string("calibration")));
  d.initial = read_poses(resolve(base, doc.get_string("initial_poses")), n, Space::Local);

  const auto res = doc.get_doubles("heatmap_resolution", 2);
  if (res[0] < 2 || res[1] < 2 || res[0] != std::floor(res[0]) || res[1] != std::floor(res[1])) {
    throw ValidationError(doc.source() + ": heatmap_resolution must be two integers >= 2");
  }
  const int w = static_cast<int>(res[0]), h = static_cast<int>(res[1]);
  const double stride = doc.get_double("heatmap_stride");
  const fs::path hm_dir = resolve(base, doc.get_string("heatmap_dir"));
  const std::string pattern = doc.get_string("heatmap_pattern");
  d.heatmaps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path p = hm_dir / format_frame_pattern(pattern, static_cast<long long>(i));
    if (!fs::exists(p)) throw IoError("heatmap blob for frame " + std::to_string(i) + " is missing: " + p.string());
    d.heatmaps.push_back(read_heatmap_blob(p, w, h, stride));
    d.heatmaps.back().validate();
  }

  d.trajectory = load_trajectory(resolve(base, doc.get_string("trajectory")));
  for (const auto& msg : d.trajectory.warnings) d.warnings.push_back(msg);
  if (doc.contains("reference_trajectory")) {
    d.reference_trajectory = load_trajectory(resolve(base, doc.get_string("reference_trajectory")));
    for (const auto& msg : d.reference_trajectory->warnings) d.warnings.push_back(msg);
  }
  d.validate();
  return d;
}

void write_dataset(const CaptureDataset& data, const fs::path& dir) {
  data.validate();
  std::error_code ec;
  fs::create_directories(dir / "heatmaps", ec);
  if (ec) throw IoError("cannot create " + (dir / "heatmaps").string() + ": " + ec.message());
  const std::string pattern = "frame_%06d.bin";
  save_calibration(data.calib, dir / "calibration.txt");
  write_poses(dir / "initial_poses.bin", data.initial);
  for (std::size_t i = 0; i < data.frame_count(); ++i) {
    write_heatmap_blob(dir / "heatmaps" / format_frame_pattern(pattern, static_cast<long long>(i)), data.heatmaps[i]);
  }
  save_trajectory(data.trajectory, dir / "trajectory.txt");
  KvDocument doc;
  doc.set("format_version", kManifestVersion);
  doc.set("frame_count", static_cast<long long>(data.frame_count()));
  doc.set("frame_rate", data.frame_rate);
  doc.set("calibration", "calibration.txt");
  doc.set("heatmap_dir", "heatmaps");
  doc.set("heatmap_pattern", pattern);
  const std::array<double, 2> res{static_cast<double>(data.heatmaps[0].width()),
                                  static_cast<double>(data.heatmaps[0].height())};
  doc.set("heatmap_resolution", std::span<const double>(res));
  doc.set("heatmap_stride", data.heatmaps[0].stride);
  doc.set("initial_poses", "initial_poses.bin");
  doc.set("trajectory", "trajectory.txt");
  if (data.reference_trajectory) {
    save_trajectory(*data.reference_trajectory, dir / "reference_trajectory.txt");
    doc.set("reference_trajectory", "reference_trajectory.txt");
  }
  doc.save(dir / kManifestName);
}

EvalData load_eval(const fs::path& manifest) {
  const auto doc = KvDocument::load(manifest);
  check_version(doc);
  const fs::path base = manifest.parent_path();
  const std::size_t n = frame_count_of(doc);
  EvalData e;
  e.gt_world = read_poses(resolve(base, doc.get_string("gt_world")), n, Space::World);
  e.gt_local = read_poses(resolve(base, doc.get_string("gt_local")), n, Space::Local);
  const auto stance = read_u8_file(resolve(base, doc.get_string("stance")), n * 2);
  const auto occ = read_u8_file(resolve(base, doc.get_string("occlusion")), n * kNumJoints);
  e.stance.resize(n);
  e.occluded.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.stance[i] = {stance[2 * i] != 0, stance[2 * i + 1] != 0};
    for (std::size_t j = 0; j < kNumJoints; ++j) e.occluded[i][j] = occ[i * kNumJoints + j] != 0;
  }
  const auto bones = doc.get_doubles("standard_bone_lengths", kNumBones);
  for (int k = 0; k < kNumBones; ++k) {
    if (!(bones[static_cast<std::size_t>(k)] > 0.0)) throw ValidationError(doc.source() + ": standard bone lengths must be positive");
    e.standard_bones[k] = bones[static_cast<std::size_t>(k)];
  }
  return e;
}

void write_eval(const EvalData& eval, const fs::path& dir) {
  const std::size_t n = eval.frame_count();
  if (eval.gt_local.length() != n || eval.stance.size() != n || eval.occluded.size() != n) {
    throw ValidationError("write_eval: streams disagree on frame count");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_poses(dir / "gt_world.bin", eval.gt_world);
  write_poses(dir / "gt_local.bin", eval.gt_local);
  std::vector<std::uint8_t> stance(n * 2), occ(n * kNumJoints);
  for (std::size_t i = 0; i < n; ++i) {
    stance[2 * i] = eval.stance[i][0] ? 1 : 0;
    stance[2 * i + 1] = eval.stance[i][1] ? 1 : 0;
    for (std::size_t j = 0; j < kNumJoints; ++j) occ[i * kNumJoints + j] = eval.occluded[i][j] ? 1 : 0;
  }
  write_u8_file(dir / "stance.bin", stance);
  write_u8_file(dir / "occlusion.bin", occ);
  KvDocument doc;
  doc.set("format_version", kManifestVersion);
  doc.set("frame_count", static_cast<long long>(n));
  doc.set("gt_world", "gt_world.bin");
  doc.set("gt_local", "gt_local.bin");
  doc.set("stance", "stance.bin");
  doc.set("occlusion", "occlusion.bin");
  doc.set("standard_bone_lengths", std::span<const double>(eval.standard_bones.data(), kNumBones));
  doc.save(dir / kEvalName);
}

}  // namespace egopose
