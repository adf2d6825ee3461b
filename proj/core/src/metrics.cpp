#include "egopose/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "egopose/errors.hpp"
#include "egopose/kv_document.hpp"

namespace egopose {

namespace {

void check_lengths(const PoseSeq& pred, const PoseSeq& gt, const char* what) {
  if (pred.length() != gt.length()) {
    throw ValidationError(std::string(what) + ": prediction has " + std::to_string(pred.length()) +
                          " frames, ground truth " + std::to_string(gt.length()));
  }
  if (gt.length() == 0) throw ValidationError(std::string(what) + ": empty sequences");
}

double mean_distance(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  return (a - b).colwise().norm().mean();
}

Eigen::Matrix3Xd apply(const RigidTransform& T, const Eigen::Matrix3Xd& pts) {
  return (T.R * pts).colwise() + T.t;
}

}  // namespace

RigidTransform procrustes_rigid(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target) {
  if (source.cols() != target.cols() || source.cols() < 3) {
    throw ValidationError("procrustes: need matching sets of at least 3 points");
  }
  if (!source.allFinite() || !target.allFinite()) throw ValidationError("procrustes: non-finite coordinates");
  const Eigen::Matrix3Xd sc = source.colwise() - source.rowwise().mean();
  const Eigen::Matrix3Xd tc = target.colwise() - target.rowwise().mean();
  const Eigen::Matrix3d cov = tc * sc.transpose();
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(cov).singularValues();
  if (!(sv[1] > 1e-12 * std::max(sv[0], 1e-300))) {
    throw NumericalError("procrustes: degenerate configuration (cross-covariance rank < 2)");
  }
  const Eigen::Matrix4d M = Eigen::umeyama(source, target, false);
  return {M.topLeftCorner<3, 3>(), M.topRightCorner<3, 1>()};
}

RigidTransform procrustes_rigid(const Pose& source, const Pose& target) {
  return procrustes_rigid(Eigen::Matrix3Xd(source), Eigen::Matrix3Xd(target));
}

double mpjpe(const PoseSeq& pred, const PoseSeq& gt) {
  check_lengths(pred, gt, "mpjpe");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.length(); ++i) sum += (pred[i] - gt[i]).colwise().norm().mean();
  return 1000.0 * sum / static_cast<double>(gt.length());
}

std::vector<Eigen::Matrix<double, kNumJoints, 1>> pa_joint_errors(const PoseSeq& pred, const PoseSeq& gt) {
  check_lengths(pred, gt, "pa_joint_errors");
  std::vector<Eigen::Matrix<double, kNumJoints, 1>> out(gt.length());
  for (std::size_t i = 0; i < gt.length(); ++i) {
    const RigidTransform T = procrustes_rigid(pred[i], gt[i]);
    out[i] = 1000.0 * (transform_pose(pred[i], T) - gt[i]).colwise().norm().transpose();
  }
  return out;
}

double pa_mpjpe(const PoseSeq& pred, const PoseSeq& gt) {
  const auto errs = pa_joint_errors(pred, gt);
  double sum = 0.0;
  for (const auto& e : errs) sum += e.mean();
  return sum / static_cast<double>(errs.size());
}

bool retarget(const Pose& pose, const BoneLengths& standard, Pose& out, const Skeleton& skel) {
  out.col(skel.root_index) = pose.col(skel.root_index);
  // Bones are listed parent-before-child, so parents are placed first.
  for (int k = 0; k < kNumBones; ++k) {
    const auto [parent, child] = skel.bones[static_cast<std::size_t>(k)];
    const Eigen::Vector3d d = pose.col(child) - pose.col(parent);
    const double len = d.norm();
    if (!(len >= kZeroBoneLength)) return false;
    out.col(child) = out.col(parent) + standard[k] * d / len;
  }
  return true;
}

double ba_mpjpe(const PoseSeq& pred, const PoseSeq& gt, const BoneLengths& standard, std::vector<int>* excluded,
                const Skeleton& skel) {
  check_lengths(pred, gt, "ba_mpjpe");
  if (excluded) excluded->clear();
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < gt.length(); ++i) {
    Pose a, b;
    if (!retarget(pred[i], standard, a, skel) || !retarget(gt[i], standard, b, skel)) {
      if (excluded) excluded->push_back(static_cast<int>(i));
      continue;
    }
    const RigidTransform T = procrustes_rigid(a, b);
    sum += (transform_pose(a, T) - b).colwise().norm().mean();
    ++used;
  }
  if (used == 0) throw ValidationError("ba_mpjpe: every frame has a zero-length bone");
  return 1000.0 * sum / used;
}

double global_mpjpe(const PoseSeq& pred, const PoseSeq& gt, int batch) {
  check_lengths(pred, gt, "global_mpjpe");
  if (batch < 1) throw ValidationError("global_mpjpe: batch must be >= 1");
  double sum = 0.0;
  const std::size_t n = gt.length();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch), n - start);
    Eigen::Matrix3Xd a(3, static_cast<Eigen::Index>(count) * kNumJoints);
    Eigen::Matrix3Xd b(3, a.cols());
    for (std::size_t i = 0; i < count; ++i) {
      a.middleCols(static_cast<Eigen::Index>(i) * kNumJoints, kNumJoints) = pred[start + i];
      b.middleCols(static_cast<Eigen::Index>(i) * kNumJoints, kNumJoints) = gt[start + i];
    }
    const RigidTransform T = procrustes_rigid(a, b);
    sum += mean_distance(apply(T, a), b) * static_cast<double>(count);
  }
  return 1000.0 * sum / static_cast<double>(n);
}

double jitter(const PoseSeq& seq) {
  if (seq.length() < 3) throw ValidationError("jitter: needs at least 3 frames");
  double sum = 0.0;
  for (std::size_t i = 2; i < seq.length(); ++i) {
    sum += (seq[i] - 2.0 * seq[i - 1] + seq[i - 2]).colwise().norm().mean();
  }
  return 1000.0 * sum / static_cast<double>(seq.length() - 2);
}

double footskate_rate(const PoseSeq& seq, const StanceLabels& stance, double threshold_mm) {
  if (stance.size() != seq.length()) {
    throw ValidationError("footskate_rate: " + std::to_string(stance.size()) + " stance labels for " +
                          std::to_string(seq.length()) + " frames");
  }
  constexpr std::array<std::array<int, 2>, 2> kFeet{{{kRightAnkle, kRightToe}, {kLeftAnkle, kLeftToe}}};
  const double threshold = threshold_mm / 1000.0;
  long pairs = 0, skating = 0;
  for (std::size_t i = 1; i < seq.length(); ++i) {
    for (std::size_t f = 0; f < 2; ++f) {
      if (!stance[i - 1][f] || !stance[i][f]) continue;
      ++pairs;
      bool moved = false;
      for (int j : kFeet[f]) moved = moved || (seq[i].col(j) - seq[i - 1].col(j)).norm() > threshold;
      if (moved) ++skating;
    }
  }
  return pairs == 0 ? 0.0 : static_cast<double>(skating) / static_cast<double>(pairs);
}

MetricReport evaluate(const PoseSeq& pred, const PoseSeq& gt, const StanceLabels& stance, const BoneLengths& standard) {
  MetricReport r;
  r.pa_mpjpe = pa_mpjpe(pred, gt);
  std::vector<int> excluded;
  r.ba_mpjpe = ba_mpjpe(pred, gt, standard, &excluded);
  r.ba_excluded_frames = static_cast<int>(excluded.size());
  r.global_mpjpe = global_mpjpe(pred, gt);
  r.jitter = jitter(pred);
  r.footskate_rate = footskate_rate(pred, stance);
  return r;
}

void write_metric_report(const MetricReport& report, const std::filesystem::path& path) {
  KvDocument doc;
  doc.set("pa_mpjpe_mm", report.pa_mpjpe);
  doc.set("ba_mpjpe_mm", report.ba_mpjpe);
  doc.set("global_mpjpe_mm", report.global_mpjpe);
  doc.set("jitter_mm", report.jitter);
  doc.set("footskate_rate", report.footskate_rate);
  doc.set("ba_excluded_frames", report.ba_excluded_frames);
  doc.save(path);
}

MetricReport read_metric_report(const std::filesystem::path& path) {
  const auto doc = KvDocument::load(path);
  MetricReport r;
  r.pa_mpjpe = doc.get_double("pa_mpjpe_mm");
  r.ba_mpjpe = doc.get_double("ba_mpjpe_mm");
  r.global_mpjpe = doc.get_double("global_mpjpe_mm");
  r.jitter = doc.get_double("jitter_mm");
  r.footskate_rate = doc.get_double("footskate_rate");
  r.ba_excluded_frames = static_cast<int>(doc.get_int("ba_excluded_frames"));
  return r;
}

std::string metric_csv_header() {
  return "label,pa_mpjpe_mm,ba_mpjpe_mm,global_mpjpe_mm,jitter_mm,footskate_rate,ba_excluded_frames";
}

std::string metric_csv_row(const std::string& label, const MetricReport& r) {
  if (label.find_first_of(",\n\"") != std::string::npos) throw ValidationError("metric csv: label must not contain ',', '\"' or newlines");
  return label + "," + format_double(r.pa_mpjpe) + "," + format_double(r.ba_mpjpe) + "," + format_double(r.global_mpjpe) +
         "," + format_double(r.jitter) + "," + format_double(r.footskate_rate) + "," + std::to_string(r.ba_excluded_frames);
}

std::vector<std::pair<std::string, MetricReport>> read_metric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metric_csv_header()) {
    throw ValidationError(path.string() + ": missing or unexpected CSV header");
  }
  std::vector<std::pair<std::string, MetricReport>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 7) throw ValidationError(ctx + ": expected 7 fields");
    MetricReport r;
    r.pa_mpjpe = parse_double(fields[1], ctx);
    r.ba_mpjpe = parse_double(fields[2], ctx);
    r.global_mpjpe = parse_double(fields[3], ctx);
    r.jitter = parse_double(fields[4], ctx);
    r.footskate_rate = parse_double(fields[5], ctx);
    r.ba_excluded_frames = static_cast<int>(parse_int(fields[6], ctx));
    rows.emplace_back(fields[0], r);
  }
  return rows;
}

}  // namespace egopose
