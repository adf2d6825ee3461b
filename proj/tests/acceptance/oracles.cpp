// Brute-force twins of library routines: loops over explicit index tables,
// a tent-kernel heatmap read, power-sum fisheye radii, and Horn's quaternion
// method where the library uses an SVD.
#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "egopose/energy.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/metrics.hpp"
#include "egopose/random.hpp"
#include "egopose/trajectory.hpp"

namespace egopose::acceptance {
namespace {

constexpr std::array<int, kNumJoints> kParent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 0, 11, 12, 13};
constexpr double kExact = 1e-9;
constexpr double kTrig = 1e-6;

double dev(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

Pose random_pose(Rng& rng, double extent) {
  Pose p;
  for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = uniform(rng, -extent, extent);
  return p;
}

PoseSeq random_seq(Rng& rng, int frames, Space space, double extent = 1.0) {
  PoseSeq s(PoseFrames(static_cast<std::size_t>(frames)), space);
  for (auto& f : s.frames) f = random_pose(rng, extent);
  return s;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  return Eigen::Quaterniond(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng))
      .normalized()
      .toRotationMatrix();
}

// ---------------------------------------------------------------- heatmaps

double tent_sample(const HeatmapGrid& g, double u, double v, double stride) {
  const double cx = u / stride - 0.5, cy = v / stride - 0.5;
  if (cx < 0 || cy < 0 || cx > g.cols() - 1 || cy > g.rows() - 1) return 0.0;
  double acc = 0.0;
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      acc += std::max(0.0, 1.0 - std::abs(cx - c)) * std::max(0.0, 1.0 - std::abs(cy - r)) * g(r, c);
    }
  }
  return acc;
}

HeatmapGrid random_grid(Rng& rng, int rows, int cols) {
  HeatmapGrid g(rows, cols);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = static_cast<float>(uniform01(rng));
  return g;
}

// ---------------------------------------------------------------- geometry

std::array<double, kNumBones> bones_oracle(const Pose& p) {
  std::array<double, kNumBones> out{};
  for (int j = 1; j < kNumJoints; ++j) {
    double sq = 0.0;
    for (int k = 0; k < 3; ++k) sq += (p(k, j) - p(k, kParent[static_cast<std::size_t>(j)])) * (p(k, j) - p(k, kParent[static_cast<std::size_t>(j)]));
    out[static_cast<std::size_t>(j - 1)] = std::sqrt(sq);
  }
  return out;
}

std::array<double, 2> project_oracle(double x, double y, double z, const FisheyeCalib& calib) {
  const double r = std::sqrt(x * x + y * y);
  if (r < 1e-9) return {calib.center.x(), calib.center.y()};
  double rho = std::atan2(z, r);
  rho = std::min(std::max(rho, calib.rho_min), calib.rho_max);
  double f = 0.0;
  for (std::size_t i = 0; i < calib.coeffs.size(); ++i) f += calib.coeffs[i] * std::pow(rho, static_cast<double>(i));
  return {calib.center.x() + f * x / r, calib.center.y() + f * y / r};
}

// Point in front of the camera, off the axis, inside the calibrated range.
Eigen::Vector3d visible_point(Rng& rng, const FisheyeCalib& calib) {
  for (;;) {
    const Eigen::Vector3d p(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, 0.05, 1.5));
    if (std::hypot(p.x(), p.y()) > 0.02 && within_rho_range(p, calib)) return p;
  }
}

// Horn's closed form: the rotation is the top eigenvector of a 4x4 matrix.
Eigen::Matrix3d horn_rotation(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) S(r, c) += a(r, i) * b(c, i);
    }
  }
  const double xx = S(0, 0), xy = S(0, 1), xz = S(0, 2), yx = S(1, 0), yy = S(1, 1), yz = S(1, 2), zx = S(2, 0),
               zy = S(2, 1), zz = S(2, 2);
  Eigen::Matrix4d N;
  N << xx + yy + zz, yz - zy, zx - xz, xy - yx,  //
      yz - zy, xx - yy - zz, xy + yx, zx + xz,   //
      zx - xz, xy + yx, -xx + yy - zz, yz + zy,  //
      xy - yx, zx + xz, yz + zy, -xx - yy + zz;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(N);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

struct SimilarityOracle {
  double s;
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
};

SimilarityOracle horn_fit(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& dst, bool with_scale) {
  const Eigen::Vector3d ms = src.rowwise().mean(), md = dst.rowwise().mean();
  const Eigen::Matrix3Xd a = src.colwise() - ms, b = dst.colwise() - md;
  SimilarityOracle o{1.0, horn_rotation(a, b), {}};
  if (with_scale) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      num += b.col(i).dot(o.R * a.col(i));
      den += a.col(i).squaredNorm();
    }
    o.s = num / den;
  }
  o.t = md - o.s * o.R * ms;
  return o;
}

double mean_distance_loop(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double sq = 0.0;
    for (int k = 0; k < 3; ++k) sq += (a(k, j) - b(k, j)) * (a(k, j) - b(k, j));
    s += std::sqrt(sq);
  }
  return s / static_cast<double>(a.cols());
}

double aligned_distance(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt) {
  const SimilarityOracle o = horn_fit(pred, gt, false);
  return mean_distance_loop((o.R * pred).colwise() + o.t, gt);
}

Pose retarget_oracle(const Pose& in, const BoneLengths& L) {
  Pose out;
  out.col(0) = in.col(0);
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = kParent[static_cast<std::size_t>(j)];
    const Eigen::Vector3d d = in.col(j) - in.col(p);
    out.col(j) = out.col(p) + L[j - 1] * d / d.norm();
  }
  return out;
}

// ---------------------------------------------------------------- rows

OracleRow bilinear_row(std::uint64_t seed) {
  OracleRow row{"bilinear heatmap sampling", 0, 0.0, kExact};
  Rng rng = make_rng(seed, "oracle-bilinear");
  for (int g = 0; g < 40; ++g) {
    const HeatmapGrid grid = random_grid(rng, 6 + static_cast<int>(uniform_index(rng, 6)), 6 + static_cast<int>(uniform_index(rng, 6)));
    const double stride = uniform(rng, 4.0, 16.0);
    for (int k = 0; k < 50; ++k, ++row.instances) {
      const double u = uniform(rng, -stride, (grid.cols() + 1) * stride), v = uniform(rng, -stride, (grid.rows() + 1) * stride);
      row.max_deviation = std::max(row.max_deviation, dev(sample(grid, {u, v}, stride), tent_sample(grid, u, v, stride)));
    }
  }
  return row;
}

OracleRow bones_row(std::uint64_t seed) {
  OracleRow row{"bone lengths", 0, 0.0, kExact};
  Rng rng = make_rng(seed, "oracle-bones");
  for (int k = 0; k < 500; ++k, ++row.instances) {
    const Pose p = random_pose(rng, 2.0);
    const BoneLengths got = bone_lengths(p);
    const auto want = bones_oracle(p);
    for (int b = 0; b < kNumBones; ++b) row.max_deviation = std::max(row.max_deviation, dev(got[b], want[static_cast<std::size_t>(b)]));
  }
  return row;
}

OracleRow projection_row(std::uint64_t seed) {
  OracleRow row{"fisheye projection", 0, 0.0, kTrig};
  Rng rng = make_rng(seed, "oracle-project");
  const FisheyeCalib calib = synthetic_calibration();
  for (int k = 0; k < 2000; ++k, ++row.instances) {
    // Includes points beyond the calibrated range, where rho clamps.
    const Eigen::Vector3d p(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const Eigen::Vector2d got = project(p, calib);
    const auto want = project_oracle(p.x(), p.y(), p.z(), calib);
    row.max_deviation = std::max({row.max_deviation, dev(got.x(), want[0]), dev(got.y(), want[1])});
  }
  return row;
}

struct EnergyInstance {
  PoseSeq seq, init;
  std::vector<HeatmapStack> heatmaps;
  std::vector<Detections2d> detections;
  EnergyWeights weights;
};

EnergyInstance energy_instance(Rng& rng, const FisheyeCalib& calib) {
  const int frames = 3 + static_cast<int>(uniform_index(rng, 8));
  EnergyInstance e;
  e.seq = PoseSeq(PoseFrames(static_cast<std::size_t>(frames)), Space::Local);
  for (auto& f : e.seq.frames) {
    for (int j = 0; j < kNumJoints; ++j) f.col(j) = visible_point(rng, calib);
  }
  e.init = e.seq;
  for (auto& f : e.init.frames) f += random_pose(rng, 0.05);
  for (int i = 0; i < frames; ++i) {
    HeatmapStack hm = zero_heatmaps(64, 64, 10.0);
    for (auto& g : hm.grids) g = random_grid(rng, 64, 64);
    e.heatmaps.push_back(std::move(hm));
  }
  e.detections = argmax_detections(e.heatmaps);
  e.weights = {uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2)};
  return e;
}

struct OracleTerms {
  double reproj = 0, conventional = 0, pose = 0, smooth = 0, bone = 0;
};

OracleTerms terms_oracle(const EnergyInstance& e, const FisheyeCalib& calib) {
  OracleTerms t;
  const std::size_t n = e.seq.length();
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      const auto uv = project_oracle(e.seq[i](0, j), e.seq[i](1, j), e.seq[i](2, j), calib);
      const HeatmapGrid& g = e.heatmaps[i].grids[static_cast<std::size_t>(j)];
      const double h = tent_sample(g, uv[0], uv[1], e.heatmaps[i].stride);
      t.reproj -= h * h;
      // Argmax by a plain scan, first maximum in row-major order. Float grids this size do tie.
      int br = 0, bc = 0;
      for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < g.cols(); ++c) {
          if (g(r, c) > g(br, bc)) br = r, bc = c;
        }
      }
      if (g(br, bc) >= kMinDetectionConfidence) {
        const double du = uv[0] - (bc + 0.5) * e.heatmaps[i].stride, dv = uv[1] - (br + 0.5) * e.heatmaps[i].stride;
        t.conventional += du * du + dv * dv;
      }
      for (int k = 0; k < 3; ++k) t.pose += (e.seq[i](k, j) - e.init[i](k, j)) * (e.seq[i](k, j) - e.init[i](k, j));
    }
  }
  for (std::size_t i = 2; i < n; ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      for (int k = 0; k < 3; ++k) {
        const double a = e.seq[i](k, j) - 2 * e.seq[i - 1](k, j) + e.seq[i - 2](k, j);
        t.smooth += a * a;
      }
    }
  }
  std::vector<std::array<double, kNumBones>> L;
  for (const auto& f : e.seq.frames) L.push_back(bones_oracle(f));
  for (int b = 0; b < kNumBones; ++b) {
    double mean = 0.0;
    for (const auto& l : L) mean += l[static_cast<std::size_t>(b)];
    mean /= static_cast<double>(n);
    for (const auto& l : L) t.bone += (l[static_cast<std::size_t>(b)] - mean) * (l[static_cast<std::size_t>(b)] - mean);
  }
  return t;
}

OracleRow energy_row(std::uint64_t seed) {
  OracleRow row{"energy terms and objectives", 0, 0.0, kTrig};
  Rng rng = make_rng(seed, "oracle-energy");
  const FisheyeCalib calib = synthetic_calibration();
  for (int k = 0; k < 30; ++k, ++row.instances) {
    const EnergyInstance e = energy_instance(rng, calib);
    const OracleTerms t = terms_oracle(e, calib);
    const auto& w = e.weights;
    const EnergyBreakdown local = local_objective(e.seq, e.init, e.heatmaps, calib, w);
    const EnergyBreakdown conv = local_objective_conventional(e.seq, e.init, e.detections, calib, w);
    const EnergyBreakdown global = global_objective(e.seq, e.init, w);
    const double devs[] = {
        dev(e_reproj(e.seq, e.heatmaps, calib).value, t.reproj),
        dev(conventional_reproj(e.seq, e.detections, calib).value, t.conventional),
        dev(e_pose(e.seq, e.init).value, t.pose),
        dev(e_smooth(e.seq).value, t.smooth),
        dev(e_bone(e.seq).value, t.bone),
        dev(local.total, w.lambda_R * t.reproj + w.lambda_J * t.pose + w.lambda_T * t.smooth + w.lambda_B * t.bone),
        dev(conv.total, w.lambda_R * t.conventional + w.lambda_J * t.pose + w.lambda_T * t.smooth + w.lambda_B * t.bone),
        dev(global.total, w.lambda_J * t.pose + w.lambda_T * t.smooth + w.lambda_B * t.bone),
    };
    for (double d : devs) row.max_deviation = std::max(row.max_deviation, d);
  }
  return row;
}

OracleRow trajectory_row(std::uint64_t seed) {
  OracleRow row{"trajectory parsing", 0, 0.0, kExact};
  Rng rng = make_rng(seed, "oracle-trajectory");
  for (int k = 0; k < 50; ++k, ++row.instances) {
    std::string text = "# t tx ty tz qx qy qz qw\n";
    double t = uniform(rng, 0, 100);
    const int n = 5 + static_cast<int>(uniform_index(rng, 40));
    char buf[512];
    for (int i = 0; i < n; ++i) {
      t += uniform(rng, 1e-3, 0.1);
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g%s\n", t, uniform(rng, -50, 50),
                    uniform(rng, -50, 50), uniform(rng, -5, 5), standard_normal(rng), standard_normal(rng),
                    standard_normal(rng), standard_normal(rng), i % 3 == 0 ? "\r" : "");
      text += buf;
      if (i % 7 == 0) text += "\n   \n# comment\n";
    }
    const Trajectory got = parse_trajectory(text);
    // Oracle: strtod over whitespace-split lines.
    std::vector<std::array<double, 8>> want;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      std::istringstream fields(line);
      std::string first;
      if (!(fields >> first) || first[0] == '#') continue;
      std::array<double, 8> v{};
      v[0] = std::strtod(first.c_str(), nullptr);
      for (int c = 1; c < 8; ++c) {
        std::string tok;
        fields >> tok;
        v[static_cast<std::size_t>(c)] = std::strtod(tok.c_str(), nullptr);
      }
      want.push_back(v);
    }
    if (got.poses.size() != want.size()) {
      row.max_deviation = 1.0;
      continue;
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      const auto& w = want[i];
      const auto& p = got.poses[i];
      const double qn = std::sqrt(w[4] * w[4] + w[5] * w[5] + w[6] * w[6] + w[7] * w[7]);
      const double d[] = {dev(p.timestamp, w[0]),          dev(p.position.x(), w[1]),       dev(p.position.y(), w[2]),
                          dev(p.position.z(), w[3]),       dev(p.rotation.x(), w[4] / qn), dev(p.rotation.y(), w[5] / qn),
                          dev(p.rotation.z(), w[6] / qn), dev(p.rotation.w(), w[7] / qn)};
      for (double x : d) row.max_deviation = std::max(row.max_deviation, x);
    }
  }
  return row;
}

OracleRow similarity_row(std::uint64_t seed) {
  OracleRow row{"similarity alignment", 0, 0.0, kExact};
  Rng rng = make_rng(seed, "oracle-similarity");
  for (int k = 0; k < 300; ++k, ++row.instances) {
    const int n = 4 + static_cast<int>(uniform_index(rng, 60));
    Eigen::Matrix3Xd src(3, n);
    for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = uniform(rng, -3, 3);
    const double s = uniform(rng, 0.2, 5.0);
    const Eigen::Matrix3d R = random_rotation(rng);
    const Eigen::Vector3d t(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10));
    Eigen::Matrix3Xd dst = (s * R * src).colwise() + t;
    for (Eigen::Index i = 0; i < dst.size(); ++i) dst.data()[i] += uniform(rng, -0.2, 0.2);
    const Similarity got = fit_similarity(src, dst);
    const SimilarityOracle want = horn_fit(src, dst, true);
    row.max_deviation = std::max({row.max_deviation, dev(got.scale, want.s), (got.R - want.R).cwiseAbs().maxCoeff(),
                                  (got.t - want.t).cwiseAbs().maxCoeff() / std::max(1.0, want.t.norm())});
  }
  return row;
}

OracleRow metrics_row(std::uint64_t seed) {
  OracleRow row{"metrics (MPJPE, PA, BA, global, jitter, footskate)", 0, 0.0, kExact};
  Rng rng = make_rng(seed, "oracle-metrics");
  for (int k = 0; k < 20; ++k, ++row.instances) {
    const int n = 3 + static_cast<int>(uniform_index(rng, 250));
    const PoseSeq gt = random_seq(rng, n, Space::World, 1.0);
    PoseSeq pred = gt;
    const Eigen::Matrix3d R = random_rotation(rng);
    for (auto& f : pred.frames) f = (R * f + random_pose(rng, 0.1)).colwise() + Eigen::Vector3d(1, -2, 0.5);
    StanceLabels stance(static_cast<std::size_t>(n));
    for (auto& s : stance) s = {uniform01(rng) < 0.6, uniform01(rng) < 0.6};
    BoneLengths standard;
    for (int b = 0; b < kNumBones; ++b) standard[b] = uniform(rng, 0.1, 0.5);

    double mp = 0, pa = 0, ba = 0, jit = 0;
    for (int i = 0; i < n; ++i) {
      const auto fi = static_cast<std::size_t>(i);
      mp += mean_distance_loop(pred[fi], gt[fi]);
      pa += aligned_distance(pred[fi], gt[fi]);
      ba += aligned_distance(retarget_oracle(pred[fi], standard), retarget_oracle(gt[fi], standard));
      if (i >= 2) {
        Pose a = pred[fi] - 2.0 * pred[fi - 1] + pred[fi - 2];
        jit += mean_distance_loop(a, Pose::Zero());
      }
    }
    double glob = 0;
    for (int start = 0; start < n; start += 100) {
      const int count = std::min(100, n - start);
      Eigen::Matrix3Xd a(3, count * kNumJoints), b(3, count * kNumJoints);
      for (int i = 0; i < count; ++i) {
        a.middleCols(i * kNumJoints, kNumJoints) = pred[static_cast<std::size_t>(start + i)];
        b.middleCols(i * kNumJoints, kNumJoints) = gt[static_cast<std::size_t>(start + i)];
      }
      glob += aligned_distance(a, b) * count;
    }
    int pairs = 0, skating = 0;
    const int feet[2][2] = {{kRightAnkle, kRightToe}, {kLeftAnkle, kLeftToe}};
    for (int i = 1; i < n; ++i) {
      for (int f = 0; f < 2; ++f) {
        if (!stance[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] ||
            !stance[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(f)]) {
          continue;
        }
        ++pairs;
        bool moved = false;
        for (int j : feet[f]) {
          moved = moved || (pred[static_cast<std::size_t>(i)].col(j) - pred[static_cast<std::size_t>(i - 1)].col(j)).norm() > 0.02;
        }
        skating += moved ? 1 : 0;
      }
    }
    const double devs[] = {
        dev(mpjpe(pred, gt), 1000.0 * mp / n),
        dev(pa_mpjpe(pred, gt), 1000.0 * pa / n),
        dev(ba_mpjpe(pred, gt, standard), 1000.0 * ba / n),
        dev(global_mpjpe(pred, gt), 1000.0 * glob / n),
        dev(jitter(pred), 1000.0 * jit / (n - 2)),
        dev(footskate_rate(pred, stance), pairs == 0 ? 0.0 : static_cast<double>(skating) / pairs),
    };
    for (double d : devs) row.max_deviation = std::max(row.max_deviation, d);
  }
  return row;
}

}  // namespace

std::vector<OracleRow> run_oracles(std::uint64_t seed) {
  return {bilinear_row(seed),   bones_row(seed),      projection_row(seed), energy_row(seed),
          trajectory_row(seed), similarity_row(seed), metrics_row(seed)};
}

}  // namespace egopose::acceptance
