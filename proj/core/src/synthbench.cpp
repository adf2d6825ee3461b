#include "egopose/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "egopose/errors.hpp"
#include "egopose/prior_vae.hpp"
#include "egopose/random.hpp"

namespace egopose {

std::string_view to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Walk: return "walk";
    case MotionKind::ArmWave: return "arm_wave";
    case MotionKind::Squat: return "squat";
    case MotionKind::Turn: return "turn";
  }
  return "walk";
}

MotionKind parse_motion_kind(std::string_view text) {
  for (MotionKind k : {MotionKind::Walk, MotionKind::ArmWave, MotionKind::Squat, MotionKind::Turn}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown motion kind '" + std::string(text) + "' (expected walk, arm_wave, squat or turn)");
}

BodyShape BodyShape::scaled(double s) const {
  BodyShape b = *this;
  for (double* v : {&b.shoulder_half_width, &b.shoulder_drop, &b.upper_arm, &b.forearm, &b.hip_half_width, &b.torso,
                    &b.thigh, &b.shin, &b.foot, &b.ankle_height}) {
    *v *= s;
  }
  return b;
}

BoneLengths BodyShape::bone_lengths() const {
  const double shoulder = std::hypot(shoulder_half_width, shoulder_drop);
  const double hip = std::hypot(hip_half_width, torso);
  BoneLengths L;
  // Bone order follows the child joint index.
  L << shoulder, upper_arm, forearm, shoulder, upper_arm, forearm, hip, thigh, shin, foot, hip, thigh, shin, foot;
  return L;
}

BoneLengths standard_bone_lengths() { return BodyShape{}.bone_lengths(); }

void CorruptionSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("corruption: ") + name + " must be in [0, 1]");
  };
  prob(outlier_probability, "outlier_probability");
  prob(occlusion_probability, "occlusion_probability");
  for (double v : {noise_sigma_mm, outlier_magnitude_mm, occlusion_offset_px, traj_rotation_deg, traj_translation_mm,
                   stance_jitter_mm}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("corruption: magnitudes must be finite and >= 0");
  }
  if (!(occlusion_mean_frames >= 1.0)) throw ValidationError("corruption: occlusion_mean_frames must be >= 1");
  if (!(heatmap_sigma_px > 0.0)) throw ValidationError("corruption: heatmap_sigma_px must be positive");
  if (!(slam_scale > 0.0)) throw ValidationError("corruption: slam_scale must be positive");
}

void MotionGenConfig::validate() const {
  if (frame_count < 1) throw ValidationError("motion: frame_count must be >= 1");
  if (!(frame_rate > 0.0)) throw ValidationError("motion: frame_rate must be positive");
  if (vocabulary.empty()) throw ValidationError("motion: empty vocabulary");
  if (!(body_scale_spread >= 0.0 && body_scale_spread < 0.5)) throw ValidationError("motion: body_scale_spread out of [0, 0.5)");
  if (heatmap_resolution < 2) throw ValidationError("motion: heatmap resolution must be >= 2");
  corruption.validate();
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Control {
  Eigen::Vector2d ground = Eigen::Vector2d::Zero();  // hip center over the floor
  double yaw = 0.0;
  double phase = 0.0;  // gait cycles
  double period = 40.0;
  bool locomotion = false;
  double gait = 0.0;  // 0..1 walking intensity
  double lift = 0.06;
  double swing_amp = 0.35;
  double drop = 0.0;  // squat depth, meters
  double squat = 0.0;  // 0..1
  double wave = 0.0;   // 0..1
  int wave_side = 1;   // +1 right, -1 left
  double wave_angle = 0.0;
  MotionKind kind = MotionKind::Walk;
};

Eigen::Vector3d forward(double yaw) { return {-std::sin(yaw), std::cos(yaw), 0.0}; }
Eigen::Vector3d right(double yaw) { return {std::cos(yaw), std::sin(yaw), 0.0}; }

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }
double cosine_ramp(double u) { return 0.5 - 0.5 * std::cos(kPi * std::clamp(u, 0.0, 1.0)); }

double edge_weight(int k, int duration, int edge) {
  const double e = static_cast<double>(edge);
  return std::min(cosine_ramp(k / e), cosine_ramp((duration - 1 - k) / e));
}

std::vector<Control> plan_clips(const MotionGenConfig& cfg, Rng& rng) {
  const int n = cfg.frame_count;
  const double fps = cfg.frame_rate;
  std::vector<Control> ctrl(static_cast<std::size_t>(n));
  Eigen::Vector2d g(uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0));
  double yaw = uniform(rng, -kPi, kPi);
  double phase = 0.0;
  int t = 0;
  while (t < n) {
    const MotionKind kind = cfg.vocabulary[uniform_index(rng, cfg.vocabulary.size())];
    Control base;
    base.kind = kind;
    switch (kind) {
      case MotionKind::Walk:
      case MotionKind::Turn: {
        const bool walk = kind == MotionKind::Walk;
        const int period = 32 + static_cast<int>(uniform_index(rng, 11));
        const int cycles = walk ? 2 + static_cast<int>(uniform_index(rng, 3)) : 1 + static_cast<int>(uniform_index(rng, 2));
        const int duration = cycles * period;
        const double speed = walk ? uniform(rng, 0.5, 0.8) : 0.0;
        const double yaw_rate = walk ? uniform(rng, -0.25, 0.25) : 0.0;
        const double turn = walk ? 0.0 : (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.6, 2.0);
        double turn_norm = 0.0;
        for (int k = 0; k < duration; ++k) turn_norm += std::pow(std::sin(kPi * (k + 0.5) / duration), 2);
        for (int k = 0; k < duration && t < n; ++k, ++t) {
          const double c = static_cast<double>(k) / period;
          const double s = std::min(cosine_ramp(c), cosine_ramp(cycles - c));
          Control& ct = ctrl[static_cast<std::size_t>(t)];
          ct = base;
          ct.ground = g;
          ct.yaw = yaw;
          ct.phase = phase + c;
          ct.period = period;
          ct.locomotion = true;
          ct.gait = walk ? s : 0.3 * s;
          ct.lift = walk ? 0.06 : 0.04;
          ct.swing_amp = walk ? 0.35 : 0.1;
          g += (speed * s / fps) * forward(yaw).head<2>();
          yaw += walk ? yaw_rate * s / fps : turn * std::pow(std::sin(kPi * (k + 0.5) / duration), 2) / turn_norm;
        }
        phase += cycles;
        break;
      }
      case MotionKind::ArmWave: {
        const int duration = 60 + static_cast<int>(uniform_index(rng, 61));
        const int side = uniform01(rng) < 0.5 ? 1 : -1;
        const double freq = uniform(rng, 1.0, 2.0);
        for (int k = 0; k < duration && t < n; ++k, ++t) {
          Control& ct = ctrl[static_cast<std::size_t>(t)];
          ct = base;
          ct.ground = g;
          ct.yaw = yaw;
          ct.phase = phase;
          ct.wave = edge_weight(k, duration, 15);
          ct.wave_side = side;
          ct.wave_angle = 2.0 * kPi * freq * k / fps;
        }
        break;
      }
      case MotionKind::Squat: {
        const int duration = 60 + static_cast<int>(uniform_index(rng, 61));
        const int reps = 1 + static_cast<int>(uniform_index(rng, 2));
        const double depth = uniform(rng, 0.12, 0.32);
        for (int k = 0; k < duration && t < n; ++k, ++t) {
          Control& ct = ctrl[static_cast<std::size_t>(t)];
          ct = base;
          ct.ground = g;
          ct.yaw = yaw;
          ct.phase = phase;
          const double u = 0.5 - 0.5 * std::cos(2.0 * kPi * reps * k / duration);
          ct.drop = depth * u;
          ct.squat = u;
        }
        break;
      }
    }
  }
  return ctrl;
}

bool in_stance(const Control& c, int foot) {
  if (!c.locomotion) return true;
  const double frac = c.phase - std::floor(c.phase);
  return foot == 0 ? frac < 0.6 : (frac >= 0.5 || frac < 0.1);
}

struct FootPose {
  Eigen::Vector3d ankle;
  double yaw;
};

Eigen::Vector3d toe_of(const FootPose& f, const BodyShape& b) {
  const double h = std::sqrt(b.foot * b.foot - b.ankle_height * b.ankle_height);
  return f.ankle + h * forward(f.yaw) - Eigen::Vector3d(0.0, 0.0, b.ankle_height);
}

FootPose plant_at(const std::vector<Control>& ctrl, int t, int foot, const BodyShape& b) {
  const auto& c = ctrl[static_cast<std::size_t>(std::clamp<int>(t, 0, static_cast<int>(ctrl.size()) - 1))];
  const double side = foot == 0 ? 1.0 : -1.0;
  FootPose f;
  f.ankle = Eigen::Vector3d(c.ground.x(), c.ground.y(), b.ankle_height) + side * b.hip_half_width * right(c.yaw);
  f.yaw = c.yaw;
  return f;
}

double lerp_angle(double a, double b, double u) {
  double d = std::remainder(b - a, 2.0 * kPi);
  return a + u * d;
}

// Upper-arm direction in the torso frame (x right, y forward, z up).
Eigen::Vector3d arm_direction(double side, double abduction, double flexion) {
  return {side * std::sin(abduction), std::sin(flexion) * std::cos(abduction), -std::cos(flexion) * std::cos(abduction)};
}

Eigen::Vector3d bend(const Eigen::Vector3d& d, const Eigen::Vector3d& reference, double angle) {
  Eigen::Vector3d n = reference - reference.dot(d) * d;
  if (n.norm() < 1e-6) n = Eigen::Vector3d(0, 0, 1) - d.z() * d;
  n.normalize();
  return std::cos(angle) * d + std::sin(angle) * n;
}

Eigen::Vector3d knee_ik(const Eigen::Vector3d& hip, const Eigen::Vector3d& ankle, double a, double b,
                        const Eigen::Vector3d& pole) {
  const Eigen::Vector3d D = ankle - hip;
  const double d = D.norm();
  if (d > a + b || d < std::abs(a - b)) throw std::logic_error("synthbench: leg target out of reach");
  const Eigen::Vector3d u = D / d;
  Eigen::Vector3d p = pole - pole.dot(u) * u;
  p.normalize();
  const double ca = std::clamp((a * a + d * d - b * b) / (2.0 * a * d), -1.0, 1.0);
  return hip + a * (ca * u + std::sqrt(1.0 - ca * ca) * p);
}

Eigen::Matrix3d torso_rotation(double yaw, double lean) {
  // Lean tips the torso's up axis toward its forward axis.
  Eigen::Matrix3d rx;
  rx << 1, 0, 0, 0, std::cos(lean), std::sin(lean), 0, -std::sin(lean), std::cos(lean);
  return rotation_about_z(yaw) * rx;
}

}  // namespace

GeneratedMotion generate_motion(const MotionGenConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, "motion");
  GeneratedMotion out;
  out.frame_rate = config.frame_rate;
  out.body = BodyShape{}.scaled(1.0 + uniform(rng, -config.body_scale_spread, config.body_scale_spread));
  const BodyShape& b = out.body;
  const auto ctrl = plan_clips(config, rng);
  const int n = config.frame_count;
  const std::size_t un = static_cast<std::size_t>(n);

  out.stance.resize(un);
  for (std::size_t t = 0; t < un; ++t) out.stance[t] = {in_stance(ctrl[t], 0), in_stance(ctrl[t], 1)};

  // Feet: planted during stance, smooth arcs between plants during swing.
  std::array<std::vector<FootPose>, 2> feet;
  for (int f = 0; f < 2; ++f) {
    auto& track = feet[static_cast<std::size_t>(f)];
    track.resize(un);
    FootPose plant = plant_at(ctrl, 0, f, b);
    FootPose from = plant, target = plant;
    int lift_off = 0, land = n;
    for (int t = 0; t < n; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      if (out.stance[ut][static_cast<std::size_t>(f)]) {
        if (t > 0 && !out.stance[ut - 1][static_cast<std::size_t>(f)]) plant = target;
        track[ut] = plant;
        continue;
      }
      if (t == 0 || out.stance[ut - 1][static_cast<std::size_t>(f)]) {
        from = plant;
        lift_off = t - 1;
        land = t + 1;
        while (land < n && !out.stance[static_cast<std::size_t>(land)][static_cast<std::size_t>(f)]) ++land;
        target = plant_at(ctrl, land + static_cast<int>(std::lround(0.3 * ctrl[ut].period)), f, b);
      }
      const double u = static_cast<double>(t - lift_off) / static_cast<double>(land - lift_off);
      const double w = smoothstep(u);
      FootPose p;
      p.ankle = (1.0 - w) * from.ankle + w * target.ankle;
      p.ankle.z() += ctrl[ut].lift * std::sin(kPi * u);
      p.yaw = lerp_angle(from.yaw, target.yaw, w);
      track[ut] = p;
    }
  }

  const double leg = b.thigh + b.shin;
  const double reach = 0.995 * leg;
  out.world = PoseSeq(zero_frames(un), Space::World);
  out.camera.resize(un);
  out.kind.resize(un);
  const double pitch = config.rig.pitch_deg * kPi / 180.0;
  for (std::size_t t = 0; t < un; ++t) {
    const Control& c = ctrl[t];
    out.kind[t] = c.kind;
    const double lean = 0.05 * c.gait + 1.2 * c.drop;
    const Eigen::Matrix3d Rt = torso_rotation(c.yaw, lean);
    const Eigen::Vector3d fwd = forward(c.yaw);
    const double frac = c.phase - std::floor(c.phase);
    const double bob = 0.02 * c.gait * (0.5 - 0.5 * std::cos(4.0 * kPi * frac));
    double z = b.ankle_height + 0.96 * leg - 0.06 * leg * c.gait - bob - c.drop;
    Eigen::Vector3d hipc(c.ground.x(), c.ground.y(), 0.0);
    hipc -= 0.5 * c.drop * fwd;
    std::array<Eigen::Vector3d, 2> hips{hipc + Rt * Eigen::Vector3d(b.hip_half_width, 0, 0),
                                        hipc + Rt * Eigen::Vector3d(-b.hip_half_width, 0, 0)};
    for (int f = 0; f < 2; ++f) {
      const Eigen::Vector3d& ankle = feet[static_cast<std::size_t>(f)][t].ankle;
      const double horiz = (ankle - hips[static_cast<std::size_t>(f)]).head<2>().norm();
      if (horiz >= reach) throw std::logic_error("synthbench: foot plant beyond leg reach");
      z = std::min(z, ankle.z() + std::sqrt(reach * reach - horiz * horiz));
    }
    hipc.z() = z;
    for (auto& h : hips) h.z() = z;

    Pose& P = out.world[t];
    const Eigen::Vector3d neck = hipc + Rt * Eigen::Vector3d(0, 0, b.torso);
    P.col(kNeck) = neck;
    P.col(kRightHip) = neck + Rt * Eigen::Vector3d(b.hip_half_width, 0, -b.torso);
    P.col(kLeftHip) = neck + Rt * Eigen::Vector3d(-b.hip_half_width, 0, -b.torso);

    for (int side_i = 0; side_i < 2; ++side_i) {
      const double side = side_i == 0 ? 1.0 : -1.0;
      const double swing = -side * c.swing_amp * c.gait * std::cos(2.0 * kPi * frac);
      double abduction = 0.12, flexion = swing, elbow = 0.25 + 0.3 * std::max(0.0, swing);
      Eigen::Vector3d reference(0, 1, 0);
      if (c.squat > 0.0) {
        flexion = (1.0 - c.squat) * flexion + c.squat * 1.4;
        elbow = (1.0 - c.squat) * elbow + c.squat * 0.2;
      }
      if (c.wave > 0.0 && static_cast<int>(side) == c.wave_side) {
        const double w = c.wave;
        abduction = (1.0 - w) * abduction + w * 2.3;
        flexion = (1.0 - w) * flexion + w * 0.3;
        elbow = (1.0 - w) * elbow + w * (0.9 + 0.5 * std::sin(c.wave_angle));
        reference = ((1.0 - w) * Eigen::Vector3d(0, 1, 0) + w * Eigen::Vector3d(0, 0, 1)).normalized();
      }
      const Eigen::Vector3d upper = arm_direction(side, abduction, flexion);
      const Eigen::Vector3d fore = bend(upper, reference, elbow);
      const int sh = side_i == 0 ? kRightShoulder : kLeftShoulder;
      P.col(sh) = neck + Rt * Eigen::Vector3d(side * b.shoulder_half_width, 0, -b.shoulder_drop);
      P.col(sh + 1) = P.col(sh) + b.upper_arm * (Rt * upper);
      P.col(sh + 2) = P.col(sh + 1) + b.forearm * (Rt * fore);
    }

    for (int f = 0; f < 2; ++f) {
      const FootPose& fp = feet[static_cast<std::size_t>(f)][t];
      const int hip = f == 0 ? kRightHip : kLeftHip;
      P.col(hip + 2) = fp.ankle;
      P.col(hip + 3) = toe_of(fp, b);
      P.col(hip + 1) = knee_ik(P.col(hip), fp.ankle, b.thigh, b.shin, fwd);
    }

    // Camera axes: x body right, y down, z forward, then pitched down.
    const Eigen::Vector3d cx = Rt.col(0);
    const Eigen::Vector3d cy = -Rt.col(2);
    const Eigen::Vector3d cz = Rt.col(1);
    Eigen::Matrix3d head;
    head << cx, cy, cz;
    RigidTransform cam;
    cam.R.col(0) = cx;
    cam.R.col(1) = std::cos(pitch) * cy - std::sin(pitch) * cz;
    cam.R.col(2) = std::cos(pitch) * cz + std::sin(pitch) * cy;
    cam.t = neck + head * config.rig.offset;
    out.camera[t] = cam;
  }
  return out;
}

PoseSeq to_camera_frame(const PoseSeq& world, std::span<const RigidTransform> camera) {
  if (camera.size() != world.length()) throw ValidationError("to_camera_frame: one camera pose per frame required");
  PoseSeq out(zero_frames(world.length()), Space::Local);
  for (std::size_t i = 0; i < world.length(); ++i) out[i] = transform_pose(world[i], camera[i].inverse());
  return out;
}

namespace {

Eigen::Vector3d random_unit(Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

SyntheticCapture derive_observations(const GeneratedMotion& motion, const FisheyeCalib& calib,
                                     const CorruptionSpec& corruption, std::uint64_t seed, int heatmap_resolution) {
  corruption.validate();
  calib.validate();
  const std::size_t n = motion.world.length();
  if (motion.camera.size() != n || motion.stance.size() != n) throw ValidationError("derive_observations: stream lengths differ");
  if (heatmap_resolution < 2) throw ValidationError("derive_observations: heatmap resolution must be >= 2");

  SyntheticCapture cap;
  EvalData& ev = cap.eval;
  ev.gt_world = motion.world;
  ev.gt_local = to_camera_frame(motion.world, motion.camera);
  ev.stance = motion.stance;
  ev.standard_bones = standard_bone_lengths();

  // Footskate injection acts on what the estimator sees, not on the truth.
  PoseSeq observed = motion.world;
  if (corruption.stance_jitter_mm > 0.0) {
    Rng rng = make_rng(seed, "obs-stance-jitter");
    const double j = corruption.stance_jitter_mm / 1000.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int f = 0; f < 2; ++f) {
        if (!motion.stance[i][static_cast<std::size_t>(f)]) continue;
        for (int joint : {f == 0 ? kRightAnkle : kLeftAnkle, f == 0 ? kRightToe : kLeftToe}) {
          for (int a = 0; a < 3; ++a) observed[i](a, joint) += uniform(rng, -j, j);
        }
      }
    }
  }

  CaptureDataset& ds = cap.dataset;
  ds.frame_rate = motion.frame_rate;
  ds.calib = calib;
  ds.initial = to_camera_frame(observed, motion.camera);
  {
    Rng noise = make_rng(seed, "obs-noise");
    Rng outl = make_rng(seed, "obs-outlier");
    const double s = corruption.noise_sigma_mm / 1000.0 / std::sqrt(3.0);
    const double m = corruption.outlier_magnitude_mm / 1000.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < kNumJoints; ++j) {
        Eigen::Vector3d d(standard_normal(noise), standard_normal(noise), standard_normal(noise));
        ds.initial[i].col(j) += s * d;
        if (uniform01(outl) < corruption.outlier_probability) ds.initial[i].col(j) += m * random_unit(outl);
      }
    }
  }

  // Heatmaps from the true projections, with persistent occlusion episodes.
  const double stride = static_cast<double>(calib.image_size.x()) / heatmap_resolution;
  const int hm_h = static_cast<int>(std::lround(calib.image_size.y() / stride));
  ev.occluded.assign(n, {});
  ds.heatmaps.reserve(n);
  {
    Rng occ_rng = make_rng(seed, "obs-occlusion");
    const double p = corruption.occlusion_probability;
    const double start_p = p >= 1.0 ? 1.0 : std::min(1.0, p / (corruption.occlusion_mean_frames * (1.0 - p)));
    const double end_p = p >= 1.0 ? 0.0 : 1.0 / corruption.occlusion_mean_frames;
    std::array<bool, kNumJoints> active{};
    std::array<Eigen::Vector2d, kNumJoints> offset;
    offset.fill(Eigen::Vector2d::Zero());
    std::vector<Eigen::Vector2d> uv(kNumJoints);
    std::vector<JointOcclusion> occ(kNumJoints);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        if (active[j]) {
          if (uniform01(occ_rng) < end_p) active[j] = false;
        } else if (p > 0.0 && uniform01(occ_rng) < start_p) {
          active[j] = true;
          const double a = uniform(occ_rng, -kPi, kPi);
          offset[j] = corruption.occlusion_offset_px * Eigen::Vector2d(std::cos(a), std::sin(a));
        }
        const Eigen::Vector3d pj = ev.gt_local[i].col(static_cast<Eigen::Index>(j));
        uv[j] = project(pj, calib);
        occ[j] = {};
        occ[j].suppressed = !within_rho_range(pj, calib);
        occ[j].occluded = active[j];
        occ[j].spurious_offset = offset[j];
        ev.occluded[i][j] = active[j] || occ[j].suppressed;
      }
      ds.heatmaps.push_back(synth_heatmap(uv, corruption.heatmap_sigma_px, occ, heatmap_resolution, hm_h, stride));
    }
  }

  // Trajectory: true camera poses plus noise and a global scale error.
  std::vector<RigidTransform> noisy(motion.camera.begin(), motion.camera.end());
  {
    Rng rng = make_rng(seed, "obs-trajectory");
    const double rot = corruption.traj_rotation_deg * kPi / 180.0;
    const double tr = corruption.traj_translation_mm / 1000.0;
    for (auto& T : noisy) {
      const Eigen::Vector3d axis = random_unit(rng);
      const double angle = rot * standard_normal(rng);
      const Eigen::Vector3d dt(standard_normal(rng), standard_normal(rng), standard_normal(rng));
      T.R = T.R * Eigen::AngleAxisd(angle, axis).toRotationMatrix();
      T.t = corruption.slam_scale * T.t + tr * dt;
    }
  }
  ds.trajectory = trajectory_from_transforms(noisy, motion.frame_rate);
  ds.reference_trajectory = trajectory_from_transforms(motion.camera, motion.frame_rate);
  return cap;
}

SyntheticCapture make_capture(const MotionGenConfig& config, const FisheyeCalib& calib) {
  const auto motion = generate_motion(config);
  return derive_observations(motion, calib, config.corruption, derive_seed(config.seed, "observations"),
                             config.heatmap_resolution);
}

std::vector<PoseSeq> build_prior_corpus(const MotionGenConfig& config, int count, Space space, int length) {
  if (count < 1) throw ValidationError("build_prior_corpus: count must be >= 1");
  if (length < 1 || length > config.frame_count) throw ValidationError("build_prior_corpus: segment length out of range");
  const int per_motion = std::max(1, config.frame_count / length);
  std::vector<PoseSeq> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t m = 0; static_cast<int>(corpus.size()) < count; ++m) {
    MotionGenConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "corpus-motion", m);
    const auto motion = generate_motion(cfg);
    const PoseSeq seq = space == Space::Local ? to_camera_frame(motion.world, motion.camera) : motion.world;
    Rng rng = make_rng(config.seed, "corpus-starts", m);
    std::vector<int> starts(static_cast<std::size_t>(config.frame_count - length + 1));
    std::iota(starts.begin(), starts.end(), 0);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(per_motion), starts.size());
    for (std::size_t k = 0; k < take && static_cast<int>(corpus.size()) < count; ++k) {
      std::swap(starts[k], starts[k + uniform_index(rng, starts.size() - k)]);
      PoseSeq seg = seq.slice(static_cast<std::size_t>(starts[k]), static_cast<std::size_t>(length));
      if (space == Space::World) seg = apply_transform(seg, canonicalizing_transform(seg[0]));
      seg.space = space;
      corpus.push_back(std::move(seg));
    }
  }
  return corpus;
}

}  // namespace egopose
