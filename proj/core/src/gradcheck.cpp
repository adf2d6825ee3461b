#include "egopose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "egopose/energy.hpp"
#include "egopose/errors.hpp"
#include "egopose/fisheye.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/prior_vae.hpp"
#include "egopose/random.hpp"

namespace egopose {

namespace {

constexpr double kPositionStep = 1e-6;  // meters
constexpr double kPixelStep = 1e-5;
constexpr double kLatentStep = 1e-5;
constexpr double kWeightStep = 1e-6;
constexpr int kFrames = 6;

using Scalar = std::function<double(const std::vector<double>&)>;

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / std::max(scale, 1e-8);
}

std::vector<double> central_difference(const Scalar& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> flat(const PoseFrames& frames) {
  std::vector<double> out;
  for (const auto& p : frames) out.insert(out.end(), p.data(), p.data() + kPoseChannels);
  return out;
}

PoseSeq unflat(const std::vector<double>& x, Space space) {
  PoseFrames f(x.size() / kPoseChannels);
  for (std::size_t i = 0; i < f.size(); ++i) std::copy_n(x.data() + i * kPoseChannels, kPoseChannels, f[i].data());
  return {std::move(f), space};
}

// Bilinear sampling has kinks on cell-center lines; finite differences are
// meaningless across them, so instances keep a margin.
bool clear_of_kinks(const Eigen::Vector2d& uv, double stride) {
  for (int a = 0; a < 2; ++a) {
    const double c = uv[a] / stride - 0.5;
    if (std::abs(c - std::round(c)) < 1e-2) return false;
  }
  return true;
}

Eigen::Vector3d random_visible_point(Rng& rng, const FisheyeCalib& calib) {
  for (;;) {
    const Eigen::Vector3d p(uniform(rng, -0.7, 0.7), uniform(rng, -0.7, 0.7), uniform(rng, -0.1, 1.2));
    const double r = std::hypot(p.x(), p.y());
    if (r < 0.05) continue;
    const double rho = std::atan2(p.z(), r);
    if (rho < calib.rho_min + 0.02 || rho > calib.rho_max - 0.02) continue;
    if (!clear_of_kinks(project(p, calib), 10.0)) continue;
    return p;
  }
}

PoseSeq random_local_sequence(Rng& rng, const FisheyeCalib& calib) {
  PoseSeq s(PoseFrames(kFrames), Space::Local);
  for (auto& f : s.frames) {
    for (int j = 0; j < kNumJoints; ++j) f.col(j) = random_visible_point(rng, calib);
  }
  return s;
}

PoseSeq random_world_sequence(Rng& rng) {
  PoseSeq s(PoseFrames(kFrames), Space::World);
  for (auto& f : s.frames) {
    for (int j = 0; j < kNumJoints; ++j) f.col(j) = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0, 2));
  }
  return s;
}

PoseSeq perturbed(const PoseSeq& s, Rng& rng, double amount) {
  PoseSeq out = s;
  for (auto& f : out.frames) {
    for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] += uniform(rng, -amount, amount);
  }
  return out;
}

// Heatmaps peaked near (not at) the projections, some joints bimodal.
std::vector<HeatmapStack> heatmaps_near(const PoseSeq& s, Rng& rng, const FisheyeCalib& calib) {
  std::vector<HeatmapStack> out;
  for (const auto& f : s.frames) {
    std::array<Eigen::Vector2d, kNumJoints> uv;
    std::array<JointOcclusion, kNumJoints> occ{};
    for (int j = 0; j < kNumJoints; ++j) {
      uv[static_cast<std::size_t>(j)] = project(f.col(j), calib) + Eigen::Vector2d(uniform(rng, -8, 8), uniform(rng, -8, 8));
      if (uniform01(rng) < 0.2) occ[static_cast<std::size_t>(j)] = {true, {uniform(rng, -40, 40), uniform(rng, -40, 40)}, false};
    }
    out.push_back(synth_heatmap(uv, 15.0, occ, 64, 64, 10.0));
  }
  return out;
}

struct Instance {
  std::vector<double> analytic;
  std::vector<double> numeric;
};

struct Check {
  const char* name;
  const char* covers;
  double tolerance;
  std::function<Instance(Rng&)> make;
};

Instance pose_instance(const PoseSeq& at, const std::function<std::pair<double, PoseFrames>(const PoseSeq&)>& f) {
  const Scalar value = [&](const std::vector<double>& x) { return f(unflat(x, at.space)).first; };
  return {flat(f(at).second), central_difference(value, flat(at.frames), kPositionStep)};
}

std::vector<Check> build_checks() {
  const FisheyeCalib calib = synthetic_calibration();
  std::vector<Check> checks;

  checks.push_back({"fisheye_jacobian", "d project / d point", kGradTolerance, [calib](Rng& rng) {
                      const Eigen::Vector3d p = random_visible_point(rng, calib);
                      const Eigen::Matrix<double, 2, 3> J = project_jacobian(p, calib);
                      const Eigen::Vector2d w(uniform(rng, -1, 1), uniform(rng, -1, 1));
                      const Eigen::Vector3d a = J.transpose() * w;
                      const Scalar f = [&](const std::vector<double>& x) {
                        return w.dot(project(Eigen::Vector3d(x[0], x[1], x[2]), calib));
                      };
                      return Instance{{a.x(), a.y(), a.z()}, central_difference(f, {p.x(), p.y(), p.z()}, kPositionStep)};
                    }});

  checks.push_back({"heatmap_sample", "d bilinear sample / d (u, v)", kGradTolerance, [](Rng& rng) {
                      HeatmapGrid grid(16, 16);
                      for (Eigen::Index k = 0; k < grid.size(); ++k) grid.data()[k] = static_cast<float>(uniform01(rng));
                      Eigen::Vector2d uv;
                      do {
                        uv = {uniform(rng, 5.0, 155.0), uniform(rng, 5.0, 155.0)};
                      } while (!clear_of_kinks(uv, 10.0));
                      const Eigen::Vector2d a = sample_gradient(grid, uv, 10.0);
                      const Scalar f = [&](const std::vector<double>& x) { return sample(grid, {x[0], x[1]}, 10.0); };
                      return Instance{{a.x(), a.y()}, central_difference(f, {uv.x(), uv.y()}, kPixelStep)};
                    }});

  checks.push_back({"e_reproj", "heatmap reprojection term", kGradTolerance, [calib](Rng& rng) {
                      const PoseSeq s = random_local_sequence(rng, calib);
                      const auto hm = heatmaps_near(s, rng, calib);
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto t = e_reproj(q, hm, calib);
                        return std::make_pair(t.value, t.gradient);
                      });
                    }});

  checks.push_back({"e_pose", "pose regularizer", kGradTolerance, [](Rng& rng) {
                      const PoseSeq s = random_world_sequence(rng);
                      const PoseSeq init = perturbed(s, rng, 0.05);
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto t = e_pose(q, init);
                        return std::make_pair(t.value, t.gradient);
                      });
                    }});

  checks.push_back({"e_smooth", "temporal smoothness term", kGradTolerance, [](Rng& rng) {
                      const PoseSeq s = random_world_sequence(rng);
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto t = e_smooth(q);
                        return std::make_pair(t.value, t.gradient);
                      });
                    }});

  checks.push_back({"e_bone", "bone-length consistency term", kGradTolerance, [](Rng& rng) {
                      const PoseSeq s = random_world_sequence(rng);
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto t = e_bone(q);
                        return std::make_pair(t.value, t.gradient);
                      });
                    }});

  checks.push_back({"conventional_reproj", "2D keypoint reprojection term", kGradTolerance, [calib](Rng& rng) {
                      const PoseSeq s = random_local_sequence(rng, calib);
                      const auto det = argmax_detections(heatmaps_near(s, rng, calib));
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto t = conventional_reproj(q, det, calib);
                        return std::make_pair(t.value, t.gradient);
                      });
                    }});

  checks.push_back({"local_objective", "weighted local objective (reproj + pose + smooth + bone)", kGradTolerance,
                    [calib](Rng& rng) {
                      const PoseSeq s = random_local_sequence(rng, calib);
                      const PoseSeq init = perturbed(s, rng, 0.03);
                      const auto hm = heatmaps_near(s, rng, calib);
                      const auto w = EnergyWeights::local_defaults();
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto e = local_objective(q, init, hm, calib, w);
                        return std::make_pair(e.total, e.gradient);
                      });
                    }});

  checks.push_back({"global_objective", "weighted global objective (pose + smooth + bone)", kGradTolerance,
                    [](Rng& rng) {
                      const PoseSeq s = random_world_sequence(rng);
                      const PoseSeq init = perturbed(s, rng, 0.03);
                      const auto w = EnergyWeights::global_defaults();
                      return pose_instance(s, [&](const PoseSeq& q) {
                        auto e = global_objective(q, init, w);
                        return std::make_pair(e.total, e.gradient);
                      });
                    }});

  checks.push_back({"decoder_vjp", "pose-prior decoder pullback (d decode / d z)^T v", kGradTolerance, [](Rng& rng) {
                      PriorModel model(VaeArchitecture::pose_default(), Space::Local);
                      model.network().initialize(rng());
                      for (Eigen::Index k = 0; k < kPoseChannels; ++k) {
                        model.normalization().mean[k] = uniform(rng, -0.5, 0.5);
                        model.normalization().scale[k] = uniform(rng, 0.05, 0.3);
                      }
                      LatentVec z(model.latent_dim());
                      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = standard_normal(rng);
                      PoseFrames cot(static_cast<std::size_t>(model.length()));
                      for (auto& c : cot) {
                        for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = uniform(rng, -1, 1);
                      }
                      ConvVae::Tape tape;
                      model.decode(z, tape);
                      const LatentVec a = model.vjp(tape, cot);
                      const Scalar f = [&](const std::vector<double>& x) {
                        const PoseSeq y = model.decode(Eigen::Map<const LatentVec>(x.data(), z.size()));
                        double v = 0.0;
                        for (std::size_t i = 0; i < cot.size(); ++i) v += cot[i].cwiseProduct(y[i]).sum();
                        return v;
                      };
                      return Instance{{a.data(), a.data() + a.size()},
                                      central_difference(f, {z.data(), z.data() + z.size()}, kLatentStep)};
                    }});

  checks.push_back({"vae_weights", "tiny-VAE training loss d / d weights", kWeightGradTolerance, [](Rng& rng) {
                      const VaeArchitecture arch = VaeArchitecture::tiny();
                      ConvVae net(arch);
                      net.initialize(rng());
                      const int n = 3;
                      Eigen::MatrixXd x(arch.input_channels, arch.length * n);
                      for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = standard_normal(rng);
                      Eigen::MatrixXd eps(arch.latent_dim, n);
                      for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = standard_normal(rng);
                      std::vector<double> grad(net.parameter_count(), 0.0);
                      net.loss(x, eps, 1.0, 0.5, grad);
                      const auto p = net.parameters();
                      const Scalar f = [&](const std::vector<double>& theta) {
                        std::copy(theta.begin(), theta.end(), p.begin());
                        return net.loss(x, eps, 1.0, 0.5).total;
                      };
                      std::vector<double> theta(p.begin(), p.end());
                      auto numeric = central_difference(f, theta, kWeightStep);
                      return Instance{grad, std::move(numeric)};
                    }});
  return checks;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : build_checks()) names.emplace_back(c.name);
  return names;
}

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options) {
  if (options.instances < 1) throw ValidationError("gradcheck: need at least one instance");
  const auto checks = build_checks();
  if (!options.inject_fault.empty() &&
      std::none_of(checks.begin(), checks.end(), [&](const Check& c) { return options.inject_fault == c.name; })) {
    throw ValidationError("gradcheck: unknown check '" + options.inject_fault + "'");
  }
  std::vector<GradCheckRow> rows;
  for (const auto& check : checks) {
    GradCheckRow row{check.name, check.covers, options.instances, 0.0, check.tolerance, false};
    for (int i = 0; i < options.instances; ++i) {
      Rng rng = make_rng(options.seed, std::string("gradcheck-") + check.name, static_cast<std::uint64_t>(i));
      Instance inst = check.make(rng);
      if (options.inject_fault == check.name) {
        double peak = 0.0;
        for (double v : inst.analytic) peak = std::max(peak, std::abs(v));
        inst.analytic[0] += 0.01 * peak + 1e-6;
      }
      row.max_rel_error = std::max(row.max_rel_error, relative_error(inst.analytic, inst.numeric));
    }
    row.passed = std::isfinite(row.max_rel_error) && row.max_rel_error <= row.tolerance;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace egopose
