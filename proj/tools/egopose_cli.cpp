// egopose command-line tool: synth, train-prior, run, eval, gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "egopose/dataset.hpp"
#include "egopose/errors.hpp"
#include "egopose/gradcheck.hpp"
#include "egopose/kv_document.hpp"
#include "egopose/metrics.hpp"
#include "egopose/pipeline.hpp"
#include "egopose/prior_vae.hpp"
#include "egopose/synthbench.hpp"

namespace fs = std::filesystem;
using namespace egopose;

namespace {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitValidation = 4,
  kExitNumerical = 5,
  kExitCheckFailed = 6,
};

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 success, 1 internal error, 2 usage, 3 I/O error, 4 validation error,\n"
    "5 numerical error, 6 failed check (gradcheck above tolerance, or a flagged segment\n"
    "under --strict).";

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  std::optional<double> fps, noise_mm, outlier_p, occlusion_p, jitter_mm, traj_rot_deg, traj_trans_mm, slam_scale;
  std::vector<std::string> motions;
};

MotionGenConfig synth_config(const SynthArgs& a) {
  MotionGenConfig c;
  if (!a.config.empty()) {
    const auto doc = KvDocument::load(a.config);
    auto num = [&](const char* key, double& v) {
      if (doc.contains(key)) v = doc.get_double(key);
    };
    if (doc.contains("seed")) c.seed = static_cast<std::uint64_t>(doc.get_int("seed"));
    if (doc.contains("frame_count")) c.frame_count = static_cast<int>(doc.get_int("frame_count"));
    num("frame_rate", c.frame_rate);
    num("body_scale_spread", c.body_scale_spread);
    if (doc.contains("heatmap_resolution")) c.heatmap_resolution = static_cast<int>(doc.get_int("heatmap_resolution"));
    if (doc.contains("motions")) {
      c.vocabulary.clear();
      std::istringstream in(doc.get_string("motions"));
      for (std::string m; in >> m;) c.vocabulary.push_back(parse_motion_kind(m));
    }
    auto& k = c.corruption;
    num("noise_sigma_mm", k.noise_sigma_mm);
    num("outlier_probability", k.outlier_probability);
    num("outlier_magnitude_mm", k.outlier_magnitude_mm);
    num("occlusion_probability", k.occlusion_probability);
    num("occlusion_mean_frames", k.occlusion_mean_frames);
    num("occlusion_offset_px", k.occlusion_offset_px);
    num("heatmap_sigma_px", k.heatmap_sigma_px);
    num("traj_rotation_deg", k.traj_rotation_deg);
    num("traj_translation_mm", k.traj_translation_mm);
    num("slam_scale", k.slam_scale);
    num("stance_jitter_mm", k.stance_jitter_mm);
  }
  if (a.seed) c.seed = *a.seed;
  if (a.frames) c.frame_count = *a.frames;
  if (a.fps) c.frame_rate = *a.fps;
  if (a.noise_mm) c.corruption.noise_sigma_mm = *a.noise_mm;
  if (a.outlier_p) c.corruption.outlier_probability = *a.outlier_p;
  if (a.occlusion_p) c.corruption.occlusion_probability = *a.occlusion_p;
  if (a.jitter_mm) c.corruption.stance_jitter_mm = *a.jitter_mm;
  if (a.traj_rot_deg) c.corruption.traj_rotation_deg = *a.traj_rot_deg;
  if (a.traj_trans_mm) c.corruption.traj_translation_mm = *a.traj_trans_mm;
  if (a.slam_scale) c.corruption.slam_scale = *a.slam_scale;
  if (!a.motions.empty()) {
    c.vocabulary.clear();
    for (const auto& m : a.motions) c.vocabulary.push_back(parse_motion_kind(m));
  }
  c.validate();
  return c;
}

KvDocument describe(const MotionGenConfig& c) {
  KvDocument doc;
  doc.set("seed", std::to_string(c.seed));
  doc.set("frame_count", c.frame_count);
  doc.set("frame_rate", c.frame_rate);
  doc.set("body_scale_spread", c.body_scale_spread);
  doc.set("heatmap_resolution", c.heatmap_resolution);
  std::string motions;
  for (auto m : c.vocabulary) motions += (motions.empty() ? "" : " ") + std::string(to_string(m));
  doc.set("motions", motions);
  const auto& k = c.corruption;
  doc.set("noise_sigma_mm", k.noise_sigma_mm);
  doc.set("outlier_probability", k.outlier_probability);
  doc.set("outlier_magnitude_mm", k.outlier_magnitude_mm);
  doc.set("occlusion_probability", k.occlusion_probability);
  doc.set("occlusion_mean_frames", k.occlusion_mean_frames);
  doc.set("occlusion_offset_px", k.occlusion_offset_px);
  doc.set("heatmap_sigma_px", k.heatmap_sigma_px);
  doc.set("traj_rotation_deg", k.traj_rotation_deg);
  doc.set("traj_translation_mm", k.traj_translation_mm);
  doc.set("slam_scale", k.slam_scale);
  doc.set("stance_jitter_mm", k.stance_jitter_mm);
  return doc;
}

int cmd_synth(const SynthArgs& a) {
  const MotionGenConfig cfg = synth_config(a);
  const auto cap = make_capture(cfg);
  write_dataset(cap.dataset, a.out);
  write_eval(cap.eval, a.out);
  describe(cfg).save(a.out / "synth_config.txt");
  std::cerr << "wrote " << cfg.frame_count << " frames to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train-prior

struct TrainArgs {
  std::string space = "local";
  fs::path out;
  fs::path curve;
  int segments = 4000;
  int motion_frames = 300;
  int length = 10;
  int latent = 32;
  std::vector<int> hidden;
  TrainConfig train;
  bool quiet = false;
};

int cmd_train_prior(TrainArgs a) {
  const Space space = parse_space(a.space);
  a.train.architecture = VaeArchitecture::pose_default(a.length);
  a.train.architecture.latent_dim = a.latent;
  if (!a.hidden.empty()) {
    if (a.hidden.size() != 5) throw ValidationError("--hidden takes exactly 5 channel counts");
    for (std::size_t i = 0; i < 5; ++i) a.train.architecture.hidden_channels[i] = a.hidden[i];
  }
  a.train.validate();

  MotionGenConfig corpus_cfg;
  corpus_cfg.seed = derive_seed(a.train.seed, "prior-corpus");
  corpus_cfg.frame_count = a.motion_frames;
  const auto corpus = build_prior_corpus(corpus_cfg, a.segments, space, a.length);

  const fs::path curve_path = a.curve.empty() ? fs::path(a.out.string() + ".curve.csv") : a.curve;
  std::ofstream curve(curve_path, std::ios::binary);
  if (!curve) throw IoError("cannot write " + curve_path.string());
  curve << "epoch,c2,total,recon,kl\n";
  const auto result = train(corpus, a.train, [&](const EpochStats& s) {
    curve << s.epoch << ',' << format_double(s.c2) << ',' << format_double(s.total) << ',' << format_double(s.recon)
          << ',' << format_double(s.kl) << '\n';
    if (!a.quiet) {
      std::fprintf(stderr, "epoch %4d  loss %.5f  recon %.5f  kl %.5f\n", s.epoch, s.total, s.recon, s.kl);
    }
  });
  curve.close();
  if (!curve) throw IoError("failed writing " + curve_path.string());
  save_prior(result.model, a.out);
  std::cerr << "saved " << to_string(space) << " prior (" << result.model.network().parameter_count()
            << " parameters) to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  fs::path dataset, local_prior, global_prior, out, config;
  bool no_prior = false, skip_local = false, skip_global = false, blend = false, zero_init = false;
  bool strict = false, timing = false, quiet = false;
  std::string reproj;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iterations;
  std::optional<double> step_size;
};

int cmd_run(const RunArgs& a) {
  OptimizationConfig cfg;
  if (!a.config.empty()) cfg = OptimizationConfig::from_document(KvDocument::load(a.config));
  if (a.no_prior) cfg.use_prior = false;
  if (a.skip_local) cfg.skip_local = true;
  if (a.skip_global) cfg.skip_global = true;
  if (a.blend) cfg.blend_segments = true;
  if (a.zero_init) cfg.optimizer.zero_init = true;
  if (!a.reproj.empty()) cfg.reprojection = parse_reprojection_mode(a.reproj);
  if (a.seed) cfg.seed = *a.seed;
  if (a.max_iterations) cfg.optimizer.max_iterations = *a.max_iterations;
  if (a.step_size) cfg.optimizer.step_size = *a.step_size;
  cfg.validate();

  const CaptureDataset data = load_dataset(a.dataset);
  std::optional<PriorModel> local, global;
  if (cfg.use_prior && !cfg.skip_local) {
    if (a.local_prior.empty()) throw ValidationError("--local-prior is required unless --no-prior or --skip-local");
    local = load_prior(a.local_prior);
  }
  if (cfg.use_prior && !cfg.skip_global) {
    if (a.global_prior.empty()) throw ValidationError("--global-prior is required unless --no-prior or --skip-global");
    global = load_prior(a.global_prior);
  }
  const auto result = egopose::run(data, local ? &*local : nullptr, global ? &*global : nullptr, cfg,
                                   [&](std::size_t i, const SegmentReport& s) {
                                     if (a.quiet) return;
                                     std::fprintf(stderr, "segment %3zu  local %.6g -> %.6g (%d it)  global %.6g -> %.6g (%d it)\n",
                                                  i, s.local.initial_objective, s.local.final_objective,
                                                  s.local.iterations, s.global.initial_objective,
                                                  s.global.final_objective, s.global.iterations);
                                   });
  write_run_outputs(result, cfg, a.out, a.timing);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const int flagged = result.flagged_segments();
  std::cerr << result.segments.size() << " segments, " << flagged << " flagged; outputs in " << a.out.string() << "\n";
  return a.strict && flagged > 0 ? kExitCheckFailed : kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path pred, eval, csv, report;
  std::string label = "run";
  bool append = false;
};

int cmd_eval(const EvalArgs& a) {
  const EvalData ev = load_eval(a.eval);
  const std::size_t frames = pose_file_frames(a.pred);
  if (frames != ev.frame_count()) {
    throw ValidationError("prediction has " + std::to_string(frames) + " frames, ground truth has " +
                          std::to_string(ev.frame_count()));
  }
  const PoseSeq pred = read_poses(a.pred, frames, Space::World);
  const MetricReport m = evaluate(pred, ev.gt_world, ev.stance, ev.standard_bones);
  if (!a.report.empty()) write_metric_report(m, a.report);
  if (!a.csv.empty()) {
    const bool header = !a.append || !fs::exists(a.csv) || fs::file_size(a.csv) == 0;
    std::ofstream out(a.csv, std::ios::binary | (a.append ? std::ios::app : std::ios::trunc));
    if (!out) throw IoError("cannot write " + a.csv.string());
    if (header) out << metric_csv_header() << '\n';
    out << metric_csv_row(a.label, m) << '\n';
    if (!out) throw IoError("failed writing " + a.csv.string());
  }
  std::printf("%-12s PA-MPJPE %.3f mm  BA-MPJPE %.3f mm  Global MPJPE %.3f mm  jitter %.4f mm/f^2  footskate %.4f\n",
              a.label.c_str(), m.pa_mpjpe, m.ba_mpjpe, m.global_mpjpe, m.jitter, m.footskate_rate);
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const GradCheckOptions& opt) {
  const auto rows = run_gradcheck(opt);
  bool ok = true;
  std::printf("%-20s %-58s %9s %12s %10s  %s\n", "check", "covers", "instances", "max rel err", "tolerance", "result");
  for (const auto& r : rows) {
    std::printf("%-20s %-58s %9d %12.3e %10.1e  %s\n", r.name.c_str(), r.covers.c_str(), r.instances, r.max_rel_error,
                r.tolerance, r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large temporaries per batch; keeping them
  // off mmap avoids repeated page faults.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Egocentric global pose refinement under learned motion priors."};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic capture with ground truth");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--config", synth.config, "Key/value file with generator settings (flags win)");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--frames", synth.frames, "Number of frames")->check(CLI::PositiveNumber);
  s->add_option("--fps", synth.fps, "Frame rate");
  s->add_option("--noise-mm", synth.noise_mm, "RMS 3D noise on the initial poses (mm)");
  s->add_option("--outlier-prob", synth.outlier_p, "Per joint-frame outlier probability");
  s->add_option("--occlusion-prob", synth.occlusion_p, "Fraction of joint-frames with a misleading heatmap");
  s->add_option("--stance-jitter-mm", synth.jitter_mm, "Uniform jitter on stance feet (mm)");
  s->add_option("--traj-rot-deg", synth.traj_rot_deg, "Per-frame trajectory rotation noise (deg)");
  s->add_option("--traj-trans-mm", synth.traj_trans_mm, "Per-frame trajectory translation noise (mm)");
  s->add_option("--slam-scale", synth.slam_scale, "Scale error of the trajectory");
  s->add_option("--motions", synth.motions, "Motion vocabulary: walk armwave squat turn");

  TrainArgs tr;
  auto* t = app.add_subcommand("train-prior", "Train a local or world motion prior on synthetic segments");
  t->add_option("--space", tr.space, "local or world")->check(CLI::IsMember({"local", "world"}));
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--curve", tr.curve, "Training curve CSV (default: <out>.curve.csv)");
  t->add_option("--segments", tr.segments, "Corpus size in segments")->check(CLI::PositiveNumber);
  t->add_option("--motion-frames", tr.motion_frames, "Frames per generated motion")->check(CLI::PositiveNumber);
  t->add_option("--length", tr.length, "Segment length B")->check(CLI::Range(3, 1000));
  t->add_option("--latent", tr.latent, "Latent dimension")->check(CLI::PositiveNumber);
  t->add_option("--hidden", tr.hidden, "Five hidden channel counts")->delimiter(',');
  t->add_option("--epochs", tr.train.epochs, "Training epochs");
  t->add_option("--batch", tr.train.batch_size, "Mini-batch size");
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  t->add_option("--c1", tr.train.c1, "Reconstruction weight");
  t->add_option("--c2", tr.train.c2, "KL weight");
  t->add_option("--kl-warmup", tr.train.kl_warmup_fraction, "Share of epochs over which the KL weight ramps up");
  t->add_option("--seed", tr.train.seed, "Random seed (corpus, initialization, batches)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Optimize a capture: local stage, world transform, global stage");
  r->add_option("--dataset", run.dataset, "Dataset manifest")->required()->check(CLI::ExistingFile);
  r->add_option("--local-prior", run.local_prior, "Local prior checkpoint")->check(CLI::ExistingFile);
  r->add_option("--global-prior", run.global_prior, "World prior checkpoint")->check(CLI::ExistingFile);
  r->add_option("--out", run.out, "Output directory")->required();
  r->add_option("--config", run.config, "Key/value optimization config (flags win)")->check(CLI::ExistingFile);
  r->add_flag("--no-prior", run.no_prior, "Optimize poses directly instead of latent codes");
  r->add_option("--reproj", run.reproj, "heatmap or conventional")->check(CLI::IsMember({"heatmap", "conventional"}));
  r->add_flag("--skip-local", run.skip_local, "Skip the local stage");
  r->add_flag("--skip-global", run.skip_global, "Skip the global stage");
  r->add_flag("--blend-segments", run.blend, "Overlapping windows with a linear crossfade");
  r->add_flag("--zero-init", run.zero_init, "Start latent search from z = 0");
  r->add_option("--max-iters", run.max_iterations, "Iteration cap per segment and stage");
  r->add_option("--step", run.step_size, "Latent Adam step size");
  r->add_option("--seed", run.seed, "Seed recorded with the run");
  r->add_flag("--strict", run.strict, "Exit nonzero when any segment fell back");
  r->add_flag("--timing", run.timing, "Write wall times into the report (not reproducible)");
  r->add_flag("--quiet", run.quiet, "No per-segment progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted world poses against ground truth");
  e->add_option("--pred", ev.pred, "Predicted poses (poses.bin)")->required()->check(CLI::ExistingFile);
  e->add_option("--eval", ev.eval, "Evaluation manifest (eval.txt)")->required()->check(CLI::ExistingFile);
  e->add_option("--label", ev.label, "Row label");
  e->add_option("--csv", ev.csv, "Metrics CSV");
  e->add_option("--report", ev.report, "Key/value metric report");
  e->add_flag("--append", ev.append, "Append a row to an existing CSV");

  GradCheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "Compare every analytic gradient with finite differences");
  g->add_option("--seed", gc.seed, "Random seed");
  g->add_option("--instances", gc.instances, "Random instances per check")->check(CLI::PositiveNumber);
  g->add_option("--inject-fault", gc.inject_fault, "Perturb the named analytic gradient (self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train_prior(tr);
    if (*r) return cmd_run(run);
    if (*e) return cmd_eval(ev);
    if (*g) return cmd_gradcheck(gc);
  } catch (const IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& err) {
    std::cerr << "invalid input: " << err.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
