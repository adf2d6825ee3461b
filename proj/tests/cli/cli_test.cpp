// Drives the egopose executable as a subprocess and checks exit codes and artifacts.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "egopose/kv_document.hpp"
#include "egopose/prior_vae.hpp"

namespace egopose {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Outcome egopose(const std::string& args) {
  const std::string cmd = std::string(EGOPOSE_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("egopose_cli_tests." + std::to_string(getpid())));
    fs::remove_all(*root_);
    fs::create_directories(*root_);
    const Outcome o = egopose("synth --out " + (*root_ / "ds").string() +
                              " --frames 25 --seed 9 --noise-mm 20 --occlusion-prob 0.2 --motions walk turn");
    ASSERT_EQ(o.code, 0) << o.output;
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static fs::path dir(const std::string& name) { return *root_ / name; }
  static std::string manifest() { return (*root_ / "ds" / "manifest.txt").string(); }

  static fs::path* root_;
};
fs::path* Cli::root_ = nullptr;

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(egopose("").code, 2);
  EXPECT_EQ(egopose("frobnicate").code, 2);
  EXPECT_EQ(egopose("run --out x").code, 2);
  EXPECT_EQ(egopose("run --dataset /no/such/manifest.txt --out x").code, 2);
  EXPECT_EQ(egopose("train-prior --space sideways --out x").code, 2);
  EXPECT_EQ(egopose("run --dataset " + manifest() + " --out x --reproj other").code, 2);
}

TEST_F(Cli, HelpListsSubcommandsAndExitCodes) {
  const Outcome o = egopose("--help");
  EXPECT_EQ(o.code, 0);
  for (const char* word : {"synth", "train-prior", "run", "eval", "gradcheck", "Exit codes"}) {
    EXPECT_NE(o.output.find(word), std::string::npos) << word;
  }
  EXPECT_EQ(egopose("run --help").code, 0);
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(egopose("synth --out " + dir("ds2").string() + " --frames 25 --seed 9 --noise-mm 20 --occlusion-prob 0.2 "
                    "--motions walk turn").code,
            0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir("ds"))) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), dir("ds"));
    EXPECT_EQ(slurp(e.path()), slurp(dir("ds2") / rel)) << rel;
  }
  EXPECT_GT(files, 25);
}

TEST_F(Cli, RunAndEvalWithoutPrior) {
  const std::string base = "run --dataset " + manifest() + " --no-prior --max-iters 20 --quiet --out ";
  ASSERT_EQ(egopose(base + dir("r1").string()).code, 0);
  ASSERT_EQ(egopose(base + dir("r2").string()).code, 0);
  for (const char* f : {"poses.bin", "poses_local.bin", "poses.txt", "report.txt", "objective_curves.csv"}) {
    ASSERT_TRUE(fs::exists(dir("r1") / f)) << f;
    EXPECT_EQ(slurp(dir("r1") / f), slurp(dir("r2") / f)) << f;
  }
  const KvDocument report = KvDocument::load(dir("r1") / "report.txt");
  EXPECT_EQ(report.get_int("frame_count"), 25);
  EXPECT_EQ(report.get_int("segment_count"), 3);
  EXPECT_EQ(report.get_int("config.optimizer.max_iterations"), 20);

  const Outcome e = egopose("eval --pred " + (dir("r1") / "poses.bin").string() + " --eval " +
                            (dir("ds") / "eval.txt").string() + " --label np --csv " + (dir("m.csv")).string());
  EXPECT_EQ(e.code, 0) << e.output;
  EXPECT_NE(e.output.find("PA-MPJPE"), std::string::npos);
  EXPECT_EQ(egopose("eval --pred " + (dir("r2") / "poses.bin").string() + " --eval " + (dir("ds") / "eval.txt").string() +
                    " --label np2 --append --csv " + dir("m.csv").string())
                .code,
            0);
  const std::string csv = slurp(dir("m.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Cli, ConfigFileOverriddenByFlags) {
  {
    std::ofstream cfg(dir("opt.txt"));
    cfg << "optimizer.max_iterations = 7\nreprojection = conventional\n";
  }
  ASSERT_EQ(egopose("run --dataset " + manifest() + " --no-prior --quiet --config " + dir("opt.txt").string() +
                    " --max-iters 4 --out " + dir("rc").string())
                .code,
            0);
  const KvDocument report = KvDocument::load(dir("rc") / "report.txt");
  EXPECT_EQ(report.get_int("config.optimizer.max_iterations"), 4);
  EXPECT_EQ(report.get_string("config.reprojection"), "conventional");
}

TEST_F(Cli, InputErrorsMapToExitCodes) {
  // A prior is required unless the prior is switched off.
  EXPECT_EQ(egopose("run --dataset " + manifest() + " --quiet --out " + dir("rx").string()).code, 4);
  {
    std::ofstream bad(dir("bad.prior"), std::ios::binary);
    bad << "not a checkpoint";
  }
  EXPECT_EQ(egopose("run --dataset " + manifest() + " --skip-global --quiet --local-prior " + dir("bad.prior").string() +
                    " --out " + dir("rx").string())
                .code,
            3);
  fs::copy(dir("ds"), dir("ds_cut"), fs::copy_options::recursive);
  fs::resize_file(dir("ds_cut") / "heatmaps" / "frame_000004.bin", 100);
  const Outcome cut = egopose("run --dataset " + (dir("ds_cut") / "manifest.txt").string() + " --no-prior --out " +
                              dir("rx").string());
  EXPECT_EQ(cut.code, 3);
  EXPECT_NE(cut.output.find("frame_000004"), std::string::npos) << cut.output;

  ASSERT_EQ(egopose("synth --out " + dir("ds30").string() + " --frames 30 --seed 9").code, 0);
  ASSERT_EQ(egopose("run --dataset " + manifest() + " --no-prior --skip-local --skip-global --out " +
                    dir("rb").string()).code,
            0);
  EXPECT_EQ(egopose("eval --pred " + (dir("rb") / "poses.bin").string() + " --eval " + (dir("ds30") / "eval.txt").string())
                .code,
            4);
}

TEST_F(Cli, GradcheckExitCodes) {
  const Outcome ok = egopose("gradcheck --instances 2");
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_EQ(ok.output.find("FAIL"), std::string::npos);
  const Outcome bad = egopose("gradcheck --instances 2 --inject-fault e_smooth");
  EXPECT_EQ(bad.code, 6);
  EXPECT_NE(bad.output.find("FAIL"), std::string::npos);
  EXPECT_EQ(egopose("gradcheck --inject-fault nothing").code, 4);
}

TEST_F(Cli, TrainPriorWritesCheckpointAndCurve) {
  const std::string args = "train-prior --space world --segments 40 --epochs 3 --latent 4 --hidden 8,8,8,8,8 --quiet "
                           "--seed 3 --out ";
  ASSERT_EQ(egopose(args + dir("p1.prior").string()).code, 0);
  ASSERT_EQ(egopose(args + dir("p2.prior").string()).code, 0);
  EXPECT_EQ(slurp(dir("p1.prior")), slurp(dir("p2.prior")));
  const PriorModel m = load_prior(dir("p1.prior"));
  EXPECT_EQ(m.space(), Space::World);
  EXPECT_EQ(m.latent_dim(), 4);
  const std::string curve = slurp(dir("p1.prior.curve.csv"));
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 4);
  EXPECT_EQ(egopose("train-prior --epochs 0 --out " + dir("p3.prior").string()).code, 4);
  EXPECT_EQ(egopose("train-prior --hidden 8,8 --out " + dir("p3.prior").string()).code, 4);
}

}  // namespace
}  // namespace egopose
