#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string output;  // stdout and stderr
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(VSNERF_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("vsnerf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  void synth() {
    const auto r = run_cli("--seed 4 synth --out " + path("data") + " --views 6 --width 16 --height 16");
    ASSERT_EQ(r.status, 0) << r.output;
  }

  fs::path root_;
};

const std::string kSmallTrain =
    " --set train.eval_views=1 --set train.eval_samples=8 --set train.field.width=8 --set train.field.depth=1"
    " --set train.field.head_width=8 --threads 1";

}  // namespace

TEST_F(CliTest, MemestPrintsBytesAndHumanSize) {
  const auto r = run_cli("memest --batch 4096 --presamples 256 --views 50 --channels 384 --bytes 4");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.output, "80530636800 (80.53 GB)\n");
}

TEST_F(CliTest, MissingSubcommandFails) { EXPECT_NE(run_cli("").status, 0); }

TEST_F(CliTest, SynthWritesDataset) {
  synth();
  EXPECT_TRUE(fs::exists(root_ / "data" / "config.json"));
  EXPECT_TRUE(fs::exists(root_ / "data" / "scene.json"));
}

TEST_F(CliTest, TrainZeroIterationsWritesCheckpoint) {
  synth();
  const auto r = run_cli("train --dataset " + path("data") + " --out " + path("run") + " --sampler uniform --iters 0" +
                         kSmallTrain);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root_ / "run" / "field.vsfd"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "summary.json"));
}

TEST_F(CliTest, UnknownOverrideKeyIsNamed) {
  synth();
  const auto t = run_cli("--set train.bogus_key=3 train --dataset " + path("data") + " --out " + path("run"));
  EXPECT_NE(t.status, 0);
  EXPECT_NE(t.output.find("train.bogus_key"), std::string::npos) << t.output;
}

TEST_F(CliTest, MissingDatasetIsAnError) {
  const auto r = run_cli("train --dataset " + path("nowhere") + " --out " + path("run"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error"), std::string::npos);
}

TEST_F(CliTest, ResolvedConfigReproducesMetrics) {
  synth();
  const auto first = run_cli("train --dataset " + path("data") + " --out " + path("a") +
                             " --iters 6 --batch 32 --presamples 8 --samples 6 --eval-interval 3" + kSmallTrain);
  ASSERT_EQ(first.status, 0) << first.output;
  const auto second =
      run_cli("--config " + path("a/config.json") + " train --dataset " + path("data") + " --out " + path("b"));
  ASSERT_EQ(second.status, 0) << second.output;
  const auto metrics = slurp(root_ / "a" / "metrics.csv");
  EXPECT_EQ(metrics, slurp(root_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "train_log.csv"), slurp(root_ / "b" / "train_log.csv"));
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "iteration,sampler,psnr,ssim,color_loss,depth_pushing_loss,total_loss,wall_ms");
  EXPECT_TRUE(fs::exists(root_ / "a" / "field_000003.vsfd"));
}

TEST_F(CliTest, EvalWritesRenders) {
  synth();
  ASSERT_EQ(run_cli("train --dataset " + path("data") + " --out " + path("run") + " --sampler uniform --iters 0" +
                    kSmallTrain)
                .status,
            0);
  const auto r = run_cli("eval --dataset " + path("data") + " --checkpoint " + path("run/field.vsfd") + " --out " +
                         path("eval") + " --samples 8 --all-views --threads 1");
  ASSERT_EQ(r.status, 0) << r.output;
  for (int v = 0; v < 6; ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "render_view_%03d.pfm", v);
    EXPECT_TRUE(fs::exists(root_ / "eval" / name)) << name;
  }
  EXPECT_TRUE(fs::exists(root_ / "eval" / "metrics.csv"));
}

TEST_F(CliTest, DistillSyntheticWritesProjectorAndReport) {
  const auto r = run_cli("distill --out " + path("proj.vspj") + " --steps 20 --set distill.c_in=64"
                         " --set correspondence.c_in=64 --set distill.hidden=16");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root_ / "proj.vspj"));
  EXPECT_NE(slurp(root_ / "proj.vspj.json").find("diagonal_argmax_distilled"), std::string::npos);
}
