#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "lowmt/toy.hpp"
#include "lowmt/util.hpp"

namespace fs = std::filesystem;
using namespace lowmt;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "lowmt_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LOWMT_CLI) + " " + args + " > " + (kRoot / "out.txt").string() + " 2> " +
                          (kRoot / "err.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string tiny_spec(const std::string& extra) {
  return "manifest = toy/manifest.txt\n"
         "split.test_total = 60\nsplit.valid_total = 40\nbpe.vocab_size = 320\n"
         "model.enc_layers = 1\nmodel.dec_layers = 1\nmodel.heads = 2\nmodel.d_model = 16\nmodel.d_ff = 32\n"
         "model.factor_dim = 4\ntrain.batch_words = 300\ntrain.checkpoint_interval = 5\ntrain.patience = 2\n"
         "train.max_updates = 5\ntrain.warmup = 2\nstage.1 = multilingual ml\n" +
         extra;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    auto spec = toy::ToyLanguageSpec::desk_default();
    for (auto& p : spec.pairs) p.train /= 20;
    for (auto& [k, v] : spec.mono_set1) v = 10;
    for (auto& [k, v] : spec.mono_set2) v = 5;
    std::ofstream(kRoot / "toy.txt") << spec.to_kv().serialize();
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run --bogus"), 2);
  EXPECT_EQ(run_cli("gen-toy"), 2);  // no --out-dir
  EXPECT_EQ(run_cli("synthesize --model m --bpe b --mono x --lang et --iteration 3 --out-dir o"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST_F(Cli, GenToyAndPrepare) {
  const auto toy = kRoot / "toy";
  ASSERT_EQ(run_cli("gen-toy --seed 2 --spec " + (kRoot / "toy.txt").string() + " --out-dir " + toy.string()), 0) << read_file(kRoot / "err.txt");
  EXPECT_TRUE(fs::exists(toy / "manifest.txt"));
  ASSERT_EQ(run_cli("prepare --manifest " + (toy / "manifest.txt").string() + " --out-dir " + (kRoot / "data").string()),
            0)
      << read_file(kRoot / "err.txt");
  EXPECT_NE(read_file(kRoot / "out.txt").find("la-lb"), std::string::npos);
  EXPECT_EQ(run_cli("prepare --manifest " + (kRoot / "missing.txt").string() + " --out-dir x"), 2);
}

TEST_F(Cli, RunStateAndDataErrors) {
  const auto toy = kRoot / "toy";
  if (!fs::exists(toy / "manifest.txt")) ASSERT_EQ(run_cli("gen-toy --seed 2 --spec " + (kRoot / "toy.txt").string() + " --out-dir " + toy.string()), 0);
  std::ofstream(kRoot / "spec.txt") << tiny_spec("");
  const auto run_dir = (kRoot / "run").string();
  ASSERT_EQ(run_cli("run --spec " + (kRoot / "spec.txt").string() + " --out-dir " + run_dir), 0)
      << read_file(kRoot / "err.txt");
  EXPECT_NE(read_file(kRoot / "out.txt").find("ML"), std::string::npos);
  // existing run directory without --resume
  EXPECT_EQ(run_cli("run --spec " + (kRoot / "spec.txt").string() + " --out-dir " + run_dir), 6);
  EXPECT_EQ(run_cli("run --resume --spec " + (kRoot / "spec.txt").string() + " --out-dir " + run_dir), 0);

  const auto model = (kRoot / "run" / "stages" / "ml" / "best.ckpt").string();
  const auto bpe = (kRoot / "run" / "bpe.model").string();
  EXPECT_EQ(run_cli("evaluate --model " + model + " --bpe " + bpe + " --data " + (kRoot / "run" / "data").string() +
                    " --direction la-lc"),
            0)
      << read_file(kRoot / "err.txt");
  EXPECT_NE(read_file(kRoot / "out.txt").find("BLEU+case"), std::string::npos);

  std::ofstream(kRoot / "garbage.ckpt") << "not a checkpoint";
  EXPECT_EQ(run_cli("evaluate --model " + (kRoot / "garbage.ckpt").string() + " --bpe " + bpe + " --data x"), 3);
  EXPECT_EQ(run_cli("compare " + (kRoot / "run" / "report" / "report.json").string() + " --baseline 5"), 2);
  EXPECT_EQ(run_cli("compare " + (kRoot / "run" / "report" / "report.json").string()), 0);
}

TEST_F(Cli, DivergenceIsNumericError) {
  const auto toy = kRoot / "toy";
  if (!fs::exists(toy / "manifest.txt")) ASSERT_EQ(run_cli("gen-toy --seed 2 --spec " + (kRoot / "toy.txt").string() + " --out-dir " + toy.string()), 0);
  std::ofstream(kRoot / "spec_nan.txt") << tiny_spec("train.learning_rate = 1e30\n");
  EXPECT_EQ(run_cli("run --spec " + (kRoot / "spec_nan.txt").string() + " --out-dir " + (kRoot / "nan").string()), 4)
      << read_file(kRoot / "err.txt");
}
