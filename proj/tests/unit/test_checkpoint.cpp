#include <gtest/gtest.h>

#include <filesystem>

#include "lowmt/util.hpp"
#include "lowmt/checkpoint.hpp"

using namespace lowmt;
using namespace lowmt::nmt;
namespace fs = std::filesystem;

namespace {

ModelConfig cfg(std::vector<LangId> langs, int factor_dim = 4) {
  ModelConfig c;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 24;
  c.token_vocab = 50;
  c.languages = std::move(langs);
  c.factor_dim = factor_dim;
  return c;
}

Checkpoint sample() {
  Checkpoint c;
  c.config = cfg({LangId("et"), LangId("fi")});
  c.params = init_params<float>(c.config, 3);
  c.optimizer.step = 17;
  c.optimizer.m = c.params.zeros_like();
  c.optimizer.v = init_params<float>(c.config, 4);
  c.step = 400;
  c.valid_ppl = 3.25;
  c.is_best = true;
  c.ppl_history = {10.5, 5.0, 3.25};
  c.provenance = {"ml", "abc", "def"};
  return c;
}

}  // namespace

TEST(Checkpoint, SerializeRoundTrip) {
  const auto c = sample();
  const auto bytes = c.serialize();
  EXPECT_EQ(bytes.substr(0, 8), "LOWMTCKP");
  const auto back = Checkpoint::deserialize(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.serialize(), bytes);

  const auto path = fs::temp_directory_path() / "lowmt_ckpt_test.ckpt";
  c.save(path);
  EXPECT_EQ(Checkpoint::load(path), c);
  fs::remove(path);
}

TEST(Checkpoint, WithoutOptimizer) {
  auto c = sample();
  c.optimizer = {};
  EXPECT_EQ(Checkpoint::deserialize(c.serialize()), c);
}

TEST(Checkpoint, CorruptInputIsDataError) {
  const auto bytes = sample().serialize();
  EXPECT_THROW(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(Checkpoint::deserialize(bytes + "x"), DataError);
  EXPECT_THROW(Checkpoint::deserialize("NOTACKPT"), DataError);
  EXPECT_THROW(Checkpoint::load("/nonexistent/model.ckpt"), Error);
}

TEST(Checkpoint, FingerprintCoversConfigAndParameters) {
  const auto c = sample();
  auto d = c;
  d.step = 1;
  d.provenance.stage = "other";
  d.optimizer = {};
  EXPECT_EQ(c.fingerprint(), d.fingerprint());
  d.params.tensors[0](0, 0) += 1e-3f;
  EXPECT_NE(c.fingerprint(), d.fingerprint());
  auto e = c;
  e.config.dropout = 0.2;
  EXPECT_NE(c.fingerprint(), e.fingerprint());
}

TEST(Checkpoint, InitFromCopiesBytes) {
  const auto parent = sample();
  const auto child = init_from(parent, parent.config);
  EXPECT_EQ(child, parent.params);
  // different language codes but same shapes are accepted
  const auto swapped = init_from(parent, cfg({LangId("sme"), LangId("sma")}));
  EXPECT_EQ(swapped, parent.params);
}

TEST(Checkpoint, InitFromReportsEveryMismatch) {
  const auto parent = sample();
  auto other = cfg({LangId("et"), LangId("fi"), LangId("vro")});
  other.token_vocab = 60;
  try {
    init_from(parent, other);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("embed.factor"), std::string::npos) << m;
    EXPECT_NE(m.find("output.weight"), std::string::npos) << m;
  }
  auto deeper = parent.config;
  deeper.enc_layers = 2;
  EXPECT_THROW(init_from(parent, deeper), ConfigError);
}
