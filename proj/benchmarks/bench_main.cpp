#include <benchmark/benchmark.h>

#include "lowmt/decoding.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/subword.hpp"
#include "lowmt/toy.hpp"
#include "lowmt/transformer.hpp"

using namespace lowmt;

namespace {

std::vector<std::string> toy_sentences(std::size_t n, const char* lang = "la") {
  const toy::ToyWorld w(toy::ToyLanguageSpec::desk_default(), 1);
  Rng rng(2);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(w.render(w.sample(rng), LangId(lang)));
  return out;
}

nmt::ModelConfig model_config(int d, int vocab) {
  nmt::ModelConfig c;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.heads = 4;
  c.d_model = d;
  c.d_ff = 4 * d;
  c.factor_dim = 8;
  c.token_vocab = vocab;
  c.languages = {LangId("la"), LangId("lb"), LangId("lc"), LangId("ld"), LangId("le")};
  return c;
}

nmt::FactoredBatch random_batch(int rows, int len, int vocab) {
  Rng rng(3);
  std::vector<nmt::Example> ex(static_cast<std::size_t>(rows));
  for (auto& e : ex) {
    for (int i = 0; i < len; ++i) {
      e.src.push_back(4 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(vocab - 4))));
      e.tgt.push_back(4 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(vocab - 4))));
    }
    e.words = static_cast<std::size_t>(len);
  }
  return nmt::make_batch(ex);
}

void BM_Forward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto cfg = model_config(d, 800);
  const auto p = nmt::init_params<float>(cfg, 1);
  const auto b = random_batch(32, 16, 800);
  for (auto _ : state) benchmark::DoNotOptimize(nmt::forward(p, cfg, b).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.token_count));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto cfg = model_config(d, 800);
  const auto p = nmt::init_params<float>(cfg, 1);
  const auto b = random_batch(32, 16, 800);
  for (auto _ : state) benchmark::DoNotOptimize(nmt::backward(p, cfg, b).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.token_count));
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_GreedyBatch(benchmark::State& state) {
  const auto texts = toy_sentences(64);
  const auto sw = SubwordModel::train(texts, 600);
  auto cfg = model_config(64, static_cast<int>(sw.vocab_size()));
  cfg.max_len = 32;
  const auto p = nmt::init_params<float>(cfg, 1);
  const std::vector<LangId> tgt = {LangId("lb")};
  for (auto _ : state) benchmark::DoNotOptimize(nmt::translate_batch(p, cfg, sw, texts, tgt));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_GreedyBatch)->Unit(benchmark::kMillisecond);

void BM_BpeTrain(benchmark::State& state) {
  const auto texts = toy_sentences(2000);
  for (auto _ : state) benchmark::DoNotOptimize(SubwordModel::train(texts, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BpeTrain)->Arg(800)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_BpeEncode(benchmark::State& state) {
  const auto texts = toy_sentences(2000);
  const auto sw = SubwordModel::train(texts, 800);
  std::size_t bytes = 0;
  for (const auto& t : texts) bytes += t.size();
  for (auto _ : state) {
    for (const auto& t : texts) benchmark::DoNotOptimize(sw.encode(t));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_BpeEncode)->Unit(benchmark::kMillisecond);

void BM_Bleu(benchmark::State& state) {
  const auto refs = toy_sentences(1000, "lb");
  auto hyps = refs;
  for (std::size_t i = 0; i < hyps.size(); i += 3) hyps[i] = refs[(i + 1) % refs.size()];
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu(hyps, refs).score);
}
BENCHMARK(BM_Bleu)->Unit(benchmark::kMillisecond);

void BM_Chrf(benchmark::State& state) {
  const auto refs = toy_sentences(1000, "lb");
  auto hyps = refs;
  for (std::size_t i = 0; i < hyps.size(); i += 3) hyps[i] = refs[(i + 1) % refs.size()];
  for (auto _ : state) benchmark::DoNotOptimize(metrics::chrf(hyps, refs).score);
}
BENCHMARK(BM_Chrf)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
