#include "lowmt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "lowmt/transformer.hpp"
#include "lowmt/util.hpp"

namespace lowmt::nmt {

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (batch_words <= 0) fail("batch_words must be positive");
  if (checkpoint_interval <= 0) fail("checkpoint_interval must be positive");
  if (patience <= 0) fail("patience must be positive");
  if (max_updates < 0) fail("max_updates must be nonnegative");
  if (!(learning_rate > 0) || !(fine_tune_rate > 0)) fail("step sizes must be positive");
  if (warmup <= 0) fail("warmup must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("Adam betas must lie in [0,1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (clip_norm < 0) fail("clip_norm must be nonnegative");
}

KeyValue TrainConfig::to_kv() const {
  KeyValue kv;
  const auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  kv.set("batch_words", std::to_string(batch_words));
  kv.set("checkpoint_interval", std::to_string(checkpoint_interval));
  kv.set("patience", std::to_string(patience));
  kv.set("max_updates", std::to_string(max_updates));
  kv.set("learning_rate", num(learning_rate));
  kv.set("warmup", std::to_string(warmup));
  kv.set("beta1", num(beta1));
  kv.set("beta2", num(beta2));
  kv.set("adam_eps", num(adam_eps));
  kv.set("clip_norm", num(clip_norm));
  kv.set("fine_tune_rate", num(fine_tune_rate));
  kv.set("seed", std::to_string(seed));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValue& kv, const TrainConfig& d) {
  TrainConfig t = d;
  t.batch_words = static_cast<int>(kv.get_int("batch_words", d.batch_words));
  t.checkpoint_interval = static_cast<int>(kv.get_int("checkpoint_interval", d.checkpoint_interval));
  t.patience = static_cast<int>(kv.get_int("patience", d.patience));
  t.max_updates = static_cast<int>(kv.get_int("max_updates", d.max_updates));
  t.learning_rate = kv.get_double("learning_rate", d.learning_rate);
  t.warmup = static_cast<int>(kv.get_int("warmup", d.warmup));
  t.beta1 = kv.get_double("beta1", d.beta1);
  t.beta2 = kv.get_double("beta2", d.beta2);
  t.adam_eps = kv.get_double("adam_eps", d.adam_eps);
  t.clip_norm = kv.get_double("clip_norm", d.clip_norm);
  t.fine_tune_rate = kv.get_double("fine_tune_rate", d.fine_tune_rate);
  t.seed = kv.get_u64("seed", d.seed);
  return t;
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig t;
  t.batch_words = 6000;
  t.checkpoint_interval = 2000;
  t.patience = 32;
  t.max_updates = 1000000;
  t.warmup = 4000;
  t.learning_rate = 2e-4;
  return t;
}

std::vector<Example> encode_pairs(std::span<const ParallelCorpus> corpora, const SubwordModel& subword,
                                  const ModelConfig& cfg, EncodeStats* stats) {
  std::vector<Example> out;
  EncodeStats s;
  const auto limit = static_cast<std::size_t>(cfg.max_len - 1);
  for (const auto& c : corpora) {
    for (std::size_t i = 0; i < c.pairs.size(); ++i) {
      const auto& p = c.pairs[i];
      Example e;
      e.src = subword.encode(p.src);
      e.tgt = subword.encode(p.tgt);
      if (e.src.size() > limit || e.tgt.size() > limit) {
        ++s.skipped_too_long;
        continue;
      }
      e.factor = cfg.factor_of(p.tgt_lang);
      e.words = word_count(p.tgt);
      e.id = out.size();
      out.push_back(std::move(e));
      ++s.kept;
    }
  }
  if (stats) *stats = s;
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> pack(std::span<const Example> examples, std::vector<std::size_t> order,
                                           int batch_words) {
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = examples[a];
    const auto& y = examples[b];
    if (x.tgt.size() != y.tgt.size()) return x.tgt.size() < y.tgt.size();
    return x.src.size() < y.src.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t words = 0;
  const auto cap = static_cast<std::size_t>(batch_words);
  for (std::size_t idx : order) {
    const std::size_t w = std::max<std::size_t>(examples[idx].words, 1);
    if (!cur.empty() && words + w > cap) {
      batches.push_back(std::move(cur));
      cur.clear();
      words = 0;
    }
    cur.push_back(idx);
    words += w;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

FactoredBatch gather(std::span<const Example> examples, const std::vector<std::size_t>& idx) {
  std::vector<const Example*> ptrs;
  ptrs.reserve(idx.size());
  for (std::size_t i : idx) ptrs.push_back(&examples[i]);
  return make_batch(std::span<const Example* const>(ptrs));
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> examples, int batch_words,
                                                   std::uint64_t seed) {
  if (batch_words <= 0) throw ConfigError("batch_words must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5eed));
  shuffle(order, rng);
  auto batches = pack(examples, std::move(order), batch_words);
  shuffle(batches, rng);
  return batches;
}

std::vector<std::vector<std::size_t>> make_eval_batches(std::span<const Example> examples, int batch_words) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return pack(examples, std::move(order), batch_words);
}

double evaluate_perplexity(const Parameters<float>& params, const ModelConfig& cfg, std::span<const Example> data,
                           int batch_words) {
  if (data.empty()) throw DataError("evaluate_perplexity needs a nonempty data set");
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& idx : make_eval_batches(data, batch_words)) {
    const auto r = forward(params, cfg, gather(data, idx));
    nll += r.nll_sum;
    tokens += r.tokens;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

namespace {

struct Schedule {
  double peak;
  int warmup;
  std::optional<double> constant;

  double rate(std::int64_t step) const {
    if (constant) return *constant;
    const double s = static_cast<double>(step);
    const double w = warmup;
    return peak * std::min(s / w, std::sqrt(w / s));
  }
};

std::string fmt(double v, int prec) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

TrainResult run_training(Parameters<float> params, const ModelConfig& cfg, std::span<const Example> train_data,
                         std::span<const Example> valid_data, const TrainConfig& tc, const TrainHooks& hooks,
                         const Schedule& schedule) {
  tc.validate();
  cfg.validate();
  if (train_data.empty()) throw DataError("training set is empty");
  if (valid_data.empty()) throw DataError("validation set is empty");

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const bool on_disk = !hooks.checkpoint_dir.empty();
  std::ofstream log;
  if (on_disk) {
    std::filesystem::create_directories(hooks.checkpoint_dir);
    log.open(hooks.checkpoint_dir / "train.log");
    log << "step\ttrain_loss\tvalid_ppl\tis_best\twall_time\n";
  }

  AdamState adam{0, params.zeros_like(), params.zeros_like()};
  TrainResult result;
  std::vector<double> ppl_history;
  int bad_checkpoints = 0;
  double interval_loss = 0;
  int interval_updates = 0;

  const auto make_checkpoint = [&](double ppl, bool best) {
    Checkpoint c;
    c.config = cfg;
    c.params = params;
    c.step = adam.step;
    c.valid_ppl = ppl;
    c.is_best = best;
    c.ppl_history = ppl_history;
    c.provenance = hooks.provenance;
    return c;
  };

  // Returns false when early stopping triggers.
  const auto checkpoint = [&]() {
    const double ppl = evaluate_perplexity(params, cfg, valid_data, std::max(tc.batch_words, 2000));
    if (!std::isfinite(ppl)) throw NumericError("validation perplexity is not finite at update " + std::to_string(adam.step));
    ppl_history.push_back(ppl);
    const bool best = result.history.empty() || ppl < result.best.valid_ppl;
    HistoryRow row{adam.step,
                   interval_updates ? interval_loss / interval_updates : std::numeric_limits<double>::quiet_NaN(),
                   ppl, best, elapsed()};
    result.history.push_back(row);
    interval_loss = 0;
    interval_updates = 0;
    if (best) {
      result.best = make_checkpoint(ppl, true);
      bad_checkpoints = 0;
    } else {
      ++bad_checkpoints;
    }
    if (on_disk) {
      log << row.step << '\t' << fmt(row.train_loss, 6) << '\t' << fmt(row.valid_ppl, 6) << '\t' << (best ? 1 : 0)
          << '\t' << fmt(row.wall_seconds, 3) << '\n'
          << std::flush;
      if (best) result.best.save(hooks.checkpoint_dir / "best.ckpt");
      auto latest = make_checkpoint(ppl, best);
      latest.optimizer = adam;
      latest.save(hooks.checkpoint_dir / "latest.ckpt");
      KeyValue index;
      index.set("latest", "latest.ckpt");
      index.set("latest_step", std::to_string(adam.step));
      index.set("best", "best.ckpt");
      index.set("best_step", std::to_string(result.best.step));
      index.set("best_ppl", fmt(result.best.valid_ppl, 9));
      index.save(hooks.checkpoint_dir / "index.txt");
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(row);
    return bad_checkpoints < tc.patience;
  };

  bool keep_going = checkpoint();
  result.stop_reason = "patience";
  Rng dropout_rng(mix_seed(tc.seed, 0xd409));
  const float b1 = static_cast<float>(tc.beta1), b2 = static_cast<float>(tc.beta2);
  std::uint64_t epoch = 0;
  while (keep_going) {
    const auto batches = make_batches(train_data, tc.batch_words, mix_seed(tc.seed, epoch++));
    for (const auto& idx : batches) {
      if (adam.step >= tc.max_updates) {
        keep_going = false;
        result.stop_reason = "max_updates";
        break;
      }
      auto g = backward(params, cfg, gather(train_data, idx), &dropout_rng);
      if (!std::isfinite(g.loss) || !g.grads.all_finite()) {
        throw NumericError("non-finite loss or gradient at update " + std::to_string(adam.step + 1) +
                           " (loss " + std::to_string(g.loss) + ", batch of " + std::to_string(idx.size()) +
                           " sentences); best checkpoint at update " + std::to_string(result.best.step) + " retained");
      }
      float clip = 1.0f;
      if (tc.clip_norm > 0) {
        double sq = 0;
        for (const auto& t : g.grads.tensors) sq += static_cast<double>(t.squaredNorm());
        const double norm = std::sqrt(sq);
        if (norm > tc.clip_norm) clip = static_cast<float>(tc.clip_norm / norm);
      }
      ++adam.step;
      const double lr = schedule.rate(adam.step);
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(adam.step));
      const float step_size = static_cast<float>(lr / bc1);
      const float inv_bc2 = static_cast<float>(1.0 / bc2);
      const float eps = static_cast<float>(tc.adam_eps);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto gr = g.grads.tensors[i].array() * clip;
        auto m = adam.m.tensors[i].array();
        auto v = adam.v.tensors[i].array();
        m = b1 * m + (1.0f - b1) * gr;
        v = b2 * v + (1.0f - b2) * gr.square();
        params.tensors[i].array() -= step_size * m / ((v * inv_bc2).sqrt() + eps);
      }
      interval_loss += g.loss;
      ++interval_updates;
      if (adam.step % tc.checkpoint_interval == 0) {
        if (!params.all_finite()) throw NumericError("parameters became non-finite at update " + std::to_string(adam.step));
        keep_going = checkpoint();
        if (!keep_going) break;
      }
    }
  }
  if (result.stop_reason == "max_updates" && adam.step % tc.checkpoint_interval != 0) {
    if (!params.all_finite()) throw NumericError("parameters became non-finite at update " + std::to_string(adam.step));
    checkpoint();
  }
  result.updates = adam.step;
  result.best.ppl_history = ppl_history;
  return result;
}

}  // namespace

TrainResult train(Parameters<float> params, const ModelConfig& cfg, std::span<const Example> train_data,
                  std::span<const Example> valid_data, const TrainConfig& tc, const TrainHooks& hooks) {
  return run_training(std::move(params), cfg, train_data, valid_data, tc, hooks,
                      Schedule{tc.learning_rate, tc.warmup, std::nullopt});
}

TrainResult fine_tune(const Checkpoint& parent, const ModelConfig& cfg, std::span<const Example> train_data,
                      std::span<const Example> valid_data, const TrainConfig& tc, const TrainHooks& hooks) {
  TrainHooks h = hooks;
  if (h.provenance.parent_fingerprint.empty()) h.provenance.parent_fingerprint = parent.fingerprint();
  return run_training(init_from(parent, cfg), cfg, train_data, valid_data, tc, h,
                      Schedule{tc.fine_tune_rate, tc.warmup, tc.fine_tune_rate});
}

std::string training_log_tsv(std::span<const HistoryRow> rows) {
  std::string out = "step\ttrain_loss\tvalid_ppl\tis_best\twall_time\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + '\t' + fmt(r.train_loss, 6) + '\t' + fmt(r.valid_ppl, 6) + '\t' +
           (r.is_best ? "1" : "0") + '\t' + fmt(r.wall_seconds, 3) + '\n';
  }
  return out;
}

}  // namespace lowmt::nmt
