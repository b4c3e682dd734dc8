#include "lowmt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>

#include "lowmt/decoding.hpp"
#include "lowmt/toy.hpp"
#include "lowmt/util.hpp"

namespace lowmt::experiment {
namespace fs = std::filesystem;
using nmt::Checkpoint;
using nmt::ModelConfig;
using nmt::TrainConfig;

namespace {

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t salt_of(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

KeyValue with_prefix_stripped(const KeyValue& kv, const std::string& prefix) {
  KeyValue out;
  for (const auto& k : kv.keys_with_prefix(prefix)) out.set(k.substr(prefix.size()), *kv.get(k));
  return out;
}

void hash_corpus(Fnv1a& h, const ParallelCorpus& c) {
  h.update(c.direction.str());
  for (const auto& p : c.pairs) {
    h.update(p.src);
    h.update("\t");
    h.update(p.tgt);
    h.update("\t");
    h.update(to_string(p.origin));
    h.update("\n");
  }
}

std::string corpora_hash(std::span<const ParallelCorpus> cs) {
  Fnv1a h;
  for (const auto& c : cs) hash_corpus(h, c);
  return h.hex();
}

bool is_table_row(const std::string& kind) { return kind == "baselines" || kind == "multilingual" || kind == "bt"; }

}  // namespace

// ---------------------------------------------------------------------------
// PreparedData

const PairData& PreparedData::pair(const Direction& d) const {
  for (const auto& p : pairs) {
    if (p.pair == d || p.pair == d.reversed()) return p;
  }
  throw DataError("no data for language pair " + d.str());
}

namespace {
ParallelCorpus directed(const ParallelCorpus& c, const Direction& d) {
  if (c.direction == d) return c;
  return corpus::reverse(c);
}
}  // namespace

ParallelCorpus PreparedData::test_set(const Direction& d) const { return directed(pair(d).test, d); }
ParallelCorpus PreparedData::valid_set(const Direction& d) const { return directed(pair(d).valid, d); }
ParallelCorpus PreparedData::train_set(const Direction& d) const { return directed(pair(d).train, d); }

std::vector<Direction> PreparedData::trained_directions() const {
  std::vector<Direction> out;
  for (const auto& p : pairs) {
    if (p.role == "zero") continue;
    out.push_back(p.pair);
    out.push_back(p.pair.reversed());
  }
  return out;
}

std::vector<Direction> PreparedData::low_directions() const {
  std::vector<Direction> out;
  for (const auto& p : pairs) {
    if (p.role != "low") continue;
    out.push_back(p.pair);
    out.push_back(p.pair.reversed());
  }
  return out;
}

std::vector<Direction> PreparedData::zero_directions() const {
  std::vector<Direction> out;
  for (const auto& p : pairs) {
    if (p.role != "zero") continue;
    out.push_back(p.pair);
    out.push_back(p.pair.reversed());
  }
  return out;
}

std::string PreparedData::hash() const {
  Fnv1a h;
  for (const auto& p : pairs) {
    h.update(p.role);
    hash_corpus(h, p.train);
    hash_corpus(h, p.valid);
    hash_corpus(h, p.test);
  }
  for (const auto& [lang, sets] : mono) {
    for (const auto& m : sets) {
      h.update(lang.code());
      for (const auto& l : m.lines) {
        h.update(l);
        h.update("\n");
      }
    }
  }
  return h.hex();
}

PreparedData prepare(const CorpusManifest& manifest, const PrepareConfig& cfg, const fs::path& out_dir) {
  cfg.cleaning.validate();
  PreparedData out;
  out.languages = manifest.languages;

  std::vector<std::pair<Direction, CleanReport>> clean_rows;
  std::vector<std::pair<Direction, DedupReport>> dedup_rows;
  const auto load_clean = [&](const fs::path& rel, const Direction& d, bool report) {
    const auto raw = manifest.load_pair_file(rel.string(), d);
    auto cleaned = corpus::clean(raw, cfg.cleaning);
    auto deduped = corpus::dedup(cleaned.corpus);
    if (report) {
      clean_rows.emplace_back(d, cleaned.report);
      dedup_rows.emplace_back(d, deduped.report);
    }
    return std::move(deduped.corpus);
  };

  // Held-out sets are drawn jointly over every pair without explicit
  // valid/test files, proportionally to the pair sizes.
  std::vector<ParallelCorpus> to_split;
  std::vector<std::size_t> split_owner;
  for (const auto& e : manifest.pairs) {
    PairData pd;
    pd.pair = e.pair;
    pd.role = e.role;
    pd.train.direction = pd.valid.direction = pd.test.direction = e.pair;
    if (e.role == "zero") {
      if (e.train) throw ConfigError("manifest: zero-resource pair " + e.pair.str() + " lists training data");
      if (!e.test) throw ConfigError("manifest: zero-resource pair " + e.pair.str() + " needs a test set");
    } else if (!e.train) {
      throw ConfigError("manifest: pair " + e.pair.str() + " has no training data");
    }
    if (e.train) {
      auto c = load_clean(*e.train, e.pair, true);
      if (e.valid && e.test) {
        pd.train = std::move(c);
      } else {
        split_owner.push_back(out.pairs.size());
        to_split.push_back(std::move(c));
      }
    }
    if (e.valid) pd.valid = load_clean(*e.valid, e.pair, false);
    if (e.test) pd.test = load_clean(*e.test, e.pair, false);
    out.pairs.push_back(std::move(pd));
  }
  if (!to_split.empty()) {
    auto splits = corpus::split_holdout(to_split, cfg.split);
    for (std::size_t i = 0; i < splits.size(); ++i) {
      auto& pd = out.pairs[split_owner[i]];
      pd.train = std::move(splits[i].train);
      if (pd.valid.empty()) pd.valid = std::move(splits[i].valid);
      if (pd.test.empty()) pd.test = std::move(splits[i].test);
    }
  }

  for (const auto& m : manifest.mono) {
    auto& sets = out.mono[m.lang];
    for (std::size_t k = 0; k < m.sets.size(); ++k) {
      auto mc = corpus::load_mono(manifest.resolve(m.sets[k]), m.lang);
      if (cfg.cleaning.normalize_unicode) {
        for (auto& l : mc.lines) l = nfc(l);
      }
      mc = corpus::dedup(mc);
      if (cfg.mono_cap > 0) {
        mc = corpus::downsample(mc, cfg.mono_cap,
                                mix_seed(cfg.split.seed, salt_of("mono/" + m.lang.code() + "/" + std::to_string(k))));
      }
      sets.push_back(std::move(mc));
    }
  }
  if (fs::exists(manifest.base_dir / "toy_spec.txt")) out.toy_spec = manifest.base_dir / "toy_spec.txt";

  // write out
  fs::create_directories(out_dir / "pairs");
  fs::create_directories(out_dir / "mono");
  CorpusManifest pm;
  pm.base_dir = out_dir;
  pm.languages = out.languages;
  for (const auto& pd : out.pairs) {
    PairEntry e;
    e.pair = pd.pair;
    e.role = pd.role;
    const auto base = "pairs/" + pd.pair.str();
    if (pd.role != "zero") {
      corpus::save_parallel_tsv(out_dir / (base + ".train.tsv"), pd.train);
      e.train = base + ".train.tsv";
    }
    corpus::save_parallel_tsv(out_dir / (base + ".valid.tsv"), pd.valid);
    corpus::save_parallel_tsv(out_dir / (base + ".test.tsv"), pd.test);
    e.valid = base + ".valid.tsv";
    e.test = base + ".test.tsv";
    pm.pairs.push_back(std::move(e));
  }
  for (const auto& [lang, sets] : out.mono) {
    MonoEntry me;
    me.lang = lang;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const auto rel = "mono/" + lang.code() + "." + std::to_string(k + 1) + ".txt";
      corpus::save_mono(out_dir / rel, sets[k]);
      me.sets.emplace_back(rel);
    }
    pm.mono.push_back(std::move(me));
  }
  pm.save(out_dir / "manifest.txt");
  if (out.toy_spec) {
    fs::copy_file(*out.toy_spec, out_dir / "toy_spec.txt", fs::copy_options::overwrite_existing);
    out.toy_spec = out_dir / "toy_spec.txt";
  }
  write_file(out_dir / "clean_report.tsv", corpus::clean_report_tsv(clean_rows));
  write_file(out_dir / "dedup_report.tsv", corpus::dedup_report_tsv(dedup_rows));

  std::ostringstream sizes;
  sizes << "pair\trole\ttrain\tvalid\ttest\n";
  for (const auto& pd : out.pairs) {
    sizes << pd.pair.str() << '\t' << pd.role << '\t' << pd.train.size() << '\t' << pd.valid.size() << '\t'
          << pd.test.size() << '\n';
  }
  sizes << "\nlanguage\tset\tlines\n";
  for (const auto& [lang, sets] : out.mono) {
    for (std::size_t k = 0; k < sets.size(); ++k) sizes << lang.code() << '\t' << k + 1 << '\t' << sets[k].size() << '\n';
  }
  write_file(out_dir / "sizes.tsv", sizes.str());
  return out;
}

PreparedData load_prepared(const fs::path& dir) {
  const auto manifest = CorpusManifest::load(dir / "manifest.txt");
  PreparedData out;
  out.languages = manifest.languages;
  for (const auto& e : manifest.pairs) {
    PairData pd;
    pd.pair = e.pair;
    pd.role = e.role;
    pd.train.direction = pd.valid.direction = pd.test.direction = e.pair;
    if (e.train) pd.train = manifest.load_pair_file(e.train->string(), e.pair);
    if (e.valid) pd.valid = manifest.load_pair_file(e.valid->string(), e.pair);
    if (e.test) pd.test = manifest.load_pair_file(e.test->string(), e.pair);
    out.pairs.push_back(std::move(pd));
  }
  for (const auto& m : manifest.mono) {
    for (const auto& s : m.sets) out.mono[m.lang].push_back(corpus::load_mono(manifest.resolve(s), m.lang));
  }
  if (fs::exists(dir / "toy_spec.txt")) out.toy_spec = dir / "toy_spec.txt";
  return out;
}

// ---------------------------------------------------------------------------
// ExperimentSpec

std::string StageSpec::arg(const std::string& key, const std::string& fallback) const {
  const auto it = args.find(key);
  return it == args.end() ? fallback : it->second;
}

ExperimentSpec ExperimentSpec::parse(const KeyValue& kv, const fs::path& base_dir) {
  ExperimentSpec s;
  s.name = kv.get_or("name", s.name);
  const auto manifest = kv.require("manifest");
  s.manifest = fs::path(manifest).is_absolute() ? fs::path(manifest) : base_dir / manifest;
  s.seed = kv.get_u64("seed", s.seed);

  auto& c = s.prepare.cleaning;
  c.max_len_words = static_cast<std::size_t>(kv.get_int("clean.max_len_words", static_cast<long long>(c.max_len_words)));
  c.len_ratio_max = kv.get_double("clean.len_ratio_max", c.len_ratio_max);
  c.normalize_unicode = kv.get_bool("clean.normalize_unicode", c.normalize_unicode);
  s.prepare.split.test_total = static_cast<std::size_t>(kv.get_int("split.test_total", 0));
  s.prepare.split.valid_total = static_cast<std::size_t>(kv.get_int("split.valid_total", 0));
  s.prepare.mono_cap = static_cast<std::size_t>(kv.get_int("mono.cap", 0));
  s.bpe_vocab = static_cast<std::size_t>(kv.get_int("bpe.vocab_size", static_cast<long long>(s.bpe_vocab)));
  s.model = ModelConfig::from_kv(with_prefix_stripped(kv, "model."));
  s.train = TrainConfig::from_kv(with_prefix_stripped(kv, "train."), TrainConfig{});
  s.eval_batch_rows = static_cast<int>(kv.get_int("eval.batch_rows", s.eval_batch_rows));

  // prepare and split seeds follow the experiment seed
  s.prepare.split.seed = mix_seed(s.seed, salt_of("split"));
  s.train.seed = s.seed;

  for (const auto& key : kv.keys_with_prefix("stage.")) {
    const std::string line = *kv.get(key);
    const auto words = split_ws(line);
    if (words.size() < 2) throw ConfigError("spec: " + key + " needs '<kind> <label> [key=value ...]'");
    StageSpec st;
    st.kind = std::string(words[0]);
    st.label = std::string(words[1]);
    for (std::size_t i = 2; i < words.size(); ++i) {
      const auto eq = words[i].find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("spec: " + key + ": argument '" + std::string(words[i]) + "' is not key=value");
      }
      st.args[std::string(words[i].substr(0, eq))] = std::string(words[i].substr(eq + 1));
    }
    s.stages.push_back(std::move(st));
  }
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::load(const fs::path& path) {
  return parse(KeyValue::load(path), path.parent_path());
}

KeyValue ExperimentSpec::to_kv() const {
  KeyValue kv;
  kv.set("name", name);
  kv.set("manifest", manifest.string());
  kv.set("seed", std::to_string(seed));
  kv.set("clean.max_len_words", std::to_string(prepare.cleaning.max_len_words));
  kv.set("clean.len_ratio_max", num17(prepare.cleaning.len_ratio_max));
  kv.set("clean.normalize_unicode", prepare.cleaning.normalize_unicode ? "true" : "false");
  kv.set("split.test_total", std::to_string(prepare.split.test_total));
  kv.set("split.valid_total", std::to_string(prepare.split.valid_total));
  kv.set("mono.cap", std::to_string(prepare.mono_cap));
  kv.set("bpe.vocab_size", std::to_string(bpe_vocab));
  const auto mk = model.to_kv();
  for (const auto& k : mk.keys()) {
    if (k == "token_vocab" || k == "languages") continue;
    kv.set("model." + k, *mk.get(k));
  }
  const auto tk = train.to_kv();
  for (const auto& k : tk.keys()) {
    if (k == "seed") continue;
    kv.set("train." + k, *tk.get(k));
  }
  kv.set("eval.batch_rows", std::to_string(eval_batch_rows));
  for (std::size_t i = 0; i < stages.size(); ++i) {
    std::string v = stages[i].kind + " " + stages[i].label;
    for (const auto& [k, a] : stages[i].args) v += " " + k + "=" + a;
    kv.set("stage." + std::to_string(i + 1), v);
  }
  return kv;
}

std::string ExperimentSpec::hash() const {
  Fnv1a h;
  h.update(to_kv().serialize());
  return h.hex();
}

void ExperimentSpec::validate() const {
  prepare.cleaning.validate();
  train.validate();
  if (bpe_vocab <= static_cast<std::size_t>(SubwordModel::marker_id)) {
    throw ConfigError("spec: bpe.vocab_size must exceed " + std::to_string(SubwordModel::marker_id));
  }
  if (eval_batch_rows <= 0) throw ConfigError("spec: eval.batch_rows must be positive");
  if (stages.empty()) throw ConfigError("spec: no stages");

  std::map<std::string, const StageSpec*> seen;
  const auto need_earlier = [&](const StageSpec& st, const std::string& ref, bool single_model) -> const StageSpec& {
    const auto it = seen.find(ref);
    if (it == seen.end()) {
      throw ConfigError("spec: stage '" + st.label + "' refers to '" + ref + "', which is not an earlier stage");
    }
    if (single_model && !(it->second->kind == "multilingual" || it->second->kind == "bt")) {
      throw ConfigError("spec: stage '" + st.label + "' needs a multilingual or bt stage, got '" + ref + "'");
    }
    return *it->second;
  };
  const auto need_direction = [](const StageSpec& st) {
    const auto d = st.arg("direction");
    if (d.empty()) throw ConfigError("spec: stage '" + st.label + "' needs direction=");
    Direction::parse(d);
  };
  for (const auto& st : stages) {
    if (st.label.empty() ||
        !std::all_of(st.label.begin(), st.label.end(), [](char ch) {
          return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '+';
        })) {
      throw ConfigError("spec: stage label '" + st.label + "' may only use letters, digits, '_', '-', '+'");
    }
    if (seen.count(st.label)) throw ConfigError("spec: duplicate stage label '" + st.label + "'");
    if (st.kind == "baselines" || st.kind == "multilingual") {
      // no references
    } else if (st.kind == "bt") {
      const auto it = st.arg("iteration", "1");
      if (it != "1" && it != "2") throw ConfigError("spec: stage '" + st.label + "': iteration must be 1 or 2");
      const auto& gen = need_earlier(st, st.arg("generator"), true);
      if (it == "2" && !(gen.kind == "bt" && gen.arg("iteration", "1") == "1")) {
        throw ConfigError("spec: stage '" + st.label + "': iteration 2 needs an iteration-1 bt stage as generator");
      }
      const auto init = st.arg("init", st.arg("generator"));
      if (init != "none") need_earlier(st, init, true);
      synthesis::share_mode_from_string(st.arg("mode", "equal_shares"));
    } else if (st.kind == "finetune") {
      need_earlier(st, st.arg("parent"), true);
      need_direction(st);
    } else if (st.kind == "transfer") {
      const auto parent = st.arg("parent");
      const auto colon = parent.find(':');
      if (colon != std::string::npos) {
        const auto& p = need_earlier(st, parent.substr(0, colon), false);
        if (p.kind != "baselines") throw ConfigError("spec: stage '" + st.label + "': '" + parent + "' is not a baseline model");
        Direction::parse(parent.substr(colon + 1));
      } else {
        need_earlier(st, parent, true);
      }
      need_direction(st);
    } else {
      throw ConfigError("spec: unknown stage kind '" + st.kind + "'");
    }
    seen[st.label] = &st;
  }
}

ExperimentSpec ExperimentSpec::toy_grid(const fs::path& manifest) {
  ExperimentSpec s;
  s.name = "toy";
  s.manifest = manifest;
  s.seed = 1;
  s.prepare.split.test_total = 1000;
  s.prepare.split.valid_total = 400;
  s.prepare.split.seed = mix_seed(s.seed, salt_of("split"));
  s.bpe_vocab = 800;
  s.model.enc_layers = 2;
  s.model.dec_layers = 2;
  s.model.heads = 4;
  s.model.d_model = 64;
  s.model.d_ff = 256;
  s.model.factor_dim = 8;
  s.model.max_len = 64;
  s.train.batch_words = 500;
  s.train.checkpoint_interval = 50;
  s.train.patience = 4;
  s.train.max_updates = 2000;
  s.train.learning_rate = 2e-3;
  s.train.warmup = 200;
  s.train.seed = s.seed;
  s.stages = {
      {"baselines", "baselines", {{"max_updates", "1000"}}},
      {"multilingual", "ml", {{"max_updates", "2500"}}},
      {"bt",
       "bt1",
       {{"iteration", "1"}, {"generator", "ml"}, {"init", "ml"}, {"row", "+BT1"}, {"max_updates", "1200"},
        {"learning_rate", "5e-4"}, {"warmup", "100"}}},
      {"bt",
       "bt2",
       {{"iteration", "2"}, {"generator", "bt1"}, {"init", "bt1"}, {"row", "+BT1+BT2"}, {"max_updates", "1200"},
        {"learning_rate", "5e-4"}, {"warmup", "100"}}},
      {"finetune", "ft", {{"parent", "ml"}, {"direction", "la-lc"}, {"max_updates", "500"}}},
      {"transfer", "tr", {{"parent", "baselines:la-lb"}, {"direction", "la-lc"}, {"max_updates", "1000"}}},
  };
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluation evaluate_model(const Checkpoint& model, const SubwordModel& subword, std::span<const ParallelCorpus> tests,
                          int batch_rows) {
  Evaluation ev;
  for (const auto& t : tests) {
    if (t.empty()) throw DataError("empty test set for " + t.direction.str());
    std::vector<std::string> srcs, refs;
    for (const auto& p : t.pairs) {
      srcs.push_back(p.src);
      refs.push_back(p.tgt);
    }
    const std::vector<LangId> tgt{t.direction.tgt};
    const auto out = nmt::translate_batch(model.params, model.config, subword, srcs, tgt, 0, batch_rows);
    std::vector<std::string> hyps;
    hyps.reserve(out.size());
    for (const auto& o : out) hyps.push_back(o.text);
    ev.scores.push_back({t.direction, metrics::bleu(hyps, refs).score, metrics::chrf(hyps, refs).score});
    ev.hypotheses[t.direction.str()] = std::move(hyps);
  }
  return ev;
}

std::string params_hash(const nmt::Parameters<float>& p) {
  Fnv1a h;
  for (std::size_t i = 0; i < p.size(); ++i) {
    h.update(p.names[i]);
    const auto& t = p.tensors[i];
    const std::int64_t dims[2] = {t.rows(), t.cols()};
    h.update(dims, sizeof dims);
    h.update(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  return h.hex();
}

std::vector<std::string> report_files() {
  return {"report.tsv", "report.json", "compare.tsv", "focus.tsv", "zero_shot.tsv", "synthetic.tsv", "sizes.tsv"};
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::string scores_tsv(std::span<const metrics::DirectionScore> scores) {
  std::string out;
  for (const auto& s : scores) out += s.direction.str() + "\t" + num17(s.bleu) + "\t" + num17(s.chrf) + "\n";
  return out;
}

std::vector<metrics::DirectionScore> scores_from_tsv(const fs::path& path) {
  std::vector<metrics::DirectionScore> out;
  for (const auto& line : read_lines(path)) {
    const auto f = split(line, '\t');
    if (f.size() != 3) throw StateError("malformed score file " + path.string());
    out.push_back({Direction::parse(f[0]), std::stod(f[1]), std::stod(f[2])});
  }
  return out;
}

struct StageOutput {
  const StageSpec* spec = nullptr;
  std::string row;
  std::vector<metrics::DirectionScore> scores;       // trained or focus directions
  std::vector<metrics::DirectionScore> zero_scores;  // zero-resource directions
  std::map<std::string, double> on_target;           // zero direction -> fraction
  std::vector<synthesis::MergeCount> merge_counts;
  StageRecord record;
};

class Runner {
 public:
  Runner(const ExperimentSpec& spec, const RunOptions& opts) : spec_(spec), opts_(opts), dir_(opts.out_dir) {}

  RunResult run();

 private:
  void log(const std::string& m) const {
    if (opts_.log) opts_.log(m);
  }
  fs::path stage_dir(const std::string& label) const { return dir_ / "stages" / label; }
  void save_state() const { state_.save(dir_ / "state.txt"); }

  ModelConfig multilingual_config() const;
  ModelConfig bilingual_config(const Direction& d) const;
  TrainConfig stage_train_config(const StageSpec& st, const std::string& sub = "") const;
  std::uint64_t stage_seed(const std::string& label) const { return mix_seed(spec_.seed, salt_of("stage/" + label)); }

  std::vector<ParallelCorpus> human_multilingual() const;
  std::vector<ParallelCorpus> multilingual_valid() const;
  std::vector<ParallelCorpus> tests_for(std::span<const Direction> ds) const;

  Checkpoint load_model(const std::string& ref) const;

  Checkpoint train_model(const fs::path& dir, const std::string& label, const ModelConfig& cfg,
                         nmt::Parameters<float> init, std::span<const ParallelCorpus> train,
                         std::span<const ParallelCorpus> valid, const TrainConfig& tc, const std::string& parent_fp,
                         bool fine_tune_mode, const Checkpoint* parent);

  void evaluate_into(StageOutput& out, const Checkpoint& model, std::span<const Direction> ds, bool zero);

  StageOutput run_baselines(const StageSpec& st);
  StageOutput run_multilingual(const StageSpec& st);
  StageOutput run_bt(const StageSpec& st);
  StageOutput run_finetune(const StageSpec& st);
  StageOutput run_transfer(const StageSpec& st);

  void save_stage(const StageOutput& out) const;
  StageOutput load_stage(const StageSpec& st) const;
  void write_reports(const std::vector<StageOutput>& outs, RunResult& result) const;

  const ExperimentSpec& spec_;
  const RunOptions& opts_;
  fs::path dir_;
  KeyValue state_;
  PreparedData data_;
  SubwordModel subword_;
  std::optional<toy::ToyWorld> world_;
};

ModelConfig Runner::multilingual_config() const {
  ModelConfig c = spec_.model;
  c.token_vocab = static_cast<int>(subword_.vocab_size());
  c.languages = data_.languages;
  c.validate();
  return c;
}

ModelConfig Runner::bilingual_config(const Direction& d) const {
  ModelConfig c = spec_.model;
  c.token_vocab = static_cast<int>(subword_.vocab_size());
  c.languages = {d.src, d.tgt};
  c.factor_dim = 0;
  c.validate();
  return c;
}

TrainConfig Runner::stage_train_config(const StageSpec& st, const std::string& sub) const {
  KeyValue overrides;
  for (const auto& [k, v] : st.args) overrides.set(k, v);
  auto tc = TrainConfig::from_kv(overrides, spec_.train);
  tc.seed = mix_seed(stage_seed(st.label), salt_of(sub));
  tc.validate();
  return tc;
}

std::vector<ParallelCorpus> Runner::human_multilingual() const {
  std::vector<ParallelCorpus> base;
  for (const auto& p : data_.pairs) {
    if (p.role != "zero") base.push_back(p.train);
  }
  return corpus::build_multilingual(base);
}

std::vector<ParallelCorpus> Runner::multilingual_valid() const {
  std::vector<ParallelCorpus> out;
  for (const auto& d : data_.trained_directions()) out.push_back(data_.valid_set(d));
  return out;
}

std::vector<ParallelCorpus> Runner::tests_for(std::span<const Direction> ds) const {
  std::vector<ParallelCorpus> out;
  for (const auto& d : ds) out.push_back(data_.test_set(d));
  return out;
}

Checkpoint Runner::load_model(const std::string& ref) const {
  const auto colon = ref.find(':');
  if (colon != std::string::npos) {
    return Checkpoint::load(stage_dir(ref.substr(0, colon)) / ref.substr(colon + 1) / "best.ckpt");
  }
  return Checkpoint::load(stage_dir(ref) / "best.ckpt");
}

Checkpoint Runner::train_model(const fs::path& dir, const std::string& label, const ModelConfig& cfg,
                               nmt::Parameters<float> init, std::span<const ParallelCorpus> train,
                               std::span<const ParallelCorpus> valid, const TrainConfig& tc,
                               const std::string& parent_fp, bool fine_tune_mode, const Checkpoint* parent) {
  nmt::EncodeStats ts, vs;
  const auto train_ex = nmt::encode_pairs(train, subword_, cfg, &ts);
  const auto valid_ex = nmt::encode_pairs(valid, subword_, cfg, &vs);
  if (train_ex.empty()) throw DataError("stage " + label + ": no training examples");
  if (valid_ex.empty()) throw DataError("stage " + label + ": no validation examples");
  log(label + ": " + std::to_string(ts.kept) + " training pairs (" + std::to_string(ts.skipped_too_long) +
      " too long), " + std::to_string(vs.kept) + " validation pairs");

  nmt::TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  hooks.provenance = {label, parent_fp, corpora_hash(train)};
  hooks.on_checkpoint = [&](const nmt::HistoryRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: step %lld ppl %.3f%s", label.c_str(), static_cast<long long>(r.step),
                  r.valid_ppl, r.is_best ? " *" : "");
    log(buf);
  };
  const auto res = fine_tune_mode ? nmt::fine_tune(*parent, cfg, train_ex, valid_ex, tc, hooks)
                                  : nmt::train(std::move(init), cfg, train_ex, valid_ex, tc, hooks);
  log(label + ": stopped after " + std::to_string(res.updates) + " updates (" + res.stop_reason +
      "), best ppl " + num17(res.best.valid_ppl));
  return res.best;
}

void Runner::evaluate_into(StageOutput& out, const Checkpoint& model, std::span<const Direction> ds, bool zero) {
  const auto tests = tests_for(ds);
  const auto ev = evaluate_model(model, subword_, tests, spec_.eval_batch_rows);
  auto& dst = zero ? out.zero_scores : out.scores;
  dst.insert(dst.end(), ev.scores.begin(), ev.scores.end());
  const auto hyp_dir = stage_dir(out.spec->label) / "hyp";
  fs::create_directories(hyp_dir);
  for (const auto& [d, hyps] : ev.hypotheses) {
    write_lines(hyp_dir / (d + ".txt"), hyps);
    if (zero && world_) {
      const auto tgt = Direction::parse(d).tgt;
      std::size_t ok = 0;
      for (const auto& h : hyps) {
        const auto id = world_->identify(h);
        if (id && *id == tgt) ++ok;
      }
      out.on_target[d] = hyps.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(hyps.size());
    }
  }
}

StageOutput Runner::run_baselines(const StageSpec& st) {
  StageOutput out;
  out.spec = &st;
  out.row = st.arg("row", "Baselines");
  for (const auto& d : data_.trained_directions()) {
    const auto cfg = bilingual_config(d);
    const auto tc = stage_train_config(st, d.str());
    auto init = nmt::init_params<float>(cfg, tc.seed);
    const std::vector<ParallelCorpus> train{data_.train_set(d)};
    const std::vector<ParallelCorpus> valid{data_.valid_set(d)};
    const auto best = train_model(stage_dir(st.label) / d.str(), st.label + "/" + d.str(), cfg, std::move(init), train,
                                  valid, tc, "", false, nullptr);
    const std::vector<Direction> one{d};
    evaluate_into(out, best, one, false);
    state_.set("stage." + st.label + "." + d.str() + ".fingerprint", best.fingerprint());
  }
  return out;
}

StageOutput Runner::run_multilingual(const StageSpec& st) {
  StageOutput out;
  out.spec = &st;
  out.row = st.arg("row", "ML");
  const auto cfg = multilingual_config();
  const auto tc = stage_train_config(st);
  auto init = nmt::init_params<float>(cfg, tc.seed);
  out.record.init_hash = params_hash(init);
  const auto train = human_multilingual();
  const auto valid = multilingual_valid();
  const auto best = train_model(stage_dir(st.label), st.label, cfg, std::move(init), train, valid, tc, "", false, nullptr);
  out.record.fingerprint = best.fingerprint();
  evaluate_into(out, best, data_.trained_directions(), false);
  evaluate_into(out, best, data_.zero_directions(), true);
  return out;
}

StageOutput Runner::run_bt(const StageSpec& st) {
  StageOutput out;
  out.spec = &st;
  const int iteration = std::stoi(st.arg("iteration", "1"));
  out.row = st.arg("row", "+BT" + std::to_string(iteration));
  const auto mode = synthesis::share_mode_from_string(st.arg("mode", "equal_shares"));
  const auto generator = load_model(st.arg("generator"));
  const auto cfg = multilingual_config();
  if (!(generator.config == cfg)) throw StateError("stage " + st.label + ": generator configuration differs");

  synthesis::GenerateOptions gopts;
  gopts.forward_translation = st.arg("ft", "false") == "true";
  gopts.batch_rows = spec_.eval_batch_rows;

  std::vector<synthesis::SyntheticCorpus> parts;
  for (const auto& lang : data_.languages) {
    const auto it = data_.mono.find(lang);
    if (it == data_.mono.end() || it->second.empty()) continue;
    const auto seed = mix_seed(stage_seed(st.label), salt_of("bt/" + lang.code()));
    if (iteration == 1) {
      const auto plan = synthesis::plan_shares(it->second[0], data_.languages, mode, seed);
      parts.push_back(synthesis::generate(generator, subword_, it->second[0], plan, gopts, 1));
    } else {
      const MonoCorpus empty{lang, {}};
      const auto& second = it->second.size() > 1 ? it->second[1] : empty;
      parts.push_back(synthesis::iterate(&generator, subword_, it->second[0], second, data_.languages, mode, seed, gopts));
    }
    log(st.label + ": synthesized " + std::to_string(parts.back().pairs.size()) + " pairs from " + lang.code());
  }
  if (parts.empty()) throw DataError("stage " + st.label + ": no monolingual data");
  const auto fresh = synthesis::combine(parts);
  synthesis::save(stage_dir(st.label) / "synthetic", fresh);

  std::vector<synthesis::SyntheticCorpus> synthetic;
  if (iteration == 2) synthetic.push_back(synthesis::load(stage_dir(st.arg("generator")) / "synthetic"));
  synthetic.push_back(fresh);
  const auto human = human_multilingual();
  auto merged = synthesis::merge(human, synthetic);
  out.merge_counts = merged.counts;

  const auto tc = stage_train_config(st);
  const auto init_ref = st.arg("init", st.arg("generator"));
  nmt::Parameters<float> init;
  std::string parent_fp;
  if (init_ref == "none") {
    init = nmt::init_params<float>(cfg, tc.seed);
  } else {
    const auto parent = load_model(init_ref);
    init = nmt::init_from(parent, cfg);
    parent_fp = parent.fingerprint();
  }
  out.record.init_hash = params_hash(init);
  const auto valid = multilingual_valid();
  const auto best = train_model(stage_dir(st.label), st.label, cfg, std::move(init), merged.corpora, valid, tc,
                                parent_fp, false, nullptr);
  out.record.fingerprint = best.fingerprint();
  evaluate_into(out, best, data_.trained_directions(), false);
  evaluate_into(out, best, data_.zero_directions(), true);
  return out;
}

StageOutput Runner::run_finetune(const StageSpec& st) {
  StageOutput out;
  out.spec = &st;
  const auto d = Direction::parse(st.arg("direction"));
  out.row = st.arg("row", st.arg("parent") + " + fine-tune " + d.str());
  const auto parent = load_model(st.arg("parent"));
  const auto cfg = parent.config;
  const auto tc = stage_train_config(st);
  out.record.init_hash = params_hash(parent.params);
  const std::vector<ParallelCorpus> train{data_.train_set(d)};
  const std::vector<ParallelCorpus> valid{data_.valid_set(d)};
  const auto best =
      train_model(stage_dir(st.label), st.label, cfg, {}, train, valid, tc, parent.fingerprint(), true, &parent);
  out.record.fingerprint = best.fingerprint();
  const std::vector<Direction> one{d};
  evaluate_into(out, best, one, false);
  return out;
}

StageOutput Runner::run_transfer(const StageSpec& st) {
  StageOutput out;
  out.spec = &st;
  const auto d = Direction::parse(st.arg("direction"));
  out.row = st.arg("row", "transfer " + st.arg("parent") + " -> " + d.str());
  const auto parent = load_model(st.arg("parent"));
  ModelConfig cfg = parent.config;
  if (cfg.factor_vocab() == 2) {
    cfg.languages = {d.src, d.tgt};
  } else {
    cfg.factor_of(d.tgt);
  }
  cfg.validate();
  auto init = nmt::init_from(parent, cfg);
  out.record.init_hash = params_hash(init);
  const auto tc = stage_train_config(st);
  const std::vector<ParallelCorpus> train{data_.train_set(d)};
  const std::vector<ParallelCorpus> valid{data_.valid_set(d)};
  const auto best = train_model(stage_dir(st.label), st.label, cfg, std::move(init), train, valid, tc,
                                parent.fingerprint(), false, nullptr);
  out.record.fingerprint = best.fingerprint();
  const std::vector<Direction> one{d};
  evaluate_into(out, best, one, false);
  return out;
}

void Runner::save_stage(const StageOutput& out) const {
  const auto dir = stage_dir(out.spec->label);
  fs::create_directories(dir);
  write_file(dir / "scores.tsv", scores_tsv(out.scores));
  write_file(dir / "zero_scores.tsv", scores_tsv(out.zero_scores));
  KeyValue meta;
  meta.set("row", out.row);
  meta.set("fingerprint", out.record.fingerprint.empty() ? "-" : out.record.fingerprint);
  meta.set("init_hash", out.record.init_hash.empty() ? "-" : out.record.init_hash);
  for (const auto& [d, v] : out.on_target) meta.set("on_target." + d, num17(v));
  for (const auto& c : out.merge_counts) {
    meta.set("merge." + c.direction.str(), std::to_string(c.human) + " " + std::to_string(c.synthetic));
  }
  meta.save(dir / "stage.txt");
}

StageOutput Runner::load_stage(const StageSpec& st) const {
  StageOutput out;
  out.spec = &st;
  const auto dir = stage_dir(st.label);
  const auto meta = KeyValue::load(dir / "stage.txt");
  out.row = meta.require("row");
  const auto dash = [](std::string v) { return v == "-" ? std::string() : v; };
  out.record.fingerprint = dash(meta.require("fingerprint"));
  out.record.init_hash = dash(meta.require("init_hash"));
  out.scores = scores_from_tsv(dir / "scores.tsv");
  out.zero_scores = scores_from_tsv(dir / "zero_scores.tsv");
  for (const auto& k : meta.keys_with_prefix("on_target.")) {
    out.on_target[k.substr(10)] = std::stod(*meta.get(k));
  }
  for (const auto& k : meta.keys_with_prefix("merge.")) {
    const std::string line = *meta.get(k);
    const auto f = split_ws(line);
    if (f.size() != 2) throw StateError("malformed stage file " + (dir / "stage.txt").string());
    out.merge_counts.push_back(
        {Direction::parse(k.substr(6)), std::stoull(std::string(f[0])), std::stoull(std::string(f[1]))});
  }
  out.record.reused = true;
  return out;
}

void Runner::write_reports(const std::vector<StageOutput>& outs, RunResult& result) const {
  const auto rep = dir_ / "report";
  fs::create_directories(rep);
  const auto columns = data_.trained_directions();
  const auto low = data_.low_directions();

  for (const auto& o : outs) {
    if (is_table_row(o.spec->kind)) result.rows.push_back(metrics::aggregate(o.row, o.scores, low));
  }
  write_file(rep / "report.tsv", metrics::report_tsv(result.rows, columns, spec_.name));
  write_file(rep / "report.json", metrics::report_json(result.rows, columns, spec_.name));
  write_file(rep / "compare.tsv", result.rows.empty() ? std::string() : metrics::comparison_tsv(metrics::compare(result.rows)));

  // Directions singled out by fine-tune and transfer stages, with every
  // model that was scored on them.
  std::vector<Direction> focus;
  for (const auto& o : outs) {
    if (o.spec->kind == "finetune" || o.spec->kind == "transfer") {
      const auto d = Direction::parse(o.spec->arg("direction"));
      if (std::find(focus.begin(), focus.end(), d) == focus.end()) focus.push_back(d);
    }
  }
  std::ostringstream f;
  f << "direction\tmodel\tBLEU\tchrF\n";
  for (const auto& d : focus) {
    for (const auto& o : outs) {
      for (const auto& s : o.scores) {
        if (s.direction == d) {
          f << d.str() << '\t' << o.row << '\t' << metrics::format_fixed(s.bleu, 1) << '\t'
            << metrics::format_fixed(s.chrf, 3) << '\n';
        }
      }
    }
  }
  write_file(rep / "focus.tsv", f.str());

  std::ostringstream z;
  z << "model\tdirection\tBLEU\tchrF\ton_target\n";
  for (const auto& o : outs) {
    for (const auto& s : o.zero_scores) {
      const auto it = o.on_target.find(s.direction.str());
      z << o.row << '\t' << s.direction.str() << '\t' << metrics::format_fixed(s.bleu, 1) << '\t'
        << metrics::format_fixed(s.chrf, 3) << '\t'
        << (it == o.on_target.end() ? std::string("-") : metrics::format_fixed(it->second, 3)) << '\n';
    }
  }
  write_file(rep / "zero_shot.tsv", z.str());

  std::ostringstream sy;
  sy << "model\tdirection\thuman\tsynthetic\n";
  for (const auto& o : outs) {
    for (const auto& c : o.merge_counts) {
      sy << o.row << '\t' << c.direction.str() << '\t' << c.human << '\t' << c.synthetic << '\n';
    }
  }
  write_file(rep / "synthetic.tsv", sy.str());
  fs::copy_file(dir_ / "data" / "sizes.tsv", rep / "sizes.tsv", fs::copy_options::overwrite_existing);
  result.report_dir = rep;
}

RunResult Runner::run() {
  spec_.validate();
  if (!opts_.until.empty() &&
      std::none_of(spec_.stages.begin(), spec_.stages.end(), [&](const StageSpec& s) { return s.label == opts_.until; })) {
    throw ConfigError("no stage labelled '" + opts_.until + "'");
  }
  fs::create_directories(dir_);
  const auto state_path = dir_ / "state.txt";
  const auto spec_hash = spec_.hash();
  if (fs::exists(state_path)) {
    if (!opts_.resume) {
      throw StateError(dir_.string() + " already holds a run; pass --resume to continue it");
    }
    state_ = KeyValue::load(state_path);
    if (state_.get_or("spec_hash", "") != spec_hash) {
      throw StateError(dir_.string() + " holds a run of a different spec (hash " + state_.get_or("spec_hash", "?") +
                       ", this spec " + spec_hash + ")");
    }
  } else {
    state_.set("spec_hash", spec_hash);
    spec_.to_kv().save(dir_ / "spec.txt");
    save_state();
  }

  std::ostringstream timings;
  timings << "stage\tseconds\treused\n";
  const auto t_start = std::chrono::steady_clock::now();
  auto t_mark = t_start;
  const auto lap = [&](const std::string& what, bool reused) {
    const auto now = std::chrono::steady_clock::now();
    timings << what << '\t' << std::chrono::duration<double>(now - t_mark).count() << '\t' << (reused ? 1 : 0) << '\n';
    t_mark = now;
  };

  // data
  if (state_.get_or("data", "") == "done") {
    data_ = load_prepared(dir_ / "data");
    lap("data", true);
  } else {
    const auto manifest = CorpusManifest::load(spec_.manifest);
    data_ = prepare(manifest, spec_.prepare, dir_ / "data");
    state_.set("data", "done");
    state_.set("data_hash", data_.hash());
    save_state();
    lap("data", false);
  }
  log("data: " + std::to_string(data_.pairs.size()) + " pairs, hash " + data_.hash());
  if (data_.toy_spec) {
    const auto kv = KeyValue::load(*data_.toy_spec);
    world_.emplace(toy::ToyLanguageSpec::from_kv(kv), kv.get_u64("seed", 0));
  }

  // subword model, shared by every language
  const auto bpe_path = dir_ / "bpe.model";
  if (state_.get_or("bpe", "") == "done") {
    subword_ = SubwordModel::load(bpe_path);
    lap("bpe", true);
  } else {
    std::vector<std::string> texts;
    for (const auto& p : data_.pairs) {
      for (const auto& sp : p.train.pairs) {
        texts.push_back(sp.src);
        texts.push_back(sp.tgt);
      }
    }
    for (const auto& [lang, sets] : data_.mono) {
      for (const auto& m : sets) texts.insert(texts.end(), m.lines.begin(), m.lines.end());
    }
    subword_ = SubwordModel::train(texts, spec_.bpe_vocab, spec_.seed);
    subword_.save(bpe_path);
    state_.set("bpe", "done");
    save_state();
    lap("bpe", false);
  }
  log("bpe: " + std::to_string(subword_.vocab_size()) + " tokens");

  std::vector<StageOutput> outs;
  RunResult result;
  for (const auto& st : spec_.stages) {
    const auto key = "stage." + st.label;
    if (state_.get_or(key, "") == "done") {
      outs.push_back(load_stage(st));
      log(st.label + ": reused");
      lap(st.label, true);
    } else {
      fs::remove_all(stage_dir(st.label));
      fs::create_directories(stage_dir(st.label));
      log(st.label + ": running " + st.kind);
      StageOutput o;
      if (st.kind == "baselines") {
        o = run_baselines(st);
      } else if (st.kind == "multilingual") {
        o = run_multilingual(st);
      } else if (st.kind == "bt") {
        o = run_bt(st);
      } else if (st.kind == "finetune") {
        o = run_finetune(st);
      } else {
        o = run_transfer(st);
      }
      save_stage(o);
      state_.set(key, "done");
      save_state();
      outs.push_back(std::move(o));
      lap(st.label, false);
    }
    auto& rec = outs.back().record;
    rec.label = st.label;
    rec.kind = st.kind;
    rec.row = outs.back().row;
    result.stages.push_back(rec);
    if (st.label == opts_.until) break;
  }
  write_reports(outs, result);
  timings << "total\t" << std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() << "\t0\n";
  write_file(dir_ / "timings.tsv", timings.str());
  return result;
}

}  // namespace

RunResult run(const ExperimentSpec& spec, const RunOptions& opts) {
  Runner r(spec, opts);
  return r.run();
}

}  // namespace lowmt::experiment
