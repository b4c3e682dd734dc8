// lowmt command-line front end.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "lowmt/experiment.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/serve.hpp"
#include "lowmt/synthesis.hpp"
#include "lowmt/toy.hpp"
#include "lowmt/util.hpp"

namespace fs = std::filesystem;
using namespace lowmt;

namespace {

void log_line(const std::string& m) { std::cerr << m << std::endl; }

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

experiment::ExperimentSpec load_spec(const std::string& spec_path, const std::string& manifest,
                                     std::optional<std::uint64_t> seed) {
  experiment::ExperimentSpec spec;
  if (!spec_path.empty()) {
    spec = experiment::ExperimentSpec::load(spec_path);
  } else if (!manifest.empty()) {
    spec = experiment::ExperimentSpec::toy_grid(manifest);
  } else {
    throw ConfigError("pass --spec or --manifest");
  }
  if (!manifest.empty()) spec.manifest = manifest;
  if (seed) {
    // keep derived seeds consistent with a spec file that names this seed
    auto kv = spec.to_kv();
    kv.set("seed", std::to_string(*seed));
    spec = experiment::ExperimentSpec::parse(kv, fs::current_path());
  }
  spec.validate();
  return spec;
}

void print_scores(const std::vector<metrics::DirectionScore>& scores, const std::string& test_set) {
  std::cout << "direction\tBLEU\tchrF\n";
  for (const auto& s : scores) {
    std::cout << s.direction.str() << '\t' << metrics::format_fixed(s.bleu, 1) << '\t'
              << metrics::format_fixed(s.chrf, 3) << '\n';
  }
  for (const auto& s : scores) {
    std::cout << metrics::bleu_signature(s.direction, test_set) << '\n'
              << metrics::chrf_signature(s.direction, test_set) << '\n';
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Multilingual low-resource NMT toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool resume = false;
  app.add_option("--seed", seed, "Override the seed");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_flag("--resume", resume, "Continue a run in an existing output directory");

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Generate the toy language suite");
  std::string toy_spec_path;
  gen->add_option("--spec", toy_spec_path, "Toy language spec (key-value); default is the desk preset");

  // prepare
  auto* prep = app.add_subcommand("prepare", "Clean, deduplicate and split a corpus manifest");
  std::string spec_path, manifest;
  prep->add_option("--spec", spec_path, "Experiment spec (for cleaning and split settings)");
  prep->add_option("--manifest", manifest, "Corpus manifest");

  // train
  auto* train = app.add_subcommand("train", "Run a spec up to and including one stage");
  std::string stage;
  train->add_option("--spec", spec_path, "Experiment spec");
  train->add_option("--manifest", manifest, "Corpus manifest (toy grid spec when --spec is absent)");
  train->add_option("--stage", stage, "Stage label to stop after")->required();

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "Back-translate monolingual text with a model");
  std::string model_path, bpe_path, mono_path, lang, mode = "equal_shares", second_path;
  bool ft = false;
  int iteration = 1;
  synth->add_option("--model", model_path, "Checkpoint")->required();
  synth->add_option("--bpe", bpe_path, "Subword model")->required();
  synth->add_option("--mono", mono_path, "Monolingual text, one sentence per line")->required();
  synth->add_option("--second", second_path, "Second monolingual set (iteration 2)");
  synth->add_option("--lang", lang, "Language of the monolingual text")->required();
  synth->add_option("--mode", mode, "equal_shares or uniform_random");
  synth->add_option("--iteration", iteration, "1 or 2")->check(CLI::Range(1, 2));
  synth->add_flag("--ft", ft, "Also emit forward-translated pairs");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a model on test sets");
  std::string data_dir, test_name = "test";
  std::vector<std::string> directions;
  eval->add_option("--model", model_path, "Checkpoint")->required();
  eval->add_option("--bpe", bpe_path, "Subword model")->required();
  eval->add_option("--data", data_dir, "Prepared data directory")->required();
  eval->add_option("--direction", directions, "Directions to score (default: every trained direction)");
  eval->add_option("--test-name", test_name, "Test-set name used in signatures");

  // run
  auto* run = app.add_subcommand("run", "Run every stage of an experiment spec");
  run->add_option("--spec", spec_path, "Experiment spec");
  run->add_option("--manifest", manifest, "Corpus manifest (toy grid spec when --spec is absent)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Delta table between report rows");
  std::vector<std::string> reports;
  std::size_t baseline = 0;
  cmp->add_option("reports", reports, "report.json files; rows are concatenated")->required();
  cmp->add_option("--baseline", baseline, "Index of the baseline row");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP translation service");
  serve::ServeOptions sopts;
  sopts.host = env_or("LOWMT_HOST", sopts.host);
  sopts.port = std::stoi(env_or("LOWMT_PORT", std::to_string(sopts.port)));
  sopts.max_chars = std::stoul(env_or("LOWMT_MAX_CHARS", std::to_string(sopts.max_chars)));
  std::string request_log;
  srv->add_option("--model", model_path, "Checkpoint")->required();
  srv->add_option("--bpe", bpe_path, "Subword model")->required();
  srv->add_option("--host", sopts.host, "Bind address (LOWMT_HOST)");
  srv->add_option("--port", sopts.port, "Port, 0 for any (LOWMT_PORT)");
  srv->add_option("--max-chars", sopts.max_chars, "Maximum characters per request (LOWMT_MAX_CHARS)");
  srv->add_option("--max-in-flight", sopts.max_in_flight, "Concurrent translations before 503");
  srv->add_option("--cors-origin", sopts.cors_origin, "Access-Control-Allow-Origin value");
  srv->add_option("--request-log", request_log, "Append requests and translations as JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code_for(ErrorKind::config);
  }
  const auto need_out = [&] {
    if (out_dir.empty()) throw ConfigError("--out-dir is required");
    return fs::path(out_dir);
  };

  if (*gen) {
    const auto spec = toy_spec_path.empty() ? toy::ToyLanguageSpec::desk_default()
                                            : toy::ToyLanguageSpec::from_kv(KeyValue::load(toy_spec_path));
    const auto path = toy::generate_toy_suite(spec, seed.value_or(1), need_out());
    std::cout << path.string() << '\n';
  } else if (*prep) {
    experiment::PrepareConfig cfg;
    if (!spec_path.empty() || seed) {
      cfg = load_spec(spec_path, manifest, seed).prepare;
    }
    if (manifest.empty()) {
      if (spec_path.empty()) throw ConfigError("pass --manifest or --spec");
      manifest = experiment::ExperimentSpec::load(spec_path).manifest.string();
    }
    const auto data = experiment::prepare(CorpusManifest::load(manifest), cfg, need_out());
    std::cout << read_file(need_out() / "sizes.tsv");
  } else if (*train || *run) {
    const auto spec = load_spec(spec_path, manifest, seed);
    experiment::RunOptions opts;
    opts.out_dir = need_out();
    opts.resume = resume;
    opts.log = log_line;
    if (*train) opts.until = stage;
    const auto result = experiment::run(spec, opts);
    std::cout << read_file(result.report_dir / "report.tsv");
  } else if (*synth) {
    const auto model = nmt::Checkpoint::load(model_path);
    const auto subword = SubwordModel::load(bpe_path);
    const LangId l(lang);
    const auto first = corpus::load_mono(mono_path, l);
    const auto smode = synthesis::share_mode_from_string(mode);
    synthesis::GenerateOptions gopts;
    gopts.forward_translation = ft;
    synthesis::SyntheticCorpus out;
    if (iteration == 1) {
      const auto plan = synthesis::plan_shares(first, model.config.languages, smode, seed.value_or(1));
      out = synthesis::generate(model, subword, first, plan, gopts, 1);
    } else {
      const auto second = second_path.empty() ? MonoCorpus{l, {}} : corpus::load_mono(second_path, l);
      out = synthesis::iterate(&model, subword, first, second, model.config.languages, smode, seed.value_or(1), gopts);
    }
    synthesis::save(need_out(), out);
    std::cout << out.pairs.size() << " pairs (" << out.dropped_empty << " empty, " << out.failed << " failed)\n";
  } else if (*eval) {
    const auto model = nmt::Checkpoint::load(model_path);
    const auto subword = SubwordModel::load(bpe_path);
    const auto data = experiment::load_prepared(data_dir);
    std::vector<Direction> ds;
    for (const auto& d : directions) ds.push_back(Direction::parse(d));
    if (ds.empty()) ds = data.trained_directions();
    std::vector<ParallelCorpus> tests;
    for (const auto& d : ds) tests.push_back(data.test_set(d));
    const auto ev = experiment::evaluate_model(model, subword, tests);
    print_scores(ev.scores, test_name);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      for (const auto& [d, hyps] : ev.hypotheses) write_lines(fs::path(out_dir) / (d + ".hyp.txt"), hyps);
    }
  } else if (*cmp) {
    std::vector<metrics::ScoreReport> rows;
    for (const auto& r : reports) {
      auto part = metrics::reports_from_json(read_file(r));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    if (baseline >= rows.size()) throw ConfigError("--baseline " + std::to_string(baseline) + " is out of range");
    std::cout << metrics::comparison_tsv(metrics::compare(rows, baseline));
  } else if (*srv) {
    if (!request_log.empty()) sopts.request_log = request_log;
    serve::Service service(nmt::Checkpoint::load(model_path), SubwordModel::load(bpe_path), sopts);
    service.listen([&](int port) {
      std::cerr << "serving model " << service.fingerprint() << " on " << sopts.host << ":" << port << std::endl;
    });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::internal);
  }
}
