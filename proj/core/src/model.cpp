#include "lowmt/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "lowmt/subword.hpp"
#include "lowmt/util.hpp"

namespace lowmt::nmt {

int ModelConfig::factor_of(const LangId& lang) const {
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (languages[i] == lang) return static_cast<int>(i);
  }
  throw RangeError("language '" + lang.code() + "' is not in the model's factor vocabulary");
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (enc_layers <= 0 || dec_layers <= 0) fail("layer counts must be positive");
  if (heads <= 0 || d_model <= 0 || d_ff <= 0) fail("heads, d_model and d_ff must be positive");
  if (d_model % heads != 0) fail("d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(heads));
  if (token_vocab <= SubwordModel::num_specials) fail("token_vocab too small");
  if (factor_vocab() < 2) fail("factor vocabulary needs at least 2 languages");
  if (factor_dim < 0 || factor_dim >= d_model) fail("factor_dim must lie in [0, d_model)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0,1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must lie in [0,1)");
  if (max_len <= 1) fail("max_len must exceed 1");
}

KeyValue ModelConfig::to_kv() const {
  KeyValue kv;
  kv.set("enc_layers", std::to_string(enc_layers));
  kv.set("dec_layers", std::to_string(dec_layers));
  kv.set("heads", std::to_string(heads));
  kv.set("d_model", std::to_string(d_model));
  kv.set("d_ff", std::to_string(d_ff));
  kv.set("token_vocab", std::to_string(token_vocab));
  std::string langs;
  for (const auto& l : languages) langs += (langs.empty() ? "" : " ") + l.code();
  kv.set("languages", langs);
  kv.set("factor_dim", std::to_string(factor_dim));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", dropout);
  kv.set("dropout", buf);
  std::snprintf(buf, sizeof buf, "%.17g", label_smoothing);
  kv.set("label_smoothing", buf);
  kv.set("max_len", std::to_string(max_len));
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValue& kv) {
  ModelConfig c;
  c.enc_layers = static_cast<int>(kv.get_int("enc_layers", c.enc_layers));
  c.dec_layers = static_cast<int>(kv.get_int("dec_layers", c.dec_layers));
  c.heads = static_cast<int>(kv.get_int("heads", c.heads));
  c.d_model = static_cast<int>(kv.get_int("d_model", c.d_model));
  c.d_ff = static_cast<int>(kv.get_int("d_ff", c.d_ff));
  c.token_vocab = static_cast<int>(kv.get_int("token_vocab", c.token_vocab));
  for (const auto& code : kv.get_list("languages")) c.languages.emplace_back(code);
  c.factor_dim = static_cast<int>(kv.get_int("factor_dim", c.factor_dim));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.label_smoothing = kv.get_double("label_smoothing", c.label_smoothing);
  c.max_len = static_cast<int>(kv.get_int("max_len", c.max_len));
  return c;
}

std::string ModelConfig::fingerprint() const {
  Fnv1a h;
  h.update(to_kv().serialize());
  return h.hex();
}

ModelConfig ModelConfig::paper_preset(int token_vocab, std::vector<LangId> languages) {
  ModelConfig c;
  c.enc_layers = 6;
  c.dec_layers = 6;
  c.heads = 8;
  c.d_model = 512;
  c.d_ff = 2048;
  c.token_vocab = token_vocab;
  c.languages = std::move(languages);
  c.factor_dim = 8;
  c.max_len = 256;
  return c;
}

ParamLayout::ParamLayout(const ModelConfig& cfg) : enc_layers(cfg.enc_layers), dec_layers(cfg.dec_layers) {
  const int d = cfg.d_model, ff = cfg.d_ff, V = cfg.token_vocab;
  specs.push_back({"embed.source", V, cfg.token_dim()});
  specs.push_back({"embed.factor", cfg.factor_vocab(), cfg.factor_dim});
  specs.push_back({"embed.target", V, d});
  const auto ln = [&](const std::string& p) {
    specs.push_back({p + ".gain", 1, d});
    specs.push_back({p + ".bias", 1, d});
  };
  const auto attn = [&](const std::string& p) {
    for (const char* w : {"q", "k", "v", "o"}) {
      specs.push_back({p + ".w" + w, d, d});
      specs.push_back({p + ".b" + w, 1, d});
    }
  };
  const auto ffn = [&](const std::string& p) {
    specs.push_back({p + ".w1", d, ff});
    specs.push_back({p + ".b1", 1, ff});
    specs.push_back({p + ".w2", ff, d});
    specs.push_back({p + ".b2", 1, d});
  };
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    ln(p + ".norm1");
    attn(p + ".self");
    ln(p + ".norm2");
    ffn(p + ".ffn");
  }
  ln("encoder.norm");
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    ln(p + ".norm1");
    attn(p + ".self");
    ln(p + ".norm2");
    attn(p + ".cross");
    ln(p + ".norm3");
    ffn(p + ".ffn");
  }
  ln("decoder.norm");
  specs.push_back({"output.weight", d, V});
  specs.push_back({"output.bias", 1, V});
}

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(cfg.d_model), ff = static_cast<std::size_t>(cfg.d_ff);
  const std::size_t V = static_cast<std::size_t>(cfg.token_vocab), F = static_cast<std::size_t>(cfg.factor_vocab());
  const std::size_t f = static_cast<std::size_t>(cfg.factor_dim);
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * ff + ff + ff * d + d;
  const std::size_t norm = 2 * d;
  const std::size_t enc_layer = 2 * norm + attn + ffn;
  const std::size_t dec_layer = 3 * norm + 2 * attn + ffn;
  return V * (d - f) + F * f + V * d + static_cast<std::size_t>(cfg.enc_layers) * enc_layer + norm +
         static_cast<std::size_t>(cfg.dec_layers) * dec_layer + norm + d * V + V;
}

template <typename T>
std::size_t Parameters<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename T>
bool Parameters<T>::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

template <typename T>
Parameters<T> Parameters<T>::zeros_like() const {
  Parameters out;
  out.names = names;
  for (const auto& t : tensors) out.tensors.push_back(Matrix<T>::Zero(t.rows(), t.cols()));
  return out;
}

template <typename T>
bool Parameters<T>::operator==(const Parameters& o) const {
  if (names != o.names || tensors.size() != o.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = o.tensors[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (a.size() && std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.size())) != 0) return false;
  }
  return true;
}

template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamLayout layout(cfg);
  Rng rng(seed);
  Parameters<T> p;
  for (std::size_t i = 0; i < layout.specs.size(); ++i) {
    const auto& s = layout.specs[i];
    p.names.push_back(s.name);
    Matrix<T> m(s.rows, s.cols);
    const bool is_gain = s.name.ends_with(".gain");
    const bool is_vector = s.rows == 1;
    const bool is_embedding = starts_with(s.name, "embed.");
    if (is_gain) {
      m.setOnes();
    } else if (is_vector) {
      m.setZero();
    } else {
      const double a = is_embedding ? std::sqrt(3.0 / cfg.d_model) : std::sqrt(6.0 / (s.rows + s.cols));
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>((2.0 * uniform_real(rng) - 1.0) * a);
    }
    p.tensors.push_back(std::move(m));
  }
  return p;
}

template <typename Ptr>
static FactoredBatch build_batch(std::span<Ptr> examples) {
  const auto get = [](const Ptr& e) -> const Example& {
    if constexpr (std::is_pointer_v<std::remove_cv_t<Ptr>>) return *e; else return e;
  };
  FactoredBatch b;
  b.batch = static_cast<int>(examples.size());
  for (const auto& e : examples) {
    b.src_len = std::max(b.src_len, static_cast<int>(get(e).src.size()) + 1);
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(get(e).tgt.size()) + 1);
  }
  const auto B = static_cast<std::size_t>(b.batch);
  b.src_ids.assign(B * b.src_len, SubwordModel::pad_id);
  b.src_mask.assign(B * b.src_len, 0);
  b.tgt_in.assign(B * b.tgt_len, SubwordModel::pad_id);
  b.tgt_out.assign(B * b.tgt_len, SubwordModel::pad_id);
  b.tgt_mask.assign(B * b.tgt_len, 0);
  for (std::size_t i = 0; i < B; ++i) {
    const Example& e = get(examples[i]);
    const std::size_t so = i * b.src_len, to = i * b.tgt_len;
    for (std::size_t k = 0; k < e.src.size(); ++k) {
      b.src_ids[so + k] = e.src[k];
      b.src_mask[so + k] = 1;
    }
    b.src_ids[so + e.src.size()] = SubwordModel::eos_id;
    b.src_mask[so + e.src.size()] = 1;
    b.tgt_in[to] = SubwordModel::bos_id;
    for (std::size_t k = 0; k < e.tgt.size(); ++k) {
      b.tgt_in[to + k + 1] = e.tgt[k];
      b.tgt_out[to + k] = e.tgt[k];
    }
    b.tgt_out[to + e.tgt.size()] = SubwordModel::eos_id;
    for (std::size_t k = 0; k <= e.tgt.size(); ++k) b.tgt_mask[to + k] = 1;
    b.src_factor.push_back(e.factor);
    b.word_count += e.words;
    b.token_count += e.tgt.size() + 1;
    b.sentence_ids.push_back(e.id);
  }
  return b;
}

FactoredBatch make_batch(std::span<const Example> examples) { return build_batch(examples); }
FactoredBatch make_batch(std::span<const Example* const> examples) { return build_batch(examples); }

template <typename T>
Matrix<T> sinusoidal_positions(int max_len, int d) {
  Matrix<T> pe(max_len, d);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      pe(pos, i) = static_cast<T>(std::sin(pos * freq));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(pos * freq));
    }
  }
  return pe;
}

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<float> init_params<float>(const ModelConfig&, std::uint64_t);
template Parameters<double> init_params<double>(const ModelConfig&, std::uint64_t);
template Matrix<float> sinusoidal_positions<float>(int, int);
template Matrix<double> sinusoidal_positions<double>(int, int);

}  // namespace lowmt::nmt
