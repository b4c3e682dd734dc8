#include "lowmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lowmt/util.hpp"

namespace lowmt::nmt {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "LOWMTCKP";
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(std::string_view s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void tensors(const Parameters<float>& p) {
    pod(static_cast<std::uint32_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& t = p.tensors[i];
      str(p.names[i]);
      pod(static_cast<std::uint32_t>(t.rows()));
      pod(static_cast<std::uint32_t>(t.cols()));
      out_.append(reinterpret_cast<const char*>(t.data()), sizeof(float) * static_cast<std::size_t>(t.size()));
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Parameters<float> tensors() {
    Parameters<float> p;
    const auto n = pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      p.names.push_back(str());
      const auto rows = pod<std::uint32_t>();
      const auto cols = pod<std::uint32_t>();
      const std::size_t bytes = sizeof(float) * static_cast<std::size_t>(rows) * cols;
      need(bytes);
      Matrix<float> t(rows, cols);
      std::memcpy(t.data(), in_.data() + pos_, bytes);
      pos_ += bytes;
      p.tensors.push_back(std::move(t));
    }
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string fingerprint(const ModelConfig& cfg, const Parameters<float>& params) {
  Fnv1a h;
  h.update(cfg.to_kv().serialize());
  for (std::size_t i = 0; i < params.size(); ++i) {
    h.update(params.names[i]);
    const auto& t = params.tensors[i];
    h.update(t.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
  }
  return h.hex();
}

std::string Checkpoint::fingerprint() const { return nmt::fingerprint(config, params); }

std::string Checkpoint::serialize() const {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kVersion);
  w.str(config.to_kv().serialize());
  w.pod(static_cast<std::int64_t>(step));
  w.pod(valid_ppl);
  w.pod(static_cast<std::uint8_t>(is_best));
  w.pod(static_cast<std::uint32_t>(ppl_history.size()));
  for (double p : ppl_history) w.pod(p);
  w.str(provenance.stage);
  w.str(provenance.parent_fingerprint);
  w.str(provenance.data_hash);
  w.tensors(params);
  w.pod(static_cast<std::uint8_t>(!optimizer.empty()));
  if (!optimizer.empty()) {
    w.pod(static_cast<std::int64_t>(optimizer.step));
    w.tensors(optimizer.m);
    w.tensors(optimizer.v);
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  std::string magic;
  for (std::size_t i = 0; i < kMagic.size(); ++i) magic += r.pod<char>();
  if (magic != kMagic) throw DataError("not a lowmt checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = ModelConfig::from_kv(KeyValue::parse(r.str(), "<checkpoint config>"));
  c.step = r.pod<std::int64_t>();
  c.valid_ppl = r.pod<double>();
  c.is_best = r.pod<std::uint8_t>() != 0;
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) c.ppl_history.push_back(r.pod<double>());
  c.provenance.stage = r.str();
  c.provenance.parent_fingerprint = r.str();
  c.provenance.data_hash = r.str();
  c.params = r.tensors();
  if (r.pod<std::uint8_t>() != 0) {
    c.optimizer.step = r.pod<std::int64_t>();
    c.optimizer.m = r.tensors();
    c.optimizer.v = r.tensors();
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint payload");
  const ParamLayout layout(c.config);
  if (c.params.size() != layout.specs.size()) throw DataError("checkpoint tensor count does not match its config");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  write_file(tmp, serialize());
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

Parameters<float> init_from(const Checkpoint& parent, const ModelConfig& cfg) {
  const ParamLayout layout(cfg);
  std::vector<std::string> bad;
  const std::size_t n = std::max(layout.specs.size(), parent.params.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= layout.specs.size()) {
      bad.push_back(parent.params.names[i] + " (absent in child)");
      continue;
    }
    const auto& s = layout.specs[i];
    if (i >= parent.params.size()) {
      bad.push_back(s.name + " (absent in parent)");
      continue;
    }
    const auto& t = parent.params.tensors[i];
    if (parent.params.names[i] != s.name || t.rows() != s.rows || t.cols() != s.cols) {
      bad.push_back(s.name + " [" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "] vs parent " +
                    parent.params.names[i] + " [" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]");
    }
  }
  if (!bad.empty()) {
    std::string msg = "transfer: " + std::to_string(bad.size()) + " tensor(s) mismatch:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
  return parent.params;
}

}  // namespace lowmt::nmt
