#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lowmt/model.hpp"

namespace lowmt::nmt {

struct AdamState {
  std::int64_t step = 0;
  Parameters<float> m;
  Parameters<float> v;

  bool empty() const { return m.tensors.empty(); }
  bool operator==(const AdamState&) const = default;
};

/// Where a checkpoint came from.
struct Provenance {
  std::string stage;
  std::string parent_fingerprint;  // empty for randomly initialized models
  std::string data_hash;

  bool operator==(const Provenance&) const = default;
};

/// Binary container, all integers and floats little-endian:
///
///   "LOWMTCKP" u32 version
///   str config (key-value text)
///   i64 step, f64 valid_ppl, u8 is_best
///   u32 n, f64 x n          validation perplexity history
///   str stage, str parent, str data_hash
///   u32 tensors, then per tensor: str name, u32 rows, u32 cols, f32 x rows*cols
///   u8 has_optimizer [i64 adam_step, m tensors, v tensors]
///
/// where str is u32 length + bytes.
struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  AdamState optimizer;
  std::int64_t step = 0;
  double valid_ppl = 0;
  bool is_best = false;
  std::vector<double> ppl_history;
  Provenance provenance;

  /// Hash of the configuration and parameter bytes only.
  std::string fingerprint() const;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;
};

std::string fingerprint(const ModelConfig& cfg, const Parameters<float>& params);

/// Copies the parent's parameters verbatim. Throws ConfigError listing every
/// tensor whose name or shape differs from what `cfg` requires.
Parameters<float> init_from(const Checkpoint& parent, const ModelConfig& cfg);

}  // namespace lowmt::nmt
