#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lowmt {

/// Byte-pair-encoding model shared by every language of an experiment.
///
/// Id layout: 0 <pad>, 1 <unk>, 2 <s>, 3 </s>, 4..259 one token per byte
/// value, 260 the word-boundary marker, then single characters, then merge
/// outputs in the order they were learned. A space in the input becomes the
/// marker on the following piece; a marker is also added in front of the
/// first piece and removed again by decode(). Characters outside the
/// vocabulary (and the literal marker character itself) are encoded as their
/// UTF-8 bytes, so decode(encode(s)) == s for every valid UTF-8 string.
class SubwordModel {
 public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;
  static constexpr int bos_id = 2;
  static constexpr int eos_id = 3;
  static constexpr int num_specials = 4;
  static constexpr int byte_base = 4;
  static constexpr int marker_id = byte_base + 256;
  static constexpr std::string_view marker = "\xE2\x96\x81";  // U+2581

  SubwordModel();

  /// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties to
  /// the lexicographically smallest pair) until `vocab_size` is reached or no
  /// pair occurs at least twice. Characters seen fewer than two times are
  /// left to byte fallback. `seed` is accepted for interface symmetry; the
  /// procedure itself is deterministic.
  static SubwordModel train(std::span<const std::string> texts, std::size_t vocab_size, std::uint64_t seed = 0);

  std::vector<int> encode(std::string_view text, bool append_eos = false) const;
  std::vector<std::string> encode_pieces(std::string_view text) const;
  /// Specials produce no text; malformed byte runs decode to U+FFFD.
  std::string decode(std::span<const int> ids) const;

  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  std::size_t requested_vocab_size() const noexcept { return requested_size_; }
  const std::string& token(int id) const;
  std::optional<int> id_of(std::string_view token) const;
  bool is_byte(int id) const noexcept { return id >= byte_base && id < byte_base + 256; }
  bool is_special(int id) const noexcept { return id >= 0 && id < num_specials; }
  const std::vector<std::pair<std::string, std::string>>& merges() const noexcept { return merges_; }
  const std::vector<std::string>& chars() const noexcept { return chars_; }

  std::string serialize() const;
  static SubwordModel deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SubwordModel load(const std::filesystem::path& path);
  std::string fingerprint() const;

  bool operator==(const SubwordModel& o) const {
    return chars_ == o.chars_ && merges_ == o.merges_ && requested_size_ == o.requested_size_;
  }

 private:
  void rebuild();
  std::vector<int> initial_symbols(const std::vector<std::string>& chunk_units) const;
  void apply_merges(std::vector<int>& symbols) const;

  std::size_t requested_size_ = 0;
  std::vector<std::string> chars_;
  std::vector<std::pair<std::string, std::string>> merges_;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  // (left id, right id) -> (rank, output id)
  std::unordered_map<std::uint64_t, std::pair<int, int>> merge_table_;
};

namespace subword {

/// Splits text into pre-tokenization chunks. Each chunk is a list of units:
/// the marker (for a preceding space) followed by single characters or, for
/// malformed input, single bytes.
std::vector<std::vector<std::string>> chunk(std::string_view text);

}  // namespace subword

}  // namespace lowmt
