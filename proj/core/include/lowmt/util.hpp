#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lowmt {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind { config, data, numeric, range, state, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};
struct StateError : Error {
  explicit StateError(const std::string& what) : Error(ErrorKind::state, what) {}
};

int exit_code_for(ErrorKind kind) noexcept;

// ---------------------------------------------------------------------------
// UTF-8

/// Offset of the first byte that does not start a well-formed UTF-8
/// sequence, or nullopt when the whole string is valid.
std::optional<std::size_t> utf8_invalid_offset(std::string_view s);

/// Splits valid UTF-8 into one string per code point.
std::vector<std::string> utf8_chars(std::string_view s);

/// Length in bytes of the well-formed sequence starting at s[pos], or 0.
std::size_t utf8_sequence_length(std::string_view s, std::size_t pos);

void append_utf8(std::string& out, char32_t cp);

/// Unicode canonical composition (NFC).
std::string nfc(std::string_view s);

// ---------------------------------------------------------------------------
// Strings

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_ws(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);
std::size_t word_count(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// ---------------------------------------------------------------------------
// Randomness. Everything seeded flows through these helpers so results do not
// depend on the standard library's distribution implementations.

using Rng = std::mt19937_64;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::size_t uniform_index(Rng& rng, std::size_t n);
double uniform_real(Rng& rng);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// Hashing

class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update(const void* data, std::size_t n);
  template <typename T>
  void update_pod(const T& v) {
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

}  // namespace lowmt
