#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lowmt {

/// Ordered `key = value` document. Blank lines and lines starting with '#'
/// are ignored; keys are unique; values are trimmed.
class KeyValue {
 public:
  static KeyValue parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValue load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string require(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Keys beginning with `prefix`, in insertion order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::vector<std::string>& keys() const { return order_; }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace lowmt
