#include "lowmt/keyvalue.hpp"

#include <charconv>

#include "lowmt/util.hpp"

namespace lowmt {

KeyValue KeyValue::parse(const std::string& text, const std::string& origin) {
  KeyValue kv;
  kv.origin_ = origin;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.has(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.set(key, std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValue KeyValue::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing file " + path.string());
  return parse(read_file(path), path.string());
}

void KeyValue::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = value;
}

bool KeyValue::has(const std::string& key) const { return values_.count(key) != 0; }

std::optional<std::string> KeyValue::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValue::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return *v;
}

std::string KeyValue::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

long long KeyValue::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer: " + *v);
  }
  return out;
}

std::uint64_t KeyValue::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an unsigned 64-bit integer: " + *v);
  }
  return out;
}

double KeyValue::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not a number: " + *v);
  }
}

bool KeyValue::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: " + *v);
}

std::vector<std::string> KeyValue::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto v = get(key);
  if (!v) return out;
  for (auto w : split_ws(*v)) out.emplace_back(w);
  return out;
}

std::vector<std::string> KeyValue::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& k : order_) {
    if (starts_with(k, prefix)) out.push_back(k);
  }
  return out;
}

std::string KeyValue::serialize() const {
  std::string out;
  for (const auto& k : order_) {
    out += k;
    out += " = ";
    out += values_.at(k);
    out += '\n';
  }
  return out;
}

void KeyValue::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

}  // namespace lowmt
