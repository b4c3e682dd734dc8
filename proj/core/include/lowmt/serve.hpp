#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lowmt/checkpoint.hpp"
#include "lowmt/decoding.hpp"
#include "lowmt/subword.hpp"

namespace lowmt::serve {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_chars = 2000;  // code points per request
  int max_in_flight = 8;  // translate requests decoded at once; more get 503
  int threads = 8;
  std::string cors_origin = "*";
  std::optional<std::filesystem::path> request_log;  // JSON lines, opt-in
};

/// One piece of a multi-sentence input and the whitespace that followed it.
struct Segment {
  std::string text;
  std::string separator;
};

/// Splits after '.', '!' or '?' when whitespace follows, and at every line
/// break. Lossy for abbreviations and quotes. Concatenating text and
/// separator of every segment gives back the input.
std::vector<Segment> split_segments(std::string_view text);

/// Translates each non-blank segment with the same target factor and
/// rejoins them with the original separators. Blank segments vanish.
nmt::Translation translate_long(const nmt::Checkpoint& model, const SubwordModel& subword, std::string_view text,
                                const LangId& tgt_lang, const nmt::DecodeOptions& opts = {});

struct Reply {
  int status = 200;
  std::string body;  // JSON
};

/// HTTP front end over an immutable model. The handle_* methods are the
/// transport-independent request logic and are safe to call concurrently.
///
///   POST /translate  {"text", "tgt_lang", "src_lang"?, "mode"?: "greedy"|"beam"}
///                 -> {"translation", "tgt_lang", "model", "latency_ms", "truncated"}
///   GET  /languages -> {"languages": [{"code", "name"}]}
///   GET  /health    -> {"status": "ok", "model", "uptime_s"}
///
/// Errors are {"error": {"code", "message"}} with codes invalid_request,
/// empty_text (400), unknown_language (422), text_too_long (413),
/// overloaded (503) and internal (500).
class Service {
 public:
  Service(nmt::Checkpoint model, SubwordModel subword, ServeOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Reply handle_translate(std::string_view body);
  Reply handle_languages() const;
  Reply handle_health() const;

  /// Binds and serves until stop(); returns the bound port through
  /// `on_ready` before blocking. Throws ConfigError when binding fails.
  void listen(const std::function<void(int port)>& on_ready = {});
  /// Binds, serves on a background thread and returns the port.
  int start();
  void stop();

  const std::string& fingerprint() const { return fingerprint_; }

 private:
  struct Impl;
  nmt::Checkpoint model_;
  SubwordModel subword_;
  ServeOptions opts_;
  std::string fingerprint_;
  std::chrono::steady_clock::time_point started_;
  std::atomic<int> in_flight_{0};
  std::mutex log_mutex_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lowmt::serve
