#include "lowmt/serve.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include "httplib.h"
#include "json.hpp"
#include "lowmt/util.hpp"

namespace lowmt::serve {
using json = nlohmann::ordered_json;

std::vector<Segment> split_segments(std::string_view text) {
  std::vector<Segment> out;
  std::size_t i = 0;
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size()) {
      const char c = text[j];
      if (c == '\n') break;
      if ((c == '.' || c == '!' || c == '?') && (j + 1 == text.size() || is_space(text[j + 1]))) {
        ++j;
        break;
      }
      ++j;
    }
    std::size_t k = j;
    while (k < text.size() && is_space(text[k])) ++k;
    out.push_back({std::string(text.substr(i, j - i)), std::string(text.substr(j, k - j))});
    i = k;
  }
  return out;
}

nmt::Translation translate_long(const nmt::Checkpoint& model, const SubwordModel& subword, std::string_view text,
                                const LangId& tgt_lang, const nmt::DecodeOptions& opts) {
  nmt::Translation out;
  bool first = true;
  std::string pending_sep;
  for (const auto& seg : split_segments(text)) {
    if (trim(seg.text).empty()) {
      if (!first) pending_sep += seg.separator;
      continue;
    }
    const auto t = nmt::translate(model.params, model.config, subword, trim(seg.text), tgt_lang, opts);
    if (!first) out.text += pending_sep;
    out.text += t.text;
    out.ids.insert(out.ids.end(), t.ids.begin(), t.ids.end());
    out.truncated = out.truncated || t.truncated;
    out.score += t.score;
    pending_sep = seg.separator;
    first = false;
  }
  return out;
}

namespace {

Reply error_reply(int status, std::string_view code, std::string_view message) {
  json j;
  j["error"] = {{"code", code}, {"message", message}};
  return {status, j.dump()};
}

}  // namespace

struct Service::Impl {
  httplib::Server server;
  std::thread thread;
};

Service::Service(nmt::Checkpoint model, SubwordModel subword, ServeOptions opts)
    : model_(std::move(model)),
      subword_(std::move(subword)),
      opts_(std::move(opts)),
      fingerprint_(model_.fingerprint()),
      started_(std::chrono::steady_clock::now()),
      impl_(std::make_unique<Impl>()) {
  if (static_cast<std::size_t>(model_.config.token_vocab) != subword_.vocab_size()) {
    throw ConfigError("subword model has " + std::to_string(subword_.vocab_size()) + " tokens, checkpoint expects " +
                      std::to_string(model_.config.token_vocab));
  }
  if (opts_.max_in_flight <= 0 || opts_.threads <= 0) throw ConfigError("serve: thread and in-flight limits must be positive");

  auto& s = impl_->server;
  const int threads = opts_.threads;
  s.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  s.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  const auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json; charset=utf-8");
  };
  s.Post("/translate", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_translate(req.body));
  });
  s.Get("/languages", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_languages()); });
  s.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_health()); });
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404) send(res, error_reply(404, "not_found", "no such endpoint"));
  });
}

Service::~Service() { stop(); }

Reply Service::handle_translate(std::string_view body) {
  const auto t0 = std::chrono::steady_clock::now();
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "invalid_request", "body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "invalid_request", "body must be a JSON object");
  if (!req.contains("text") || !req["text"].is_string()) return error_reply(400, "invalid_request", "'text' must be a string");
  if (!req.contains("tgt_lang") || !req["tgt_lang"].is_string()) {
    return error_reply(400, "invalid_request", "'tgt_lang' must be a string");
  }
  if (req.contains("src_lang") && !req["src_lang"].is_string()) {
    return error_reply(400, "invalid_request", "'src_lang' must be a string");
  }
  const std::string text = req["text"].get<std::string>();
  if (utf8_invalid_offset(text)) return error_reply(400, "invalid_request", "'text' is not valid UTF-8");
  if (trim(text).empty()) return error_reply(400, "empty_text", "'text' is empty");
  const std::size_t chars = utf8_chars(text).size();
  if (chars > opts_.max_chars) {
    return error_reply(413, "text_too_long",
                       "text has " + std::to_string(chars) + " characters, limit " + std::to_string(opts_.max_chars));
  }
  nmt::DecodeOptions dopts;
  const std::string mode = req.value("mode", std::string("greedy"));
  if (mode == "beam") {
    dopts.mode = nmt::DecodeMode::beam;
  } else if (mode != "greedy") {
    return error_reply(400, "invalid_request", "'mode' must be greedy or beam");
  }
  const LangId tgt(req["tgt_lang"].get<std::string>());
  const auto& langs = model_.config.languages;
  if (std::find(langs.begin(), langs.end(), tgt) == langs.end()) {
    return error_reply(422, "unknown_language", "unknown target language '" + tgt.code() + "'");
  }

  if (in_flight_.fetch_add(1) >= opts_.max_in_flight) {
    in_flight_.fetch_sub(1);
    return error_reply(503, "overloaded", "too many requests in flight; retry later");
  }
  nmt::Translation t;
  try {
    t = translate_long(model_, subword_, text, tgt, dopts);
  } catch (const std::exception& e) {
    in_flight_.fetch_sub(1);
    return error_reply(500, "internal", e.what());
  }
  in_flight_.fetch_sub(1);

  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  json out;
  out["translation"] = t.text;
  out["tgt_lang"] = tgt.code();
  out["model"] = fingerprint_;
  out["latency_ms"] = ms;
  out["truncated"] = t.truncated;
  if (opts_.request_log) {
    json entry;
    entry["request"] = req;
    entry["translation"] = t.text;
    entry["model"] = fingerprint_;
    std::lock_guard lock(log_mutex_);
    std::ofstream f(*opts_.request_log, std::ios::app | std::ios::binary);
    f << entry.dump() << '\n';
  }
  return {200, out.dump()};
}

Reply Service::handle_languages() const {
  json arr = json::array();
  for (const auto& l : model_.config.languages) arr.push_back({{"code", l.code()}, {"name", l.code()}});
  json out;
  out["languages"] = arr;
  return {200, out.dump()};
}

Reply Service::handle_health() const {
  json out;
  out["status"] = "ok";
  out["model"] = fingerprint_;
  out["uptime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return {200, out.dump()};
}

void Service::listen(const std::function<void(int)>& on_ready) {
  auto& s = impl_->server;
  int port = opts_.port;
  if (port == 0) {
    port = s.bind_to_any_port(opts_.host);
    if (port < 0) throw ConfigError("cannot bind " + opts_.host);
  } else if (!s.bind_to_port(opts_.host, port)) {
    throw ConfigError("cannot bind " + opts_.host + ":" + std::to_string(port));
  }
  if (on_ready) on_ready(port);
  s.listen_after_bind();
}

int Service::start() {
  auto& s = impl_->server;
  int port = opts_.port;
  if (port == 0) {
    port = s.bind_to_any_port(opts_.host);
    if (port < 0) throw ConfigError("cannot bind " + opts_.host);
  } else if (!s.bind_to_port(opts_.host, port)) {
    throw ConfigError("cannot bind " + opts_.host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace lowmt::serve
