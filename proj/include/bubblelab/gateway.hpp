#pragma once

// Provider-agnostic chat completion with record/replay cassettes.
//
// A ProviderProfile describes the wire format as data (endpoint, auth header,
// body template, JSON pointers into the reply), so adding a provider is a
// config change. Every exchange is keyed by (agent, phase, round, purpose,
// attempt) and fingerprinted by a SHA-256 digest over the model, sampling
// parameters and prompt; REPLAY serves stored replies and never touches the
// transport.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "bubblelab/agent.hpp"

namespace bubblelab {

/// Transport failure. Transient errors (timeouts, 429, 5xx) are retried.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, bool transient) : std::runtime_error(what), transient_(transient) {}
  [[nodiscard]] bool transient() const { return transient_; }

 private:
  bool transient_;
};

/// The replayed request differs from the recorded one, or was never recorded.
class ReplayMismatch : public FatalSessionError {
 public:
  using FatalSessionError::FatalSessionError;
};

struct ProviderProfile {
  std::string name = "stub";
  std::string endpoint;
  /// Environment variable holding the credential; empty means no auth.
  std::string auth_env;
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::string model = "stub-model";
  /// Merged into the request body (temperature, max_tokens, ...).
  nlohmann::json sampling = nlohmann::json::object();
  std::map<std::string, std::string> headers;
  std::string system_prompt;
  std::string response_pointer = "/choices/0/message/content";
  std::string prompt_tokens_pointer = "/usage/prompt_tokens";
  std::string completion_tokens_pointer = "/usage/completion_tokens";
  double timeout_seconds = 120.0;
  int max_retries = 4;
  double backoff_initial_seconds = 1.0;
  double backoff_factor = 2.0;

  void validate() const {
    if (name.empty()) throw ConfigError("provider profile needs a name");
    if (model.empty()) throw ConfigError("provider profile " + name + " needs a model");
    if (!(timeout_seconds > 0)) throw ConfigError("provider profile " + name + ": timeout must be > 0");
    if (max_retries < 0) throw ConfigError("provider profile " + name + ": max_retries must be >= 0");
    if (!sampling.is_object()) throw ConfigError("provider profile " + name + ": sampling must be an object");
  }
};

inline void to_json(nlohmann::json& j, const ProviderProfile& p) {
  j = {{"name", p.name},
       {"endpoint", p.endpoint},
       {"auth_env", p.auth_env},
       {"auth_header", p.auth_header},
       {"auth_prefix", p.auth_prefix},
       {"model", p.model},
       {"sampling", p.sampling},
       {"headers", p.headers},
       {"system_prompt", p.system_prompt},
       {"response_pointer", p.response_pointer},
       {"prompt_tokens_pointer", p.prompt_tokens_pointer},
       {"completion_tokens_pointer", p.completion_tokens_pointer},
       {"timeout_seconds", p.timeout_seconds},
       {"max_retries", p.max_retries},
       {"backoff_initial_seconds", p.backoff_initial_seconds},
       {"backoff_factor", p.backoff_factor}};
}

inline void from_json(const nlohmann::json& j, ProviderProfile& p) {
  try {
    p.name = j.value("name", p.name);
    p.endpoint = j.value("endpoint", p.endpoint);
    p.auth_env = j.value("auth_env", p.auth_env);
    p.auth_header = j.value("auth_header", p.auth_header);
    p.auth_prefix = j.value("auth_prefix", p.auth_prefix);
    p.model = j.value("model", p.model);
    if (j.contains("sampling")) p.sampling = j.at("sampling");
    if (j.contains("headers")) p.headers = j.at("headers").get<std::map<std::string, std::string>>();
    p.system_prompt = j.value("system_prompt", p.system_prompt);
    p.response_pointer = j.value("response_pointer", p.response_pointer);
    p.prompt_tokens_pointer = j.value("prompt_tokens_pointer", p.prompt_tokens_pointer);
    p.completion_tokens_pointer = j.value("completion_tokens_pointer", p.completion_tokens_pointer);
    p.timeout_seconds = j.value("timeout_seconds", p.timeout_seconds);
    p.max_retries = j.value("max_retries", p.max_retries);
    p.backoff_initial_seconds = j.value("backoff_initial_seconds", p.backoff_initial_seconds);
    p.backoff_factor = j.value("backoff_factor", p.backoff_factor);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed provider profile: ") + e.what());
  }
  p.validate();
}

/// Lower-case hex SHA-256.
inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

/// CRLF and lone CR become LF; nothing else in the prompt is touched.
inline std::string normalize_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out += '\n';
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline std::string request_digest(const ProviderProfile& profile, std::string_view prompt) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return sha256_hex(profile.model + "\n" + profile.sampling.dump() + "\n" + normalize_newlines(profile.system_prompt) +
                    "\n" + normalize_newlines(prompt));
}

inline nlohmann::json build_request_body(const ProviderProfile& profile, std::string_view prompt) {
  nlohmann::json body = profile.sampling;
  body["model"] = profile.model;
  nlohmann::json messages = nlohmann::json::array();
  if (!profile.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", profile.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", std::string(prompt)}});
  body["messages"] = messages;
  return body;
}

// ---- transport -------------------------------------------------------------

struct HttpRequest {
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  double timeout_seconds = 120.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws TransportError on connection failure; HTTP errors come back as a status.
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

// ---- cassette --------------------------------------------------------------

enum class CassetteMode { kRecord, kReplay, kPassthrough };

inline CassetteMode cassette_mode_from_string(const std::string& s) {
  if (s == "record" || s == "RECORD") return CassetteMode::kRecord;
  if (s == "replay" || s == "REPLAY") return CassetteMode::kReplay;
  if (s == "passthrough" || s == "PASSTHROUGH") return CassetteMode::kPassthrough;
  throw ConfigError("unknown cassette mode: " + s);
}

/// Identifies one exchange within a session.
struct CallKey {
  std::uint32_t agent = 0;
  Phase phase = Phase::kMain;
  int round = 0;
  std::string purpose = "act";
  int attempt = 0;

  [[nodiscard]] auto tie() const { return std::tie(agent, phase, round, purpose, attempt); }
  friend bool operator<(const CallKey& a, const CallKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const CallKey& a, const CallKey& b) { return a.tie() == b.tie(); }

  [[nodiscard]] std::string describe() const {
    return "agent " + std::to_string(agent) + " " + std::string(to_string(phase)) + " round " + std::to_string(round) + " " +
           purpose + " attempt " + std::to_string(attempt);
  }
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t calls = 0;
};

struct CassetteEntry {
  CallKey key;
  std::string digest;
  std::string model;
  std::string response;
  double latency_ms = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

inline void to_json(nlohmann::json& j, const CassetteEntry& e) {
  j = {{"agent", e.key.agent},
       {"phase", std::string(to_string(e.key.phase))},
       {"round", e.key.round},
       {"purpose", e.key.purpose},
       {"attempt", e.key.attempt},
       {"digest", e.digest},
       {"model", e.model},
       {"response", e.response},
       {"latency_ms", e.latency_ms},
       {"prompt_tokens", e.prompt_tokens},
       {"completion_tokens", e.completion_tokens}};
}

inline void from_json(const nlohmann::json& j, CassetteEntry& e) {
  e.key.agent = j.at("agent").get<std::uint32_t>();
  e.key.phase = j.at("phase").get<std::string>() == "PRACTICE" ? Phase::kPractice : Phase::kMain;
  e.key.round = j.at("round").get<int>();
  e.key.purpose = j.at("purpose").get<std::string>();
  e.key.attempt = j.at("attempt").get<int>();
  e.digest = j.at("digest").get<std::string>();
  e.model = j.value("model", "");
  e.response = j.at("response").get<std::string>();
  e.latency_ms = j.value("latency_ms", 0.0);
  e.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  e.completion_tokens = j.value("completion_tokens", std::int64_t{0});
}

/// Thread-safe store of recorded exchanges, one JSON object per line on disk.
class Cassette {
 public:
  Cassette() = default;

  static std::shared_ptr<Cassette> parse(std::string_view text) {
    auto c = std::make_shared<Cassette>();
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto e = nlohmann::json::parse(line).get<CassetteEntry>();
        c->entries_[e.key] = std::move(e);
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("cassette line " + std::to_string(lineno) + ": " + ex.what());
      }
    }
    return c;
  }

  static std::shared_ptr<Cassette> load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open cassette " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  /// Entries sorted by key, so the file is independent of completion order.
  [[nodiscard]] std::string dump() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [_, e] : entries_) out += nlohmann::json(e).dump() + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write cassette " + path);
    f << dump();
  }

  /// Content fingerprint, recorded in session provenance.
  [[nodiscard]] std::string id() const { return sha256_hex(dump()).substr(0, 16); }

  [[nodiscard]] std::optional<CassetteEntry> find(const CallKey& key) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(CassetteEntry e) {
    std::lock_guard lock(mu_);
    entries_[e.key] = std::move(e);
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  mutable std::mutex mu_;
  std::map<CallKey, CassetteEntry> entries_;
};

// ---- gateway ---------------------------------------------------------------

struct Completion {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_ms = 0.0;
  bool replayed = false;
};

using Sleeper = std::function<void(double seconds)>;

inline Sleeper real_sleeper() {
  return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

class Gateway {
 public:
  Gateway(ProviderProfile profile, std::shared_ptr<Transport> transport, std::shared_ptr<Cassette> cassette,
          CassetteMode mode, Sleeper sleeper = real_sleeper())
      : profile_(std::move(profile)),
        transport_(std::move(transport)),
        cassette_(cassette ? std::move(cassette) : std::make_shared<Cassette>()),
        mode_(mode),
        sleeper_(std::move(sleeper)) {
    profile_.validate();
    if (mode_ != CassetteMode::kReplay && !transport_) {
      throw ConfigError("a transport is required unless replaying a cassette");
    }
  }

  [[nodiscard]] const ProviderProfile& profile() const { return profile_; }
  [[nodiscard]] CassetteMode mode() const { return mode_; }
  [[nodiscard]] const std::shared_ptr<Cassette>& cassette() const { return cassette_; }

  Completion complete(std::string_view prompt, const CallKey& key) {
    const std::string digest = request_digest(profile_, prompt);
    if (mode_ == CassetteMode::kReplay) {
      const auto e = cassette_->find(key);
      if (!e) throw ReplayMismatch("cassette has no exchange for " + key.describe());
      if (e->digest != digest) {
        throw ReplayMismatch("request digest mismatch for " + key.describe() + ": recorded " + e->digest + ", got " + digest);
      }
      account(e->model, e->prompt_tokens, e->completion_tokens);
      return Completion{e->response, e->prompt_tokens, e->completion_tokens, e->latency_ms, true};
    }

    Completion c = call_with_retries(prompt);
    account(profile_.model, c.prompt_tokens, c.completion_tokens);
    if (mode_ == CassetteMode::kRecord) {
      cassette_->put(CassetteEntry{key, digest, profile_.model, c.text, c.latency_ms, c.prompt_tokens, c.completion_tokens});
    }
    return c;
  }

  [[nodiscard]] std::map<std::string, TokenUsage> usage() const {
    std::lock_guard lock(mu_);
    return usage_;
  }

  [[nodiscard]] std::int64_t transport_calls() const {
    std::lock_guard lock(mu_);
    return transport_calls_;
  }

 private:
  Completion call_with_retries(std::string_view prompt) {
    HttpRequest req;
    req.url = profile_.endpoint;
    req.timeout_seconds = profile_.timeout_seconds;
    req.headers = profile_.headers;
    req.headers["Content-Type"] = "application/json";
    if (!profile_.auth_env.empty()) {
      const char* secret = std::getenv(profile_.auth_env.c_str());
      if (secret == nullptr || *secret == '\0') {
        throw TransportError("environment variable " + profile_.auth_env + " is not set", false);
      }
      req.headers[profile_.auth_header] = profile_.auth_prefix + secret;
    }
    req.body = build_request_body(profile_, prompt).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= profile_.max_retries; ++attempt) {
      if (attempt > 0) sleeper_(profile_.backoff_initial_seconds * std::pow(profile_.backoff_factor, attempt - 1));
      const auto start = std::chrono::steady_clock::now();
      HttpResponse resp;
      try {
        {
          std::lock_guard lock(mu_);
          ++transport_calls_;
        }
        resp = transport_->post(req);
      } catch (const TransportError& e) {
        if (!e.transient()) throw;
        last_error = e.what();
        continue;
      }
      const double latency = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (resp.status == 429 || resp.status >= 500) {
        last_error = "HTTP " + std::to_string(resp.status);
        continue;
      }
      if (resp.status < 200 || resp.status >= 300) {
        throw TransportError("HTTP " + std::to_string(resp.status) + " from " + profile_.name + ": " + resp.body.substr(0, 300),
                             false);
      }
      return decode(resp.body, latency);
    }
    throw TransportError("giving up on " + profile_.name + " after " + std::to_string(profile_.max_retries + 1) +
                             " attempts: " + last_error,
                         true);
  }

  Completion decode(const std::string& body, double latency) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw TransportError(std::string("provider reply is not JSON: ") + e.what(), false);
    }
    Completion c;
    c.latency_ms = latency;
    const nlohmann::json::json_pointer text_ptr(profile_.response_pointer);
    if (!j.contains(text_ptr) || !j.at(text_ptr).is_string()) {
      throw TransportError("provider reply has no text at " + profile_.response_pointer, false);
    }
    c.text = j.at(text_ptr).get<std::string>();
    auto tokens = [&](const std::string& ptr) -> std::int64_t {
      if (ptr.empty()) return 0;
      const nlohmann::json::json_pointer p(ptr);
      return j.contains(p) && j.at(p).is_number_integer() ? j.at(p).get<std::int64_t>() : 0;
    };
    c.prompt_tokens = tokens(profile_.prompt_tokens_pointer);
    c.completion_tokens = tokens(profile_.completion_tokens_pointer);
    return c;
  }

  void account(const std::string& model, std::int64_t prompt_tokens, std::int64_t completion_tokens) {
    std::lock_guard lock(mu_);
    auto& u = usage_[model];
    u.prompt_tokens += prompt_tokens;
    u.completion_tokens += completion_tokens;
    ++u.calls;
  }

  ProviderProfile profile_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<Cassette> cassette_;
  CassetteMode mode_;
  Sleeper sleeper_;
  mutable std::mutex mu_;
  std::map<std::string, TokenUsage> usage_;
  std::int64_t transport_calls_ = 0;
};

}  // namespace bubblelab
