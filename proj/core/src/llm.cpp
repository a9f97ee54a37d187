#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kfe/llm.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>

namespace kfe {

using nlohmann::json;

LlmParams constrained_params(std::string model_name) {
  LlmParams p;
  p.model_name = std::move(model_name);
  p.max_response_tokens = 1;
  p.logit_bias = std::map<std::string, double>{
      {"A", 100.0}, {"B", 100.0}, {"C", 100.0}, {"D", 100.0}, {"E", 100.0}};
  return p;
}

bool is_constrained(const LlmParams& params) {
  if (!params.max_response_tokens || *params.max_response_tokens != 1) return false;
  if (!params.logit_bias || params.logit_bias->size() != 5) return false;
  double bias = params.logit_bias->begin()->second;
  for (char label : {'A', 'B', 'C', 'D', 'E'}) {
    auto it = params.logit_bias->find(std::string(1, label));
    if (it == params.logit_bias->end() || it->second != bias || bias <= 0.0)
      return false;
  }
  return true;
}

namespace {

json params_to_json(const LlmParams& params) {
  json j;
  j["model_name"] = params.model_name;
  j["temperature"] = params.temperature;
  j["max_response_tokens"] =
      params.max_response_tokens ? json(*params.max_response_tokens) : json(nullptr);
  if (params.logit_bias) {
    json bias = json::object();
    for (const auto& [k, v] : *params.logit_bias) bias[k] = v;
    j["logit_bias"] = std::move(bias);
  } else {
    j["logit_bias"] = nullptr;
  }
  return j;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json response_to_json(const LlmResponse& r) {
  json j{{"text", r.text}, {"finish_reason", r.finish_reason}};
  if (r.usage) {
    j["usage"] = {{"prompt_tokens", r.usage->prompt_tokens},
                  {"completion_tokens", r.usage->completion_tokens}};
  } else {
    j["usage"] = nullptr;
  }
  return j;
}

LlmResponse response_from_json(const json& j) {
  LlmResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = j.at("finish_reason").get<std::string>();
  if (j.contains("usage") && !j.at("usage").is_null()) {
    r.usage = LlmUsage{j.at("usage").at("prompt_tokens").get<long>(),
                       j.at("usage").at("completion_tokens").get<long>()};
  }
  return r;
}

}  // namespace

std::string cache_key(const std::string& prompt, const LlmParams& params) {
  json j = params_to_json(params);
  j["prompt"] = prompt;
  return sha256_hex(j.dump());
}

ReplayStore::ReplayStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;  // fresh store
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("key") || !j.contains("response")) {
      std::fprintf(stderr, "warning: replay store %s:%zu: skipping corrupt entry\n",
                   path_.c_str(), lineno);
      continue;
    }
    try {
      snapshot_[j["key"].get<std::string>()] = response_from_json(j["response"]);
    } catch (const json::exception&) {
      std::fprintf(stderr, "warning: replay store %s:%zu: skipping corrupt entry\n",
                   path_.c_str(), lineno);
    }
  }
}

std::optional<LlmResponse> ReplayStore::get(const std::string& key) const {
  {
    std::lock_guard lock(mutex_);
    auto it = overlay_.find(key);
    if (it != overlay_.end()) return it->second;
  }
  auto it = snapshot_.find(key);
  if (it != snapshot_.end()) return it->second;
  return std::nullopt;
}

void ReplayStore::put(const std::string& key, const std::string& prompt,
                      const LlmParams& params, const LlmResponse& response) {
  json entry{{"key", key},
             {"request", {{"prompt", prompt}, {"params", params_to_json(params)}}},
             {"response", response_to_json(response)},
             {"timestamp", iso8601_now()}};
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw LlmError(LlmError::Kind::Transport,
                           "cannot append to replay store '" + path_ + "'");
  out << entry.dump() << '\n';
  overlay_[key] = response;
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mutex_);
  std::size_t n = snapshot_.size();
  for (const auto& [key, value] : overlay_)
    if (!snapshot_.count(key)) ++n;
  return n;
}

namespace {

// Counting gate + token bucket. A condvar pair is enough here; request rates
// are low and the critical sections are tiny.
class Throttle {
 public:
  Throttle(int max_concurrency, int requests_per_minute)
      : slots_(max_concurrency < 1 ? 1 : max_concurrency),
        rpm_(requests_per_minute),
        tokens_(rpm_ > 0 ? rpm_ : 0),
        last_refill_(std::chrono::steady_clock::now()) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
    if (rpm_ <= 0) return;
    for (;;) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) * 60.0 / rpm_);
      cv_.wait_for(lock, std::chrono::duration_cast<std::chrono::milliseconds>(wait));
    }
  }

  void release() {
    {
      std::lock_guard lock(mutex_);
      ++slots_;
    }
    cv_.notify_one();
  }

 private:
  void refill() {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_refill_).count();
    tokens_ = std::min(static_cast<double>(rpm_), tokens_ + elapsed * rpm_ / 60.0);
    last_refill_ = now;
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  int slots_;
  const int rpm_;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
};

struct SlotGuard {
  Throttle& throttle;
  explicit SlotGuard(Throttle& t) : throttle(t) { throttle.acquire(); }
  ~SlotGuard() { throttle.release(); }
};

}  // namespace

struct HttpLlmClient::Impl {
  LlmClientConfig config;
  std::string host;    // scheme://host:port
  std::string prefix;  // path prefix, possibly empty
  Throttle throttle;

  explicit Impl(LlmClientConfig cfg)
      : config(std::move(cfg)),
        throttle(config.max_concurrency, config.requests_per_minute) {
    const auto scheme_end = config.base_url.find("://");
    const auto path_start = scheme_end == std::string::npos
                                ? config.base_url.find('/')
                                : config.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      host = config.base_url;
    } else {
      host = config.base_url.substr(0, path_start);
      prefix = config.base_url.substr(path_start);
      while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
  }
};

HttpLlmClient::HttpLlmClient(LlmClientConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpLlmClient::~HttpLlmClient() = default;

std::string HttpLlmClient::request_body(const std::string& prompt,
                                        const LlmParams& params) {
  json body{{"model", params.model_name},
            {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", params.temperature}};
  if (params.max_response_tokens) body["max_tokens"] = *params.max_response_tokens;
  if (params.logit_bias) {
    json bias = json::object();
    for (const auto& [k, v] : *params.logit_bias) bias[k] = v;
    body["logit_bias"] = std::move(bias);
  }
  return body.dump();
}

LlmResponse HttpLlmClient::complete(const std::string& prompt,
                                    const LlmParams& params) {
  if (prompt.empty())
    throw LlmError(LlmError::Kind::Request, "empty prompt");

  SlotGuard guard(impl_->throttle);
  const std::string body = request_body(prompt, params);
  const char* key = std::getenv(impl_->config.api_key_env.c_str());

  LlmError last_error(LlmError::Kind::Transport, "no attempt made");
  const int attempts = impl_->config.max_retries < 0 ? 1 : impl_->config.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const double delay =
          impl_->config.backoff_base_s * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }

    httplib::Client cli(impl_->host);
    const auto timeout = std::chrono::duration<double>(impl_->config.timeout_s);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = cli.Post(impl_->prefix + "/v1/chat/completions", headers, body,
                        "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Read;
      last_error = LlmError(timed_out ? LlmError::Kind::Timeout
                                      : LlmError::Kind::Transport,
                            std::string("http error: ") + httplib::to_string(err));
      continue;  // transient
    }
    if (res->status >= 500) {
      last_error = LlmError(LlmError::Kind::Transport,
                            "server error " + std::to_string(res->status) + ": " + res->body);
      continue;  // transient
    }
    if (res->status >= 400) {
      throw LlmError(LlmError::Kind::Request,
                     "request failed " + std::to_string(res->status) + ": " + res->body);
    }

    json j = json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
      throw LlmError(LlmError::Kind::Request,
                     "malformed completion response: " + res->body);
    }
    const auto& choice = j["choices"][0];
    LlmResponse out;
    out.text = choice.contains("message") && choice["message"].contains("content") &&
                       !choice["message"]["content"].is_null()
                   ? choice["message"]["content"].get<std::string>()
                   : std::string();
    out.finish_reason = choice.contains("finish_reason") && !choice["finish_reason"].is_null()
                            ? choice["finish_reason"].get<std::string>()
                            : std::string();
    if (j.contains("usage") && j["usage"].is_object()) {
      LlmUsage usage;
      usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
      usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
      out.usage = usage;
    }
    out.cached = false;
    return out;
  }
  throw last_error;
}

ReplayLlmClient::ReplayLlmClient(ReplayStore& store, LlmClient* upstream)
    : store_(store), upstream_(upstream) {}

LlmResponse ReplayLlmClient::complete(const std::string& prompt,
                                      const LlmParams& params) {
  const std::string key = cache_key(prompt, params);
  if (auto hit = store_.get(key)) {
    hit->cached = true;
    return *hit;
  }
  if (!upstream_) {
    throw LlmError(LlmError::Kind::ReplayMiss,
                   "replay-only mode and no stored response for key " + key);
  }
  LlmResponse response = upstream_->complete(prompt, params);
  response.cached = false;
  store_.put(key, prompt, params, response);
  return response;
}

}  // namespace kfe
