#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace kfe {

struct LlmParams {
  double temperature = 0.0;
  std::optional<int> max_response_tokens;           // absent = server default
  std::optional<std::map<std::string, double>> logit_bias;  // single-char keys
  std::string model_name;
};

// One-token A..E answering: max_tokens 1 and an equal large positive bias on
// each label character.
LlmParams constrained_params(std::string model_name);
bool is_constrained(const LlmParams& params);

struct LlmUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct LlmResponse {
  std::string text;
  std::string finish_reason;
  std::optional<LlmUsage> usage;
  bool cached = false;
};

struct LlmError : std::runtime_error {
  enum class Kind { Transport, Request, Timeout, ReplayMiss };
  Kind kind;
  LlmError(Kind k, const std::string& message)
      : std::runtime_error(message), kind(k) {}
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const std::string& prompt, const LlmParams& params) = 0;
};

// SHA-256 over the canonical JSON of (prompt, temperature,
// max_response_tokens, logit_bias, model_name). Stable across runs and
// platforms.
std::string cache_key(const std::string& prompt, const LlmParams& params);

// Append-only JSONL of {key, request, response, timestamp}. The snapshot
// loaded at open is immutable; entries recorded afterwards live in a small
// mutex-guarded overlay, and the most recent entry per key wins. Corrupt
// lines are skipped with a warning.
class ReplayStore {
 public:
  explicit ReplayStore(std::string path);

  std::optional<LlmResponse> get(const std::string& key) const;
  void put(const std::string& key, const std::string& prompt,
           const LlmParams& params, const LlmResponse& response);

  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::unordered_map<std::string, LlmResponse> snapshot_;
  mutable std::mutex mutex_;  // guards overlay_ and appends
  std::unordered_map<std::string, LlmResponse> overlay_;
};

struct LlmClientConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string model_name = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_concurrency = 4;
  int requests_per_minute = 0;  // 0 = unlimited
  double backoff_base_s = 0.5;
};

// OpenAI-compatible chat-completion client. One user message per request;
// transient failures (connect errors, 5xx) retry with exponential backoff,
// 4xx fails immediately with the response body. Thread-safe; in-flight
// requests are bounded by max_concurrency and a token-bucket rate limiter.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(LlmClientConfig config);
  ~HttpLlmClient() override;

  LlmResponse complete(const std::string& prompt, const LlmParams& params) override;

  // Wire body of one chat request, exposed so tests can pin the format.
  static std::string request_body(const std::string& prompt, const LlmParams& params);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Serves replay hits; misses go upstream and are recorded (exactly one store
// entry per live call). A null upstream means replay-only: a miss raises
// LlmError::Kind::ReplayMiss and no network is ever touched.
class ReplayLlmClient : public LlmClient {
 public:
  ReplayLlmClient(ReplayStore& store, LlmClient* upstream);

  LlmResponse complete(const std::string& prompt, const LlmParams& params) override;

 private:
  ReplayStore& store_;
  LlmClient* upstream_;
};

}  // namespace kfe
