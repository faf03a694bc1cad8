#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

namespace leakprobe {

/// One prompt in, one response text out. Implementations throw
/// JudgeTransportError for failures worth retrying.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  /// Stable identity (endpoint + model) used in cache keys and run headers.
  virtual std::string id() const = 0;
};

/// Spaces calls at least `min_interval` apart across all threads sharing it.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds min_interval) : interval_(min_interval) {}
  void acquire();

 private:
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_ = std::chrono::steady_clock::time_point::min();
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Calls client.complete, retrying JudgeTransportError with exponential
/// backoff. Rethrows the last error once attempts are exhausted.
std::string complete_with_retry(JudgeClient& client, const std::string& prompt,
                                const RetryPolicy& retry);

struct HttpChatOptions {
  /// Full URL of a chat-completions endpoint, e.g. https://host/v1/chat/completions.
  std::string endpoint;
  std::string model;
  /// Environment variable holding the bearer token. The token itself is never
  /// stored in configs or written to logs.
  std::string token_env = "JUDGE_API_TOKEN";
  int timeout_seconds = 60;
  double requests_per_second = 0.0;  // 0 disables client-side limiting
};

/// Chat-completion style HTTP judge. Safe for concurrent use.
class HttpChatClient final : public JudgeClient {
 public:
  explicit HttpChatClient(HttpChatOptions options);
  std::string complete(const std::string& prompt) override;
  std::string id() const override;

 private:
  HttpChatOptions options_;
  std::string scheme_host_;
  std::string path_;
  std::unique_ptr<RateLimiter> limiter_;
};

/// Wraps a callable; used for mocks and offline judges. Counts calls.
class FunctionJudgeClient final : public JudgeClient {
 public:
  using Fn = std::function<std::string(const std::string&)>;
  FunctionJudgeClient(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

  std::string complete(const std::string& prompt) override {
    calls_.fetch_add(1);
    return fn_(prompt);
  }
  std::string id() const override { return id_; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::string id_;
  Fn fn_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace leakprobe
