#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "leakprobe/judge_client.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "leakprobe/errors.hpp"

namespace leakprobe {

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

std::string complete_with_retry(JudgeClient& client, const std::string& prompt,
                                const RetryPolicy& retry) {
  auto delay = retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return client.complete(prompt);
    } catch (const JudgeTransportError& e) {
      const bool client_error = e.status() >= 400 && e.status() < 500 && e.status() != 429;
      if (client_error || attempt >= retry.attempts) throw;
      spdlog::warn("judge {} attempt {}/{} failed: {}", client.id(), attempt, retry.attempts, e.what());
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(static_cast<long long>(delay.count() * retry.multiplier));
    }
  }
}

HttpChatClient::HttpChatClient(HttpChatOptions options) : options_(std::move(options)) {
  const auto scheme_end = options_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("judge endpoint must be an absolute URL: '" + options_.endpoint + "'");
  }
  const auto path_begin = options_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = options_.endpoint.substr(0, path_begin);
  path_ = path_begin == std::string::npos ? "/" : options_.endpoint.substr(path_begin);
  if (options_.model.empty()) throw ConfigError("judge model name is empty");
  if (options_.requests_per_second > 0.0) {
    limiter_ = std::make_unique<RateLimiter>(
        std::chrono::milliseconds(static_cast<long long>(1000.0 / options_.requests_per_second)));
  }
}

std::string HttpChatClient::id() const { return options_.model + "@" + options_.endpoint; }

std::string HttpChatClient::complete(const std::string& prompt) {
  if (limiter_) limiter_->acquire();

  httplib::Client cli(scheme_host_);
  cli.set_connection_timeout(options_.timeout_seconds);
  cli.set_read_timeout(options_.timeout_seconds);
  httplib::Headers headers;
  if (const char* token = std::getenv(options_.token_env.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const nlohmann::json body = {
      {"model", options_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", 0}};
  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw JudgeTransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw JudgeTransportError("HTTP " + std::to_string(res->status), res->status);
  }
  if (res->status != 200) {
    throw JudgeTransportError("HTTP " + std::to_string(res->status), res->status);
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw JudgeTransportError(std::string("unexpected response body: ") + e.what(), res->status);
  }
}

}  // namespace leakprobe
