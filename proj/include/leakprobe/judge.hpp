#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "leakprobe/judge_client.hpp"
#include "leakprobe/lexicon.hpp"
#include "leakprobe/probe_config.hpp"
#include "leakprobe/prompts.hpp"
#include "leakprobe/verdict.hpp"

namespace leakprobe {

/// Verdicts keyed by content hash. Thread-safe; last writer wins, and a
/// writer that disagrees with the stored verdict is logged. With a path,
/// entries are loaded on construction and appended as JSON lines.
class VerdictCache {
 public:
  VerdictCache() = default;
  explicit VerdictCache(std::filesystem::path path);

  static std::string key(const std::string& policy_key, std::string_view query,
                         std::string_view completion);

  std::optional<JudgeVerdict> get(const std::string& key) const;
  /// Unknown verdicts are ignored.
  void put(const std::string& key, const JudgeVerdict& verdict);

  std::size_t size() const;
  std::size_t divergences() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, JudgeVerdict> entries_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::size_t divergences_ = 0;
};

struct JudgeOptions {
  PromptKind fast_prompt = PromptKind::kCotFs;
  std::size_t strong_batch_size = 8;
  RetryPolicy retry;
};

/// The leakage checker G behind one of the four policies.
class JudgePolicy {
 public:
  JudgePolicy(JudgePolicyKind kind, std::shared_ptr<const CanonLexicon> lexicon,
              std::shared_ptr<JudgeClient> fast, std::shared_ptr<JudgeClient> strong,
              std::shared_ptr<VerdictCache> cache = nullptr, JudgeOptions options = {});

  static JudgePolicy lexicon(std::shared_ptr<const CanonLexicon> lex,
                             std::shared_ptr<VerdictCache> cache = nullptr);

  JudgePolicyKind kind() const noexcept { return kind_; }
  const JudgeOptions& options() const noexcept { return options_; }

  /// Identity of everything that can change a verdict; part of cache keys.
  std::string key() const;

  /// lexicon: lexicon_check. fast: one cot_fs round trip. strong: one
  /// batch_strong round trip. hybrid: fast, and only when it fires, strong,
  /// whose verdict is returned. Client failures yield an unknown verdict.
  JudgeVerdict judge(const std::string& query, const std::string& completion) const;

  /// Same results as judge() per pair; strong calls are grouped into
  /// batch_strong requests of options().strong_batch_size pairs.
  std::vector<JudgeVerdict> judge_all(const std::vector<std::string>& queries,
                                      const std::vector<std::string>& completions) const;

 private:
  JudgeVerdict uncached(const std::string& query, const std::string& completion) const;
  JudgeVerdict ask_single(JudgeClient& client, PromptKind kind, const std::string& query,
                          const std::string& completion) const;
  std::vector<JudgeVerdict> ask_strong(const std::vector<std::string>& queries,
                                       const std::vector<std::string>& completions) const;

  JudgePolicyKind kind_;
  std::shared_ptr<const CanonLexicon> lexicon_;
  std::shared_ptr<JudgeClient> fast_;
  std::shared_ptr<JudgeClient> strong_;
  std::shared_ptr<VerdictCache> cache_;
  JudgeOptions options_;
};

}  // namespace leakprobe
