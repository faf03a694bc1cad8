#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "leakprobe/judge.hpp"
#include "leakprobe/model.hpp"
#include "leakprobe/probe_config.hpp"
#include "leakprobe/sequence.hpp"

namespace leakprobe {

/// Everything a run needs, loaded from one JSON file. Relative paths are
/// resolved against the file's directory. Secrets never appear here; judge
/// clients name the environment variable that holds the token.
struct RunConfig {
  std::string backend = "toy";
  nlohmann::json backend_options = nlohmann::json::object();

  PromptTemplate prompt;
  ProbeConfig probe;

  std::optional<std::filesystem::path> lexicon_path;
  std::optional<HttpChatOptions> fast_client;
  std::optional<HttpChatOptions> strong_client;
  JudgeOptions judge_options;
  std::optional<std::filesystem::path> cache_path;

  std::optional<std::filesystem::path> corpus_path;
  std::filesystem::path output_dir = "runs/latest";
  std::uint64_t campaign_seed = 0;
  std::size_t jobs = 1;

  std::filesystem::path source;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  /// Resolved configuration in canonical form (what the header hash covers).
  nlohmann::json to_json() const;
  /// First 16 hex digits of sha256 over to_json().dump().
  std::string hash() const;

  /// Checks cross-field constraints and that referenced files exist.
  void validate() const;

  std::shared_ptr<LanguageModel> make_model() const;
  /// Lexicon, clients and cache as required by probe.judge_policy.
  JudgePolicy make_judge() const;
};

}  // namespace leakprobe
