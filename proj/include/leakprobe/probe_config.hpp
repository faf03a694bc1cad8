#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "leakprobe/vocab.hpp"

namespace leakprobe {

enum class JudgePolicyKind { kLexicon, kFast, kStrong, kHybrid };

std::string to_string(JudgePolicyKind kind);
JudgePolicyKind judge_policy_from_string(const std::string& name);

/// Optimization hyperparameters. Defaults:
/// B = 24, k = 12, 200 epochs.
struct ProbeConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 24;
  std::size_t top_k = 12;
  std::size_t suffix_len = 10;
  std::size_t max_new_tokens = 64;
  JudgePolicyKind judge_policy = JudgePolicyKind::kLexicon;
  /// Epochs between leakage checks; unset means 1 for lexicon, 10 otherwise.
  std::optional<std::size_t> judge_check_interval;
  std::uint64_t seed = 0;

  /// Adopt the batch minimum even when it raises the loss.
  bool unconditional_adoption = false;
  /// Text of the token repeated to form the initial suffix.
  std::string init_token = "!";
  /// Extra draws allowed when candidates are rejected by the tokenizer check.
  std::size_t max_resample = 64;

  std::size_t check_interval() const {
    if (judge_check_interval) return *judge_check_interval;
    return judge_policy == JudgePolicyKind::kLexicon ? 1 : 10;
  }

  /// Throws InvalidArgument if a field violates its constraints for `vocab`.
  void validate(const Vocab& vocab) const;
};

}  // namespace leakprobe
