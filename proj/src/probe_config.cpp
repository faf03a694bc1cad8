#include "leakprobe/probe_config.hpp"

#include "leakprobe/errors.hpp"

namespace leakprobe {

std::string to_string(JudgePolicyKind kind) {
  switch (kind) {
    case JudgePolicyKind::kLexicon: return "lexicon";
    case JudgePolicyKind::kFast: return "fast";
    case JudgePolicyKind::kStrong: return "strong";
    case JudgePolicyKind::kHybrid: return "hybrid";
  }
  return "unknown";
}

JudgePolicyKind judge_policy_from_string(const std::string& name) {
  if (name == "lexicon") return JudgePolicyKind::kLexicon;
  if (name == "fast") return JudgePolicyKind::kFast;
  if (name == "strong") return JudgePolicyKind::kStrong;
  if (name == "hybrid") return JudgePolicyKind::kHybrid;
  throw InvalidArgument("unknown judge policy '" + name + "' (lexicon|fast|strong|hybrid)");
}

void ProbeConfig::validate(const Vocab& vocab) const {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (top_k == 0) throw InvalidArgument("top_k must be >= 1");
  if (suffix_len == 0) throw InvalidArgument("suffix_len must be >= 1");
  if (max_new_tokens == 0) throw InvalidArgument("max_new_tokens must be >= 1");
  if (judge_check_interval && *judge_check_interval == 0)
    throw InvalidArgument("judge_check_interval must be >= 1");
  if (top_k > vocab.substitutable_count()) {
    throw InvalidArgument("top_k (" + std::to_string(top_k) + ") exceeds the " +
                          std::to_string(vocab.substitutable_count()) + " substitutable tokens");
  }
}

}  // namespace leakprobe
