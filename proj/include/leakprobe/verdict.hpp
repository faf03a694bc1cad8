#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace leakprobe {

using ojson = nlohmann::ordered_json;

enum class Decision { kYes, kNo };

struct ReferenceDecision {
  std::string reference;
  Decision decision = Decision::kNo;
  std::string rationale;

  bool operator==(const ReferenceDecision&) const = default;
};

enum class VerdictStatus { kOk, kUnknown };

/// Result of the leakage check G. score is the number of YES decisions.
struct JudgeVerdict {
  std::vector<std::string> query_refs;
  std::vector<std::string> completion_refs;
  std::vector<std::string> remaining_refs;
  std::vector<ReferenceDecision> explanations;
  int score = 0;
  std::string judge_id;
  std::string raw_response;
  VerdictStatus status = VerdictStatus::kOk;
  /// The judge reported a Score different from its YES count.
  bool score_discrepancy = false;
  std::optional<int> reported_score;

  bool unknown() const noexcept { return status == VerdictStatus::kUnknown; }
  /// score >= 1 on a verdict that actually came back.
  bool leaked() const noexcept { return status == VerdictStatus::kOk && score >= 1; }

  /// Sentinel for a judge that could not be reached. Never counts as leakage.
  static JudgeVerdict make_unknown(std::string judge_id, std::string reason);
};

int yes_count(const std::vector<ReferenceDecision>& explanations);

/// Same references, decisions and score; ignores judge_id, raw text and flags.
bool same_content(const JudgeVerdict& a, const JudgeVerdict& b);

/// Judge-style response text (fenced JSON in the reference/Explanation/Score
/// layout). parse_verdict(serialize_verdict(v)) reproduces v's content.
std::string serialize_verdict(const JudgeVerdict& v);

/// Pulls the first usable verdict object out of a judge response, tolerating
/// code fences, surrounding prose and the list-shaped "Explanation" field the
/// prompt examples use. When the reported Score disagrees with the YES count
/// the YES count wins and score_discrepancy is set.
/// Throws MalformedVerdict when no object can be recovered.
JudgeVerdict parse_verdict(std::string_view raw, std::string judge_id = {});

/// Parses a batched response (list of objects with "query_index"). Entries are
/// returned as (query_index, verdict); missing indices fall back to list order.
std::vector<std::pair<int, JudgeVerdict>> parse_batch_verdicts(std::string_view raw,
                                                               std::string judge_id = {});

/// Full record form used by caches, checkpoints and run logs.
ojson to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const ojson& j);

}  // namespace leakprobe
