#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace leakprobe {

/// Judge prompt templates shipped under assets/prompts.
enum class PromptKind { kBase, kCot, kCotFs, kBatchStrong };

inline constexpr const char* kPromptTemplateVersion = "prompts-v1";

std::string to_string(PromptKind kind);
PromptKind prompt_kind_from_string(const std::string& name);

/// Raw template text with placeholders intact.
const std::string& prompt_template(PromptKind kind);

/// Fills {user_query} and {model_completion}. For kBatchStrong the pair is
/// sent as one-element lists. The query must be non-empty; an empty
/// completion is allowed.
std::string build_judge_request(std::string_view query, std::string_view completion,
                                PromptKind kind);

/// Fills {list_user_queries} and {list_model_completions} with JSON arrays.
/// Throws InvalidArgument when the lists are empty or differ in length.
std::string build_batch_request(const std::vector<std::string>& queries,
                                const std::vector<std::string>& completions);

/// Replaces every "{name}" whose name is a key of `values` in one left to
/// right pass; substituted text is never rescanned.
std::string fill_placeholders(std::string_view tmpl,
                              const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace leakprobe
