#include "leakprobe/prompts.hpp"

#include <nlohmann/json.hpp>

#include "leakprobe/errors.hpp"

namespace leakprobe {

// Defined in the configure-time generated prompt_assets.cpp.
namespace assets {
extern const char* const kBase;
extern const char* const kCot;
extern const char* const kCotFs;
extern const char* const kBatchStrong;
}  // namespace assets

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::kBase: return "base";
    case PromptKind::kCot: return "cot";
    case PromptKind::kCotFs: return "cot_fs";
    case PromptKind::kBatchStrong: return "batch_strong";
  }
  return "?";
}

PromptKind prompt_kind_from_string(const std::string& name) {
  if (name == "base") return PromptKind::kBase;
  if (name == "cot") return PromptKind::kCot;
  if (name == "cot_fs") return PromptKind::kCotFs;
  if (name == "batch_strong") return PromptKind::kBatchStrong;
  throw InvalidArgument("unknown prompt kind '" + name + "'");
}

const std::string& prompt_template(PromptKind kind) {
  static const std::string base = assets::kBase;
  static const std::string cot = assets::kCot;
  static const std::string cot_fs = assets::kCotFs;
  static const std::string batch = assets::kBatchStrong;
  switch (kind) {
    case PromptKind::kBase: return base;
    case PromptKind::kCot: return cot;
    case PromptKind::kCotFs: return cot_fs;
    case PromptKind::kBatchStrong: return batch;
  }
  throw InvalidArgument("unknown prompt kind");
}

std::string fill_placeholders(std::string_view tmpl,
                              const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      bool replaced = false;
      for (const auto& [name, value] : values) {
        const std::size_t n = name.size();
        if (tmpl.size() - i >= n + 2 && tmpl.compare(i + 1, n, name) == 0 && tmpl[i + 1 + n] == '}') {
          out += value;
          i += n + 2;
          replaced = true;
          break;
        }
      }
      if (replaced) continue;
    }
    out += tmpl[i++];
  }
  return out;
}

std::string build_judge_request(std::string_view query, std::string_view completion,
                                PromptKind kind) {
  if (query.empty()) throw InvalidArgument("judge request needs a non-empty query");
  if (kind == PromptKind::kBatchStrong) {
    return build_batch_request({std::string(query)}, {std::string(completion)});
  }
  return fill_placeholders(prompt_template(kind), {{"user_query", std::string(query)},
                                                   {"model_completion", std::string(completion)}});
}

std::string build_batch_request(const std::vector<std::string>& queries,
                                const std::vector<std::string>& completions) {
  if (queries.size() != completions.size()) {
    throw InvalidArgument("batch judge request: " + std::to_string(queries.size()) + " queries but " +
                          std::to_string(completions.size()) + " completions");
  }
  if (queries.empty()) throw InvalidArgument("batch judge request is empty");
  const auto q = nlohmann::json(queries).dump();
  const auto c = nlohmann::json(completions).dump();
  return fill_placeholders(prompt_template(PromptKind::kBatchStrong),
                           {{"list_user_queries", q}, {"list_model_completions", c}});
}

}  // namespace leakprobe
