#include "leakprobe/judge.hpp"

#include <spdlog/spdlog.h>

#include <map>

#include "leakprobe/errors.hpp"
#include "leakprobe/hash.hpp"

namespace leakprobe {

// ---- cache ----------------------------------------------------------------

VerdictCache::VerdictCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::ifstream in(*path_); in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = ojson::parse(line);
        entries_[j.at("key").get<std::string>()] = verdict_from_json(j.at("verdict"));
      } catch (const std::exception& e) {
        // A torn final line after a crash is expected; anything else is worth a note.
        spdlog::warn("verdict cache {}:{} skipped: {}", path_->string(), lineno, e.what());
      }
    }
  }
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  out_.open(*path_, std::ios::app);
  if (!out_) throw ConfigError("cannot write verdict cache " + path_->string());
}

std::string VerdictCache::key(const std::string& policy_key, std::string_view query,
                              std::string_view completion) {
  std::string material = policy_key;
  material += '\x1f';
  material += query;
  material += '\x1f';
  material += completion;
  return sha256_hex(material);
}

std::optional<JudgeVerdict> VerdictCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void VerdictCache::put(const std::string& key, const JudgeVerdict& verdict) {
  if (verdict.unknown()) return;
  std::lock_guard lock(mu_);
  auto [it, inserted] = entries_.try_emplace(key, verdict);
  if (!inserted) {
    if (!same_content(it->second, verdict)) {
      ++divergences_;
      spdlog::warn("verdict cache: diverging verdicts for key {} (score {} -> {})", key.substr(0, 12),
                   it->second.score, verdict.score);
    }
    it->second = verdict;
  }
  if (out_.is_open()) {
    ojson rec;
    rec["key"] = key;
    rec["verdict"] = to_json(verdict);
    out_ << rec.dump() << '\n';
    out_.flush();
  }
}

std::size_t VerdictCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t VerdictCache::divergences() const {
  std::lock_guard lock(mu_);
  return divergences_;
}

// ---- policy ---------------------------------------------------------------

namespace {

constexpr const char* kReaskNote = "\n\nRespond with only the JSON described above.";

}  // namespace

JudgePolicy::JudgePolicy(JudgePolicyKind kind, std::shared_ptr<const CanonLexicon> lexicon,
                         std::shared_ptr<JudgeClient> fast, std::shared_ptr<JudgeClient> strong,
                         std::shared_ptr<VerdictCache> cache, JudgeOptions options)
    : kind_(kind),
      lexicon_(std::move(lexicon)),
      fast_(std::move(fast)),
      strong_(std::move(strong)),
      cache_(std::move(cache)),
      options_(options) {
  const bool need_fast = kind_ == JudgePolicyKind::kFast || kind_ == JudgePolicyKind::kHybrid;
  const bool need_strong = kind_ == JudgePolicyKind::kStrong || kind_ == JudgePolicyKind::kHybrid;
  if (kind_ == JudgePolicyKind::kLexicon && !lexicon_) throw ConfigError("lexicon policy needs a lexicon");
  if (need_fast && !fast_) throw ConfigError(to_string(kind_) + " policy needs a fast judge client");
  if (need_strong && !strong_) throw ConfigError(to_string(kind_) + " policy needs a strong judge client");
  if (options_.strong_batch_size == 0) throw ConfigError("strong_batch_size must be positive");
}

JudgePolicy JudgePolicy::lexicon(std::shared_ptr<const CanonLexicon> lex,
                                 std::shared_ptr<VerdictCache> cache) {
  return JudgePolicy(JudgePolicyKind::kLexicon, std::move(lex), nullptr, nullptr, std::move(cache));
}

std::string JudgePolicy::key() const {
  std::string k = to_string(kind_) + "|" + kPromptTemplateVersion;
  switch (kind_) {
    case JudgePolicyKind::kLexicon:
      k += "|lexicon:" + lexicon_->fingerprint();
      break;
    case JudgePolicyKind::kFast:
      k += "|fast:" + fast_->id() + ":" + to_string(options_.fast_prompt);
      break;
    case JudgePolicyKind::kStrong:
      k += "|strong:" + strong_->id();
      break;
    case JudgePolicyKind::kHybrid:
      k += "|fast:" + fast_->id() + ":" + to_string(options_.fast_prompt) + "|strong:" + strong_->id();
      break;
  }
  return k;
}

JudgeVerdict JudgePolicy::ask_single(JudgeClient& client, PromptKind kind, const std::string& query,
                                     const std::string& completion) const {
  const std::string prompt = build_judge_request(query, completion, kind);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string raw;
    try {
      raw = complete_with_retry(client, attempt == 0 ? prompt : prompt + kReaskNote, options_.retry);
    } catch (const JudgeTransportError& e) {
      spdlog::warn("judge {} unavailable: {}", client.id(), e.what());
      return JudgeVerdict::make_unknown(client.id(), e.what());
    }
    try {
      if (kind == PromptKind::kBatchStrong) {
        auto entries = parse_batch_verdicts(raw, client.id());
        for (auto& [index, v] : entries)
          if (index == 0) return std::move(v);
        throw MalformedVerdict("batch response has no entry for index 0", raw);
      }
      return parse_verdict(raw, client.id());
    } catch (const MalformedVerdict& e) {
      spdlog::warn("judge {} returned a malformed verdict ({}){}", client.id(), e.what(),
                   attempt == 0 ? "; asking again" : "");
    }
  }
  return JudgeVerdict::make_unknown(client.id(), "malformed verdict after re-ask");
}

std::vector<JudgeVerdict> JudgePolicy::ask_strong(const std::vector<std::string>& queries,
                                                  const std::vector<std::string>& completions) const {
  std::vector<JudgeVerdict> out(queries.size());
  const std::size_t chunk = options_.strong_batch_size;
  for (std::size_t lo = 0; lo < queries.size(); lo += chunk) {
    const std::size_t hi = std::min(queries.size(), lo + chunk);
    const std::vector<std::string> q(queries.begin() + lo, queries.begin() + hi);
    const std::vector<std::string> c(completions.begin() + lo, completions.begin() + hi);
    const std::string prompt = build_batch_request(q, c);

    std::map<int, JudgeVerdict> got;
    for (int attempt = 0; attempt < 2 && got.size() < q.size(); ++attempt) {
      std::string raw;
      try {
        raw = complete_with_retry(*strong_, attempt == 0 ? prompt : prompt + kReaskNote, options_.retry);
      } catch (const JudgeTransportError& e) {
        spdlog::warn("judge {} unavailable: {}", strong_->id(), e.what());
        break;
      }
      try {
        for (auto& [index, v] : parse_batch_verdicts(raw, strong_->id())) {
          if (index >= 0 && static_cast<std::size_t>(index) < q.size()) got.insert_or_assign(index, std::move(v));
        }
      } catch (const MalformedVerdict& e) {
        spdlog::warn("judge {} returned a malformed batch ({})", strong_->id(), e.what());
      }
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
      auto it = got.find(static_cast<int>(i));
      out[lo + i] = it != got.end() ? std::move(it->second)
                                    : JudgeVerdict::make_unknown(strong_->id(), "no verdict for batch entry");
    }
  }
  return out;
}

JudgeVerdict JudgePolicy::uncached(const std::string& query, const std::string& completion) const {
  switch (kind_) {
    case JudgePolicyKind::kLexicon:
      return lexicon_check(query, completion, *lexicon_);
    case JudgePolicyKind::kFast:
      return ask_single(*fast_, options_.fast_prompt, query, completion);
    case JudgePolicyKind::kStrong:
      return ask_single(*strong_, PromptKind::kBatchStrong, query, completion);
    case JudgePolicyKind::kHybrid: {
      JudgeVerdict fast = ask_single(*fast_, options_.fast_prompt, query, completion);
      if (!fast.leaked()) return fast;
      return ask_single(*strong_, PromptKind::kBatchStrong, query, completion);
    }
  }
  throw InvalidArgument("unknown judge policy");
}

JudgeVerdict JudgePolicy::judge(const std::string& query, const std::string& completion) const {
  std::string k;
  if (cache_) {
    k = VerdictCache::key(key(), query, completion);
    if (auto hit = cache_->get(k)) return *hit;
  }
  JudgeVerdict v = uncached(query, completion);
  if (cache_) cache_->put(k, v);
  return v;
}

std::vector<JudgeVerdict> JudgePolicy::judge_all(const std::vector<std::string>& queries,
                                                 const std::vector<std::string>& completions) const {
  if (queries.size() != completions.size()) throw InvalidArgument("judge_all: list lengths differ");
  const bool batches = kind_ == JudgePolicyKind::kStrong || kind_ == JudgePolicyKind::kHybrid;
  if (!batches) {
    std::vector<JudgeVerdict> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(judge(queries[i], completions[i]));
    return out;
  }

  std::vector<JudgeVerdict> out(queries.size());
  std::vector<std::string> keys(queries.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (cache_) {
      keys[i] = VerdictCache::key(key(), queries[i], completions[i]);
      if (auto hit = cache_->get(keys[i])) {
        out[i] = *hit;
        continue;
      }
    }
    if (kind_ == JudgePolicyKind::kHybrid) {
      out[i] = ask_single(*fast_, options_.fast_prompt, queries[i], completions[i]);
      if (!out[i].leaked()) {
        if (cache_) cache_->put(keys[i], out[i]);
        continue;
      }
    }
    pending.push_back(i);
  }

  std::vector<std::string> q, c;
  for (std::size_t i : pending) {
    q.push_back(queries[i]);
    c.push_back(completions[i]);
  }
  if (!pending.empty()) {
    auto strong = ask_strong(q, c);
    for (std::size_t j = 0; j < pending.size(); ++j) {
      out[pending[j]] = std::move(strong[j]);
      if (cache_) cache_->put(keys[pending[j]], out[pending[j]]);
    }
  }
  return out;
}

}  // namespace leakprobe
