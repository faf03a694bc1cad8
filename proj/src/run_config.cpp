#include "leakprobe/run_config.hpp"

#include <fstream>

#include "leakprobe/errors.hpp"
#include "leakprobe/hash.hpp"

namespace leakprobe {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

HttpChatOptions client_from_json(const json& j) {
  HttpChatOptions o;
  o.endpoint = j.at("endpoint").get<std::string>();
  o.model = j.at("model").get<std::string>();
  o.token_env = j.value("token_env", o.token_env);
  o.timeout_seconds = j.value("timeout_seconds", o.timeout_seconds);
  o.requests_per_second = j.value("requests_per_second", o.requests_per_second);
  if (j.contains("token") || j.contains("api_key")) {
    throw ConfigError("judge tokens must come from the environment (token_env), not the config file");
  }
  return o;
}

json client_to_json(const HttpChatOptions& o) {
  return {{"endpoint", o.endpoint},
          {"model", o.model},
          {"token_env", o.token_env},
          {"timeout_seconds", o.timeout_seconds},
          {"requests_per_second", o.requests_per_second}};
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = from_json(j, path.parent_path());
  c.source = path;
  return c;
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      read(b, "descriptor", c.backend);
      if (b.contains("options")) c.backend_options = b.at("options");
    }
    if (j.contains("template")) {
      const auto& t = j.at("template");
      read(t, "system_text", c.prompt.system_text);
      read(t, "user_query", c.prompt.user_query);
      read(t, "affirmative_text", c.prompt.affirmative_text);
      if (t.contains("frame")) {
        const auto& f = t.at("frame");
        read(f, "system_prefix", c.prompt.frame.system_prefix);
        read(f, "user_prefix", c.prompt.frame.user_prefix);
        read(f, "suffix_prefix", c.prompt.frame.suffix_prefix);
        read(f, "assistant_prefix", c.prompt.frame.assistant_prefix);
      }
    }
    if (j.contains("probe")) {
      const auto& p = j.at("probe");
      read(p, "epochs", c.probe.epochs);
      read(p, "batch_size", c.probe.batch_size);
      read(p, "top_k", c.probe.top_k);
      read(p, "suffix_len", c.probe.suffix_len);
      read(p, "max_new_tokens", c.probe.max_new_tokens);
      read(p, "seed", c.probe.seed);
      read(p, "unconditional_adoption", c.probe.unconditional_adoption);
      read(p, "init_token", c.probe.init_token);
      read(p, "max_resample", c.probe.max_resample);
      if (p.contains("judge_check_interval") && !p.at("judge_check_interval").is_null())
        c.probe.judge_check_interval = p.at("judge_check_interval").get<std::size_t>();
    }
    if (j.contains("judge")) {
      const auto& g = j.at("judge");
      if (g.contains("policy")) c.probe.judge_policy = judge_policy_from_string(g.at("policy").get<std::string>());
      if (g.contains("lexicon")) c.lexicon_path = resolve(base_dir, g.at("lexicon").get<std::string>());
      if (g.contains("fast")) c.fast_client = client_from_json(g.at("fast"));
      if (g.contains("strong")) c.strong_client = client_from_json(g.at("strong"));
      if (g.contains("fast_prompt"))
        c.judge_options.fast_prompt = prompt_kind_from_string(g.at("fast_prompt").get<std::string>());
      read(g, "strong_batch_size", c.judge_options.strong_batch_size);
      if (g.contains("retry")) {
        const auto& r = g.at("retry");
        read(r, "attempts", c.judge_options.retry.attempts);
        if (r.contains("initial_backoff_ms"))
          c.judge_options.retry.initial_backoff = std::chrono::milliseconds(r.at("initial_backoff_ms").get<long long>());
        read(r, "multiplier", c.judge_options.retry.multiplier);
      }
      if (g.contains("cache") && !g.at("cache").is_null())
        c.cache_path = resolve(base_dir, g.at("cache").get<std::string>());
    }
    if (j.contains("corpus")) c.corpus_path = resolve(base_dir, j.at("corpus").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    read(j, "campaign_seed", c.campaign_seed);
    read(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["backend"] = {{"descriptor", backend}, {"options", backend_options}};
  j["template"] = {{"system_text", prompt.system_text},
                   {"user_query", prompt.user_query},
                   {"affirmative_text", prompt.affirmative_text},
                   {"frame",
                    {{"system_prefix", prompt.frame.system_prefix},
                     {"user_prefix", prompt.frame.user_prefix},
                     {"suffix_prefix", prompt.frame.suffix_prefix},
                     {"assistant_prefix", prompt.frame.assistant_prefix}}}};
  j["probe"] = {{"epochs", probe.epochs},
                {"batch_size", probe.batch_size},
                {"top_k", probe.top_k},
                {"suffix_len", probe.suffix_len},
                {"max_new_tokens", probe.max_new_tokens},
                {"judge_check_interval", probe.check_interval()},
                {"seed", probe.seed},
                {"unconditional_adoption", probe.unconditional_adoption},
                {"init_token", probe.init_token},
                {"max_resample", probe.max_resample}};
  json g = {{"policy", to_string(probe.judge_policy)},
            {"fast_prompt", to_string(judge_options.fast_prompt)},
            {"strong_batch_size", judge_options.strong_batch_size},
            {"retry",
             {{"attempts", judge_options.retry.attempts},
              {"initial_backoff_ms", judge_options.retry.initial_backoff.count()},
              {"multiplier", judge_options.retry.multiplier}}},
            {"prompt_version", kPromptTemplateVersion}};
  if (lexicon_path) g["lexicon"] = lexicon_path->string();
  if (fast_client) g["fast"] = client_to_json(*fast_client);
  if (strong_client) g["strong"] = client_to_json(*strong_client);
  j["judge"] = std::move(g);
  if (corpus_path) j["corpus"] = corpus_path->string();
  j["campaign_seed"] = campaign_seed;
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

void RunConfig::validate() const {
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
  if (prompt.affirmative_text.empty()) throw ConfigError("template.affirmative_text is empty");
  const auto policy = probe.judge_policy;
  if (policy == JudgePolicyKind::kLexicon && !lexicon_path) throw ConfigError("lexicon policy needs judge.lexicon");
  if ((policy == JudgePolicyKind::kFast || policy == JudgePolicyKind::kHybrid) && !fast_client)
    throw ConfigError(to_string(policy) + " policy needs judge.fast");
  if ((policy == JudgePolicyKind::kStrong || policy == JudgePolicyKind::kHybrid) && !strong_client)
    throw ConfigError(to_string(policy) + " policy needs judge.strong");
  if (lexicon_path && !std::filesystem::exists(*lexicon_path))
    throw ConfigError("lexicon file not found: " + lexicon_path->string());
  if (corpus_path && !std::filesystem::exists(*corpus_path))
    throw ConfigError("corpus file not found: " + corpus_path->string());
}

std::shared_ptr<LanguageModel> RunConfig::make_model() const {
  auto model = BackendRegistry::instance().create(backend, backend_options);
  probe.validate(model->vocab());
  return model;
}

JudgePolicy RunConfig::make_judge() const {
  std::shared_ptr<const CanonLexicon> lexicon;
  if (lexicon_path) lexicon = std::make_shared<CanonLexicon>(CanonLexicon::load(*lexicon_path));
  std::shared_ptr<JudgeClient> fast, strong;
  const auto policy = probe.judge_policy;
  if (fast_client && (policy == JudgePolicyKind::kFast || policy == JudgePolicyKind::kHybrid))
    fast = std::make_shared<HttpChatClient>(*fast_client);
  if (strong_client && (policy == JudgePolicyKind::kStrong || policy == JudgePolicyKind::kHybrid))
    strong = std::make_shared<HttpChatClient>(*strong_client);
  std::shared_ptr<VerdictCache> cache;
  if (cache_path) cache = std::make_shared<VerdictCache>(*cache_path);
  return JudgePolicy(policy, std::move(lexicon), std::move(fast), std::move(strong), std::move(cache),
                     judge_options);
}

}  // namespace leakprobe
