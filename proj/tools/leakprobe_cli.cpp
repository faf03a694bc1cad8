// leakprobe: adversarial suffix probing of unlearned language models.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>

#include "leakprobe/errors.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/prompts.hpp"
#include "leakprobe/records.hpp"
#include "leakprobe/run_config.hpp"

namespace fs = std::filesystem;
using namespace leakprobe;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Overrides {
  std::string config;
  std::string query;
  std::optional<std::size_t> epochs, batch_size, top_k, suffix_len, jobs;
  std::optional<std::string> judge;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool resume = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--epochs", o.epochs, "Optimization epochs E");
  cmd->add_option("--batch-size", o.batch_size, "Candidates per epoch B");
  cmd->add_option("--top-k", o.top_k, "Candidates per position k");
  cmd->add_option("--suffix-len", o.suffix_len, "Adversarial suffix length");
  cmd->add_option("--judge", o.judge, "Judge policy")
      ->check(CLI::IsMember({"lexicon", "fast", "strong", "hybrid"}));
  cmd->add_option("--seed", o.seed, "Probe and campaign seed");
  cmd->add_option("--out", o.out, "Output directory");
}

RunConfig load_config(const Overrides& o) {
  RunConfig c = RunConfig::load(o.config);
  if (o.epochs) c.probe.epochs = *o.epochs;
  if (o.batch_size) c.probe.batch_size = *o.batch_size;
  if (o.top_k) c.probe.top_k = *o.top_k;
  if (o.suffix_len) c.probe.suffix_len = *o.suffix_len;
  if (o.judge) c.probe.judge_policy = judge_policy_from_string(*o.judge);
  if (o.seed) {
    c.probe.seed = *o.seed;
    c.campaign_seed = *o.seed;
  }
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.output_dir = *o.out;
  if (!o.query.empty()) c.prompt.user_query = o.query;
  c.validate();
  return c;
}

ojson run_header(const RunConfig& c, const LanguageModel& model, const JudgePolicy& judge,
                 const std::string& command) {
  ojson h;
  h["record"] = "header";
  h["command"] = command;
  h["config_hash"] = c.hash();
  h["backend"] = model.descriptor();
  h["probe_seed"] = c.probe.seed;
  h["campaign_seed"] = c.campaign_seed;
  h["template_version"] = kPromptTemplateVersion;
  h["judge"] = judge.key();
  h["config"] = c.to_json();
  return h;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + (dir / name).string());
  return out;
}

int cmd_probe(const Overrides& o) {
  const RunConfig c = load_config(o);
  if (c.prompt.user_query.empty()) throw ConfigError("no query: set template.user_query or pass --query");
  const auto model = c.make_model();
  const JudgePolicy judge = c.make_judge();

  auto log = open_out(c.output_dir, "probe.jsonl");
  log << run_header(c, *model, judge, "probe").dump() << '\n';
  ProbeHooks hooks;
  hooks.stop = &g_stop;
  hooks.on_epoch = [&](const EpochRecord& r) {
    ojson j = to_json(r);
    j["record"] = "epoch";
    log << j.dump() << '\n';
  };
  const ProbeResult r = probe(*model, c.prompt, c.probe, judge, hooks);
  ojson fin = to_json(r);
  fin["record"] = "result";
  log << fin.dump() << '\n';

  std::cout << "suffix: " << ojson(r.suffix_text).dump() << "\n"
            << "final_loss: " << r.final_loss << "\n"
            << "leaked=" << (r.leaked ? "true" : "false") << "\n";
  if (r.stop_epoch) std::cout << "stop_epoch: " << *r.stop_epoch << "\n";
  if (!r.completions.empty()) std::cout << "completion: " << ojson(r.completions.back().second).dump() << "\n";
  std::cout << "log: " << (c.output_dir / "probe.jsonl").string() << "\n";
  if (g_stop.load()) return 130;
  return 0;
}

int cmd_campaign(const Overrides& o) {
  const RunConfig c = load_config(o);
  if (!c.corpus_path) throw ConfigError("campaign needs a corpus path in the config");
  const auto model = c.make_model();
  const JudgePolicy judge = c.make_judge();
  const QueryCorpus corpus = QueryCorpus::load(*c.corpus_path);

  fs::create_directories(c.output_dir);
  {
    auto head = open_out(c.output_dir, "run.jsonl");
    head << run_header(c, *model, judge, "campaign").dump() << '\n';
  }
  CampaignOptions opts;
  opts.pass.jobs = c.jobs;
  opts.pass.campaign_seed = c.campaign_seed;
  opts.pass.stop = &g_stop;
  opts.checkpoint = c.output_dir / "checkpoint.jsonl";
  opts.resume = o.resume;

  CampaignResult res;
  try {
    res = run_campaign(*model, corpus, c.prompt, c.probe, judge, opts);
  } catch (const Interrupted& e) {
    spdlog::warn("{}; rerun with --resume to continue", e.what());
    return 130;
  }
  open_out(c.output_dir, "report.txt") << format_table(res.report);
  open_out(c.output_dir, "report.jsonl") << format_records(res.report);
  open_out(c.output_dir, "leak_counts.csv") << format_leak_csv(res.report);
  std::cout << format_table(res.report) << "reports: " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_judge(const Overrides& o, const std::string& completion, const std::string& completion_file) {
  const RunConfig c = load_config(o);
  if (c.prompt.user_query.empty()) throw ConfigError("judge needs --query");
  std::string text = completion;
  if (!completion_file.empty()) {
    std::ifstream in(completion_file);
    if (!in) throw ConfigError("cannot open " + completion_file);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const JudgePolicy judge = c.make_judge();
  const JudgeVerdict v = judge.judge(c.prompt.user_query, text);
  std::cout << to_json(v).dump(2) << "\n";
  if (v.unknown()) {
    spdlog::error("judge unavailable; verdict is UNKNOWN");
    return 3;
  }
  return 0;
}

int cmd_backends() {
  for (const auto& [name, summary] : BackendRegistry::instance().list()) std::cout << name << "\t" << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("leakprobe"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Adversarial suffix probing of unlearned language models"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Overrides probe_o, campaign_o, judge_o;
  std::string completion, completion_file;

  auto* probe_cmd = app.add_subcommand("probe", "Optimize a suffix for one query");
  add_common(probe_cmd, probe_o);
  probe_cmd->add_option("--query", probe_o.query, "User query (overrides the config)");

  auto* campaign_cmd = app.add_subcommand("campaign", "Baseline + probe pass over a corpus, with reports");
  add_common(campaign_cmd, campaign_o);
  campaign_cmd->add_option("--jobs", campaign_o.jobs, "Concurrent probes");
  campaign_cmd->add_flag("--resume", campaign_o.resume, "Continue from the output directory's checkpoint");

  auto* judge_cmd = app.add_subcommand("judge", "Run the leakage check on one completion");
  judge_cmd->add_option("--config", judge_o.config, "Run configuration (JSON)")->required();
  judge_cmd->add_option("--query", judge_o.query, "User query")->required();
  auto* c_opt = judge_cmd->add_option("--completion", completion, "Completion text");
  auto* f_opt = judge_cmd->add_option("--completion-file", completion_file, "Read the completion from a file");
  c_opt->excludes(f_opt);
  judge_cmd->add_option("--judge", judge_o.judge, "Judge policy")
      ->check(CLI::IsMember({"lexicon", "fast", "strong", "hybrid"}));

  auto* backends_cmd = app.add_subcommand("backends", "List model backends");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  std::signal(SIGINT, on_sigint);

  try {
    if (probe_cmd->parsed()) return cmd_probe(probe_o);
    if (campaign_cmd->parsed()) return cmd_campaign(campaign_o);
    if (judge_cmd->parsed()) return cmd_judge(judge_o, completion, completion_file);
    if (backends_cmd->parsed()) return cmd_backends();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
