#include "leakprobe/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "leakprobe/errors.hpp"
#include "leakprobe/records.hpp"
#include "leakprobe/rng.hpp"

namespace leakprobe {

// ---- corpus ---------------------------------------------------------------

QueryCorpus QueryCorpus::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file " + path.string());
  QueryCorpus c;
  c.source_path = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected <id><TAB><prompt>");
    }
    std::int64_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoll(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad query id");
    }
    c.queries.emplace_back(id, line.substr(tab + 1));
  }
  c.validate();
  return c;
}

QueryCorpus QueryCorpus::from_queries(std::vector<std::pair<std::int64_t, std::string>> queries,
                                      std::string source) {
  QueryCorpus c{std::move(queries), std::move(source)};
  c.validate();
  return c;
}

void QueryCorpus::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& [id, text] : queries) {
    if (!ids.insert(id).second) throw ConfigError("duplicate query id " + std::to_string(id));
    if (text.empty()) throw ConfigError("query " + std::to_string(id) + " is empty");
  }
}

// ---- passes ---------------------------------------------------------------

std::vector<BaselineEntry> baseline_pass(const LanguageModel& model, const QueryCorpus& corpus,
                                         const PromptTemplate& tmpl, const JudgePolicy& judge,
                                         std::size_t max_new_tokens) {
  std::vector<BaselineEntry> out;
  std::vector<std::size_t> ok;
  std::vector<std::string> queries, completions;
  for (const auto& [id, text] : corpus.queries) {
    BaselineEntry e;
    e.id = id;
    try {
      e.completion = generate(model, render_plain(tmpl.with_query(text), model.tokenizer()), max_new_tokens);
      ok.push_back(out.size());
      queries.push_back(text);
      completions.push_back(e.completion);
    } catch (const Error& err) {
      spdlog::warn("baseline query {}: {}", id, err.what());
      e.error = err.what();
      e.verdict = JudgeVerdict::make_unknown("none", err.what());
    }
    out.push_back(std::move(e));
  }
  auto verdicts = judge.judge_all(queries, completions);
  for (std::size_t i = 0; i < ok.size(); ++i) out[ok[i]].verdict = std::move(verdicts[i]);
  return out;
}

std::vector<ProbeEntry> probe_pass(const LanguageModel& model, const QueryCorpus& corpus,
                                   const PromptTemplate& tmpl, const ProbeConfig& config,
                                   const JudgePolicy& judge, const PassOptions& options) {
  const std::set<std::int64_t> skip(options.skip.begin(), options.skip.end());
  std::vector<std::pair<std::int64_t, std::string>> todo;
  for (const auto& q : corpus.queries)
    if (!skip.count(q.first)) todo.push_back(q);

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, todo.size()));
  std::shared_ptr<const LanguageModel> shared(&model, [](const LanguageModel*) {});
  if (jobs > 1 && !model.concurrent_safe()) shared = std::make_shared<SerializedModel>(shared);

  std::vector<ProbeEntry> out;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      if (options.stop != nullptr && options.stop->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const auto& [id, text] = todo[i];
      ProbeEntry entry;
      entry.id = id;
      ProbeConfig cfg = config;
      cfg.seed = derive_seed(options.campaign_seed, id);
      try {
        entry.result = probe(*shared, tmpl.with_query(text), cfg, judge, ProbeHooks{options.stop, {}});
      } catch (const Error& err) {
        spdlog::warn("probe query {}: {}", id, err.what());
        entry.error = err.what();
      }
      // A probe cut short by the stop flag is incomplete; leave it for resume.
      if (options.stop != nullptr && options.stop->load() && entry.result && !entry.result->leaked &&
          entry.result->epochs.size() < cfg.epochs) {
        return;
      }
      std::lock_guard lock(mu);
      if (options.on_done) options.on_done(entry);
      out.push_back(std::move(entry));
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::sort(out.begin(), out.end(), [](const ProbeEntry& a, const ProbeEntry& b) { return a.id < b.id; });
  return out;
}

// ---- report ---------------------------------------------------------------

QueryOutcome outcome_of(const BaselineEntry& e) {
  QueryOutcome o;
  o.id = e.id;
  o.unknown = e.verdict.unknown();
  o.leaked = e.verdict.leaked();
  o.leak_count = o.leaked ? e.verdict.score : 0;
  return o;
}

QueryOutcome outcome_of(const ProbeEntry& e, const QueryOutcome& baseline) {
  QueryOutcome o;
  o.id = e.id;
  if (!e.result) {
    o.unknown = true;
    return o;
  }
  const ProbeResult& r = *e.result;
  if (r.verdicts.empty()) {
    o = baseline;
    o.id = e.id;
    return o;
  }
  o.leaked = r.leaked;
  o.stop_epoch = r.stop_epoch;
  if (r.leaked) {
    o.leak_count = r.verdicts.back().second.score;
  } else {
    o.unknown = std::all_of(r.verdicts.begin(), r.verdicts.end(),
                            [](const auto& v) { return v.second.unknown(); });
  }
  return o;
}

std::string RateCount::formatted() const {
  if (judged == 0) return "n/a";
  const std::uint64_t tenths = (2000 * static_cast<std::uint64_t>(leaked) + judged) / (2 * judged);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

std::optional<double> RateCount::percent() const {
  if (judged == 0) return std::nullopt;
  return 100.0 * static_cast<double>(leaked) / static_cast<double>(judged);
}

std::size_t CampaignReport::regressions() const {
  return static_cast<std::size_t>(
      std::count_if(per_query.begin(), per_query.end(), [](const Row& r) { return r.regression; }));
}

CampaignReport build_report(const std::string& model_descriptor, std::vector<QueryOutcome> before,
                            std::vector<QueryOutcome> after) {
  auto by_id = [](const QueryOutcome& a, const QueryOutcome& b) { return a.id < b.id; };
  std::sort(before.begin(), before.end(), by_id);
  std::sort(after.begin(), after.end(), by_id);
  auto same_id = [](const QueryOutcome& a, const QueryOutcome& b) { return a.id == b.id; };
  if (std::adjacent_find(before.begin(), before.end(), same_id) != before.end() ||
      std::adjacent_find(after.begin(), after.end(), same_id) != after.end()) {
    throw InvalidArgument("build_report: duplicate query ids");
  }
  if (!std::equal(before.begin(), before.end(), after.begin(), after.end(), same_id)) {
    throw InvalidArgument("build_report: before and after cover different query ids");
  }

  CampaignReport r;
  r.model_descriptor = model_descriptor;
  auto tally = [](RateCount& c, const QueryOutcome& o) {
    if (o.unknown) {
      ++c.unknown;
      return;
    }
    ++c.judged;
    if (o.leaked) ++c.leaked;
  };
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& b = before[i];
    const auto& a = after[i];
    tally(r.before, b);
    tally(r.after, a);
    CampaignReport::Row row;
    row.id = b.id;
    row.leaked_before = b.leaked;
    row.leaked_after = a.leaked;
    row.leak_count_after = a.leak_count;
    row.stop_epoch = a.stop_epoch;
    row.unknown_before = b.unknown;
    row.unknown_after = a.unknown;
    row.regression = b.leaked && !a.leaked && !a.unknown;
    r.per_query.push_back(row);
  }
  for (const auto& row : r.per_query) {
    if (row.regression) spdlog::info("query {} leaked before probing but not after", row.id);
  }
  return r;
}

std::string format_table(const CampaignReport& report) {
  const std::size_t name_w = std::max<std::size_t>(3, report.model_descriptor.size()) + 2;
  std::ostringstream os;
  os << "Leak rate %, B = plain query, A = after suffix search\n";
  os << std::left << std::setw(static_cast<int>(name_w)) << "LLM" << std::right << std::setw(7) << "B"
     << std::setw(7) << "A" << "\n";
  os << std::string(name_w + 14, '-') << "\n";
  os << std::left << std::setw(static_cast<int>(name_w)) << report.model_descriptor << std::right
     << std::setw(7) << report.rate_before() << std::setw(7) << report.rate_after() << "\n";
  os << std::string(name_w + 14, '-') << "\n";
  os << "queries " << report.per_query.size() << "; leaked " << report.before.leaked << " -> "
     << report.after.leaked << "; unknown " << report.before.unknown << " / " << report.after.unknown
     << "; leaked before only " << report.regressions() << "\n";
  return os.str();
}

std::string format_records(const CampaignReport& report) {
  std::string out;
  ojson head;
  head["record"] = "report";
  head["model_descriptor"] = report.model_descriptor;
  head["queries"] = report.per_query.size();
  head["rate_before"] = report.rate_before();
  head["rate_after"] = report.rate_after();
  head["leaked_before"] = report.before.leaked;
  head["leaked_after"] = report.after.leaked;
  head["judged_before"] = report.before.judged;
  head["judged_after"] = report.after.judged;
  head["unknown_before"] = report.before.unknown;
  head["unknown_after"] = report.after.unknown;
  head["regressions"] = report.regressions();
  out += head.dump() + "\n";
  for (const auto& row : report.per_query) {
    ojson j;
    j["record"] = "query";
    j["id"] = row.id;
    j["leaked_before"] = row.leaked_before;
    j["leaked_after"] = row.leaked_after;
    j["leak_count_after"] = row.leak_count_after;
    j["stop_epoch"] = row.stop_epoch ? ojson(*row.stop_epoch) : ojson(nullptr);
    j["unknown_before"] = row.unknown_before;
    j["unknown_after"] = row.unknown_after;
    j["regression"] = row.regression;
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_leak_csv(const CampaignReport& report) {
  std::string out = "id,leaked_before,leaked_after,leak_count_after,stop_epoch\n";
  for (const auto& row : report.per_query) {
    out += std::to_string(row.id) + "," + (row.leaked_before ? "1" : "0") + "," +
           (row.leaked_after ? "1" : "0") + "," + std::to_string(row.leak_count_after) + "," +
           (row.stop_epoch ? std::to_string(*row.stop_epoch) : std::string()) + "\n";
  }
  return out;
}

// ---- campaign -------------------------------------------------------------

namespace {

struct Checkpoint {
  std::map<std::int64_t, BaselineEntry> baseline;
  std::map<std::int64_t, ProbeEntry> probes;
};

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Checkpoint cp;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = ojson::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      const auto id = j.at("id").get<std::int64_t>();
      if (kind == "baseline") {
        BaselineEntry e;
        e.id = id;
        e.completion = j.at("completion").get<std::string>();
        e.verdict = verdict_from_json(j.at("verdict"));
        e.error = j.value("error", "");
        cp.baseline[id] = std::move(e);
      } else if (kind == "probe") {
        ProbeEntry e;
        e.id = id;
        if (!j.at("result").is_null()) e.result = probe_result_from_json(j.at("result"));
        e.error = j.value("error", "");
        cp.probes[id] = std::move(e);
      }
    } catch (const std::exception& e) {
      spdlog::warn("checkpoint {}: skipping unreadable line ({})", path.string(), e.what());
    }
  }
  return cp;
}

ojson checkpoint_record(const BaselineEntry& e) {
  ojson j;
  j["kind"] = "baseline";
  j["id"] = e.id;
  j["completion"] = e.completion;
  j["verdict"] = to_json(e.verdict);
  j["error"] = e.error;
  return j;
}

ojson checkpoint_record(const ProbeEntry& e) {
  ojson j;
  j["kind"] = "probe";
  j["id"] = e.id;
  j["result"] = e.result ? to_json(*e.result, true) : ojson(nullptr);
  j["error"] = e.error;
  return j;
}

}  // namespace

CampaignResult run_campaign(const LanguageModel& model, const QueryCorpus& corpus,
                            const PromptTemplate& tmpl, const ProbeConfig& config,
                            const JudgePolicy& judge, const CampaignOptions& options) {
  Checkpoint cp;
  std::ofstream log;
  if (options.checkpoint) {
    if (options.resume) {
      cp = read_checkpoint(*options.checkpoint);
      spdlog::info("resuming: {} baseline and {} probe results restored", cp.baseline.size(), cp.probes.size());
    }
    log.open(*options.checkpoint, options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw ConfigError("cannot write checkpoint " + options.checkpoint->string());
  }
  auto persist = [&](const ojson& rec) {
    if (log.is_open()) {
      log << rec.dump() << '\n';
      log.flush();
    }
  };

  QueryCorpus fresh;
  for (const auto& q : corpus.queries)
    if (!cp.baseline.count(q.first)) fresh.queries.push_back(q);
  for (auto& e : baseline_pass(model, fresh, tmpl, judge, config.max_new_tokens)) {
    persist(checkpoint_record(e));
    cp.baseline[e.id] = std::move(e);
  }

  PassOptions pass = options.pass;
  for (const auto& [id, e] : cp.probes) pass.skip.push_back(id);
  pass.on_done = [&](const ProbeEntry& e) {
    persist(checkpoint_record(e));
    if (options.pass.on_done) options.pass.on_done(e);
  };
  for (auto& e : probe_pass(model, corpus, tmpl, config, judge, pass)) cp.probes[e.id] = std::move(e);

  if (options.pass.stop != nullptr && options.pass.stop->load()) {
    throw Interrupted("campaign interrupted; " + std::to_string(cp.probes.size()) + " of " +
                      std::to_string(corpus.size()) + " queries checkpointed");
  }

  CampaignResult out;
  std::vector<QueryOutcome> before, after;
  for (const auto& [id, text] : corpus.queries) {
    const BaselineEntry& b = cp.baseline.at(id);
    const ProbeEntry& p = cp.probes.at(id);
    before.push_back(outcome_of(b));
    after.push_back(outcome_of(p, before.back()));
    out.before.push_back(b);
    out.after.push_back(p);
  }
  out.report = build_report(model.descriptor(), std::move(before), std::move(after));
  return out;
}

}  // namespace leakprobe
