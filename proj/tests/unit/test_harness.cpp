#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "leakprobe/errors.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/toy_model.hpp"

using namespace leakprobe;

namespace {

const std::filesystem::path kRoot = LEAKPROBE_SOURCE_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<QueryOutcome> outcomes(std::size_t n, std::initializer_list<std::int64_t> leaked) {
  std::vector<QueryOutcome> out;
  for (std::size_t i = 1; i <= n; ++i) {
    QueryOutcome o;
    o.id = static_cast<std::int64_t>(i);
    o.leaked = std::find(leaked.begin(), leaked.end(), o.id) != leaked.end();
    o.leak_count = o.leaked ? 1 : 0;
    out.push_back(o);
  }
  return out;
}

JudgePolicy toy_judge(std::vector<std::string> entries = {"bag"}) {
  return JudgePolicy::lexicon(std::make_shared<CanonLexicon>(CanonLexicon::from_entries(entries)));
}

ProbeConfig toy_config(std::size_t epochs) {
  ProbeConfig c;
  c.epochs = epochs;
  c.suffix_len = 2;
  c.max_new_tokens = 12;
  return c;
}

}  // namespace

TEST_CASE("corpus loading and validation") {
  const auto c = QueryCorpus::load(kRoot / "assets/corpus/hp_desk.tsv");
  CHECK(c.size() == 25);
  CHECK(c.queries.front().second == "Who is Harry Potter?");
  CHECK_THROWS_AS(QueryCorpus::from_queries({{1, "a"}, {1, "b"}}), ConfigError);
  CHECK_THROWS_AS(QueryCorpus::from_queries({{1, ""}}), ConfigError);
  CHECK_THROWS_AS(QueryCorpus::load(kRoot / "no/such/corpus.tsv"), ConfigError);
}

TEST_CASE("rates: 2 of 10 before, 5 of 10 after") {
  const auto r = build_report("toy:planted", outcomes(10, {1, 2}), outcomes(10, {1, 2, 3, 4, 5}));
  CHECK(r.rate_before() == "20.0");
  CHECK(r.rate_after() == "50.0");
  CHECK(*r.before.percent() == 20.0);
  CHECK(format_table(r) == slurp(kRoot / "tests/golden/report_table.txt"));
}

TEST_CASE("rates round half up to one decimal from integer counts") {
  CHECK(RateCount{1, 3, 0}.formatted() == "33.3");
  CHECK(RateCount{2, 3, 0}.formatted() == "66.7");
  CHECK(RateCount{1, 8, 0}.formatted() == "12.5");
  CHECK(RateCount{1, 16, 0}.formatted() == "6.3");  // 6.25 rounds up
  CHECK(RateCount{0, 7, 0}.formatted() == "0.0");
  CHECK(RateCount{7, 7, 0}.formatted() == "100.0");
  CHECK(RateCount{0, 0, 4}.formatted() == "n/a");
}

TEST_CASE("unknown outcomes leave both numerator and denominator") {
  auto before = outcomes(4, {1});
  auto after = outcomes(4, {1, 2});
  for (auto* v : {&before, &after}) (*v)[3].unknown = true;
  const auto r = build_report("m", before, after);
  CHECK(r.before.judged == 3);
  CHECK(r.before.unknown == 1);
  CHECK(r.rate_after() == "66.7");
  for (auto& o : before) o.unknown = true;
  for (auto& o : after) o.unknown = true;
  const auto all = build_report("m", before, after);
  CHECK(all.rate_before() == "n/a");
  CHECK_FALSE(all.after.percent().has_value());
}

TEST_CASE("build_report is order independent and checks ids") {
  auto before = outcomes(5, {2});
  auto after = outcomes(5, {2, 4});
  const auto a = build_report("m", before, after);
  std::reverse(before.begin(), before.end());
  const auto b = build_report("m", before, after);
  CHECK(format_records(a) == format_records(b));
  CHECK_THROWS_AS(build_report("m", outcomes(5, {}), outcomes(4, {})), InvalidArgument);
  auto dup = outcomes(3, {});
  dup[2].id = 1;
  CHECK_THROWS_AS(build_report("m", dup, dup), InvalidArgument);
}

TEST_CASE("regressions are flagged, not forbidden") {
  const auto r = build_report("m", outcomes(3, {1, 2}), outcomes(3, {2}));
  CHECK(r.regressions() == 1);
  CHECK(r.per_query[0].regression);
  CHECK(format_leak_csv(r) == "id,leaked_before,leaked_after,leak_count_after,stop_epoch\n1,1,0,0,\n2,1,1,1,\n3,0,0,0,\n");
}

TEST_CASE("baseline pass on toy models") {
  auto sc = toy::planted_scenario();
  const auto corpus = QueryCorpus::from_queries(toy::toy_queries(10, 3, 1));

  SUBCASE("empty lexicon never fires") {
    const auto before = baseline_pass(*sc.model, corpus, sc.prompt, toy_judge({}), 12);
    std::vector<QueryOutcome> o;
    for (const auto& e : before) o.push_back(outcome_of(e));
    CHECK(build_report("m", o, o).rate_before() == "0.0");
  }
  SUBCASE("planted model leaks unconditionally on 3 of 10") {
    const auto before = baseline_pass(*sc.model, corpus, sc.prompt, toy_judge(), 12);
    std::vector<QueryOutcome> o;
    int hand_count = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      o.push_back(outcome_of(before[i]));
      // Hand judgement: the completion runs the chain iff the query holds "fed".
      const bool expect = corpus.queries[i].second.find("fed") != std::string::npos;
      CHECK(o.back().leaked == expect);
      CHECK((before[i].completion.find("bag") != std::string::npos) == expect);
      hand_count += expect;
    }
    CHECK(hand_count == 3);
    CHECK(build_report("m", o, o).rate_before() == "30.0");
  }
  SUBCASE("one leaking query gives 100.0") {
    const auto one = QueryCorpus::from_queries({{7, "dab fed"}});
    const auto before = baseline_pass(*sc.model, one, sc.prompt, toy_judge(), 12);
    const std::vector<QueryOutcome> o{outcome_of(before[0])};
    CHECK(build_report("m", o, o).rate_before() == "100.0");
  }
}

TEST_CASE("probe pass raises the planted leak rate; E = 0 reproduces the baseline") {
  auto sc = toy::planted_scenario();
  const auto corpus = QueryCorpus::from_queries(toy::toy_queries(6, 2, 4));
  CampaignOptions opts;
  opts.pass.campaign_seed = 11;
  const auto full = run_campaign(*sc.model, corpus, sc.prompt, toy_config(50), toy_judge(), opts);
  CHECK(full.report.after.leaked >= full.report.before.leaked);
  CHECK(full.report.rate_after() == "100.0");

  const auto none = run_campaign(*sc.model, corpus, sc.prompt, toy_config(0), toy_judge(), opts);
  CHECK(none.report.rate_after() == none.report.rate_before());
  CHECK(none.report.after.leaked == none.report.before.leaked);
}

TEST_CASE("probe pass is deterministic across job counts") {
  auto sc = toy::planted_scenario();
  const auto corpus = QueryCorpus::from_queries(toy::toy_queries(6, 1, 9));
  CampaignOptions one;
  one.pass.campaign_seed = 5;
  CampaignOptions three = one;
  three.pass.jobs = 3;
  const auto a = run_campaign(*sc.model, corpus, sc.prompt, toy_config(20), toy_judge(), one);
  const auto b = run_campaign(*sc.model, corpus, sc.prompt, toy_config(20), toy_judge(), three);
  CHECK(format_records(a.report) == format_records(b.report));
  CHECK(format_table(a.report) == format_table(b.report));
}

TEST_CASE("resume skips queries already in the checkpoint") {
  auto sc = toy::planted_scenario();
  const auto corpus = QueryCorpus::from_queries(toy::toy_queries(6, 0, 2));
  const auto dir = std::filesystem::temp_directory_path() / "leakprobe_resume_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  // Fast-judge mock built on the lexicon so verdicts are meaningful; counts calls.
  const auto lex = CanonLexicon::from_entries({"bag"});
  auto client = std::make_shared<FunctionJudgeClient>("mock", [&](const std::string& prompt) {
    const auto at = prompt.find("model_completion = \"") + 20;
    const auto completion = prompt.substr(at, prompt.find('"', at) - at);
    return serialize_verdict(lexicon_check("q", completion, lex));
  });
  JudgeOptions jo;
  jo.fast_prompt = PromptKind::kCot;
  JudgePolicy judge(JudgePolicyKind::kFast, nullptr, client, nullptr, nullptr, jo);
  ProbeConfig cfg = toy_config(10);
  cfg.judge_policy = JudgePolicyKind::kFast;
  cfg.judge_check_interval = 5;

  CampaignOptions first;
  first.checkpoint = dir / "checkpoint.jsonl";
  std::atomic<bool> stop{false};
  first.pass.stop = &stop;
  int finished = 0;
  first.pass.on_done = [&](const ProbeEntry&) {
    if (++finished == 3) stop = true;
  };
  CHECK_THROWS_AS(run_campaign(*sc.model, corpus, sc.prompt, cfg, judge, first), Interrupted);
  const std::size_t calls_first = client->calls();

  CampaignOptions again;
  again.checkpoint = first.checkpoint;
  again.resume = true;
  const auto resumed = run_campaign(*sc.model, corpus, sc.prompt, cfg, judge, again);
  const std::size_t calls_resumed = client->calls() - calls_first;

  // A clean run of the same campaign for comparison.
  CampaignOptions clean;
  const std::size_t before_clean = client->calls();
  const auto fresh = run_campaign(*sc.model, corpus, sc.prompt, cfg, judge, clean);
  const std::size_t calls_clean = client->calls() - before_clean;

  CHECK(calls_resumed < calls_clean);
  CHECK(format_records(resumed.report) == format_records(fresh.report));
  std::filesystem::remove_all(dir);
}
