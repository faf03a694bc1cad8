#include <doctest.h>

#include <set>

#include "../support/oracle.hpp"
#include "leakprobe/errors.hpp"
#include "leakprobe/gcg.hpp"
#include "leakprobe/records.hpp"
#include "leakprobe/rng.hpp"
#include "leakprobe/toy_model.hpp"

using namespace leakprobe;

namespace {

GradientMatrix grads_from(std::initializer_list<std::initializer_list<double>> rows) {
  GradientMatrix g;
  g.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double x : row) g.values(r, c++) = x;
    g.slice_index_order.push_back(static_cast<std::size_t>(r));
    ++r;
  }
  return g;
}

Vocab plain_vocab(std::size_t V, std::set<TokenId> control = {}) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < V; ++i) t.push_back("t" + std::to_string(i));
  return Vocab(t, control);
}

std::shared_ptr<const CanonLexicon> lexicon_of(std::vector<std::string> entries) {
  return std::make_shared<CanonLexicon>(CanonLexicon::from_entries(entries));
}

}  // namespace

TEST_CASE("top_k picks the most negative gradients") {
  const auto c = top_k_candidates(grads_from({{3, -1, -5, 0}}), 2, plain_vocab(4));
  CHECK(c.per_position.at(0) == std::vector<TokenId>{2, 1});
}

TEST_CASE("top_k ties go to the smallest id and skip special tokens") {
  const auto c = top_k_candidates(grads_from({{0, 0, 0, 0, 0}}), 3, plain_vocab(5));
  CHECK(c.per_position.at(0) == std::vector<TokenId>{0, 1, 2});
  const auto s = top_k_candidates(grads_from({{-9, 0, 0, -1, 0}}), 3, plain_vocab(5, {0, 2}));
  CHECK(s.per_position.at(0) == std::vector<TokenId>{3, 1, 4});
  CHECK_THROWS_AS(top_k_candidates(grads_from({{0, 0, 0}}), 2, plain_vocab(3, {0, 1})), InvalidArgument);
}

TEST_CASE("top_k on random 4 x 16 matrices matches a full sort") {
  Rng rng(5);
  const Vocab v = plain_vocab(16, {3, 7});
  for (int trial = 0; trial < 20; ++trial) {
    GradientMatrix g;
    g.values.resize(4, 16);
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index c = 0; c < 16; ++c) g.values(r, c) = std::round(rng.normal() * 4.0) / 4.0;  // some ties
    g.slice_index_order = {0, 1, 2, 3};
    const auto c = top_k_candidates(g, 5, v);
    for (Eigen::Index r = 0; r < 4; ++r) {
      CHECK(c.per_position[static_cast<std::size_t>(r)] == oracle::sorted_candidates(g.values.row(r), 5, v));
      std::set<TokenId> uniq(c.per_position[static_cast<std::size_t>(r)].begin(), c.per_position[static_cast<std::size_t>(r)].end());
      CHECK(uniq.size() == 5);
    }
  }
}

TEST_CASE("sample_batch: single possible substitution") {
  const TokenSequence seq({1, 2, 3}, AdvSlice{1, 1}, {4});
  CandidateSet c{{1}, {{5}}};
  const auto b = sample_batch(seq, c, 1, 42);
  REQUIRE(b.size() == 1);
  CHECK(b[0].ids() == std::vector<TokenId>{1, 5, 3});
}

TEST_CASE("sample_batch: each member differs in exactly one slice position, deterministically") {
  const TokenSequence seq({0, 1, 2, 3, 4, 5}, AdvSlice{1, 4}, {6});
  CandidateSet c{{1, 2, 3, 4}, {{7, 8, 1}, {9, 2, 10}, {3, 11, 12}, {13, 14, 15}}};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto b = sample_batch(seq, c, 6, seed);
    CHECK(b.size() == 6);
    for (const auto& s : b) {
      int diff = 0;
      for (std::size_t i = 0; i < seq.ids().size(); ++i) {
        if (s.ids()[i] == seq.ids()[i]) continue;
        ++diff;
        CHECK(i >= 1);
        CHECK(i < 5);
        const auto& allowed = c.per_position[i - 1];
        CHECK(std::find(allowed.begin(), allowed.end(), s.ids()[i]) != allowed.end());
      }
      CHECK(diff == 1);
    }
    CHECK(sample_batch(seq, c, 6, seed) == b);
  }
  // B beyond the pool gives the whole pool (4 positions x 3 candidates, 3 no-ops).
  CHECK(sample_batch(seq, c, 100, 1).size() == 9);
}

TEST_CASE("sample_batch drops candidates that fail the tokenizer check") {
  PieceTokenizer tok(Vocab({"a", "b", "ab", ":"}));
  const TokenSequence seq({0, 3, 3}, AdvSlice{1, 1}, {0});  // "a::"
  CandidateSet c{{1}, {{1, 2}}};  // "b" would merge into "ab"; "ab" itself re-tokenizes cleanly
  const auto b = sample_batch(seq, c, 2, 3, &tok, 4);
  REQUIRE(b.size() == 1);
  CHECK(b[0].ids() == std::vector<TokenId>{0, 2, 3});
}

TEST_CASE("step with an exhaustive batch equals the brute-force best substitution") {
  auto m = toy::ToyTransformer::random(12, 32, 8, 16, 21);
  const auto& tok = m->tokenizer();
  const TokenSequence seq(tok.encode("ab cd!!:"), AdvSlice{5, 2}, tok.encode("hi"));
  ProbeConfig cfg;
  cfg.top_k = 12;
  cfg.batch_size = 24;
  const auto r = step(*m, seq, cfg, 99);
  const auto best = oracle::best_single_substitution(seq, 12, [&](const TokenSequence& s) {
    return oracle::loss(m->weights(), s.ids(), s.target_ids());
  });
  REQUIRE(r.record.batch_losses.size() == 22);
  CHECK(r.record.chosen_position == static_cast<std::int64_t>(5 + best.slot));
  CHECK(r.record.chosen_token == best.token);
  const double mn = *std::min_element(r.record.batch_losses.begin(), r.record.batch_losses.end());
  CHECK(r.record.batch_losses[static_cast<std::size_t>(r.record.chosen_index)] == mn);
  CHECK(step(*m, seq, cfg, 99).record == r.record);
}

TEST_CASE("step keeps the sequence when nothing improves") {
  // A planted prompt already at loss ~0: no single substitution can do better.
  auto sc = toy::planted_scenario();
  const auto& tok = sc.model->tokenizer();
  const auto seq = render_prompt(sc.prompt, tok.encode("ef"), tok);
  ProbeConfig cfg;
  cfg.top_k = 3;
  cfg.batch_size = 4;
  const double before = adversarial_loss(*sc.model, seq);
  // Replacing either trigger loses the chain, so every candidate is worse.
  const auto r = step(*sc.model, seq, cfg, 5, before);
  CHECK_FALSE(r.record.accepted);
  CHECK(r.seq == seq);
  CHECK(r.record.loss == before);
}

TEST_CASE("probe finds the planted trigger with the lexicon judge") {
  auto sc = toy::planted_scenario();
  ProbeConfig cfg;
  cfg.epochs = 50;
  cfg.suffix_len = 2;
  cfg.max_new_tokens = 16;
  cfg.seed = 3;
  const auto judge = JudgePolicy::lexicon(lexicon_of({sc.marker}));
  const auto r = probe(*sc.model, sc.prompt, cfg, judge);
  CHECK(r.leaked);
  REQUIRE(r.stop_epoch.has_value());
  CHECK(*r.stop_epoch <= 50);
  CHECK(r.verdicts.back().second.score >= 1);
  for (std::size_t i = 1; i < r.best_loss_trace.size(); ++i) CHECK(r.best_loss_trace[i] <= r.best_loss_trace[i - 1]);
  // The judged text is a free-running completion, never the target itself.
  CHECK(r.completions.back().second != sc.prompt.affirmative_text);
}

TEST_CASE("probe without a planted trigger and an empty lexicon runs every epoch") {
  auto m = toy::ToyTransformer::random(12, 64, 8, 16, 4);
  ProbeConfig cfg;
  cfg.epochs = 12;
  cfg.suffix_len = 2;
  cfg.max_new_tokens = 8;
  const auto judge = JudgePolicy::lexicon(lexicon_of({}));
  const auto r = probe(*m, toy::toy_template(), cfg, judge);
  CHECK_FALSE(r.leaked);
  CHECK_FALSE(r.stop_epoch.has_value());
  CHECK(r.best_loss_trace.size() == 12);
  CHECK(r.verdicts.size() == 12);
}

TEST_CASE("probe with E = 0 returns the initial suffix") {
  auto sc = toy::planted_scenario();
  ProbeConfig cfg;
  cfg.epochs = 0;
  cfg.suffix_len = 2;
  cfg.max_new_tokens = 8;
  const auto r = probe(*sc.model, sc.prompt, cfg, JudgePolicy::lexicon(lexicon_of({"bag"})));
  CHECK_FALSE(r.leaked);
  CHECK(r.best_loss_trace.empty());
  CHECK(r.suffix_text == "!!");
}

TEST_CASE("unknown verdicts never set leaked") {
  auto sc = toy::planted_scenario();
  auto down = std::make_shared<FunctionJudgeClient>("down", [](const std::string&) -> std::string {
    throw JudgeTransportError("connection refused");
  });
  JudgeOptions opts;
  opts.retry.attempts = 1;
  opts.retry.initial_backoff = std::chrono::milliseconds(0);
  JudgePolicy judge(JudgePolicyKind::kFast, nullptr, down, nullptr, nullptr, opts);
  ProbeConfig cfg;
  cfg.epochs = 6;
  cfg.suffix_len = 2;
  cfg.max_new_tokens = 8;
  cfg.judge_check_interval = 2;
  const auto r = probe(*sc.model, sc.prompt, cfg, judge);
  CHECK_FALSE(r.leaked);
  CHECK(r.verdicts.size() == 3);
  for (const auto& [e, v] : r.verdicts) CHECK(v.unknown());
  CHECK(r.final_loss < 1e-10);  // optimization continued regardless
}

TEST_CASE("probe result record round trip") {
  auto sc = toy::planted_scenario();
  ProbeConfig cfg;
  cfg.epochs = 5;
  cfg.suffix_len = 2;
  cfg.max_new_tokens = 8;
  const auto r = probe(*sc.model, sc.prompt, cfg, JudgePolicy::lexicon(lexicon_of({"bag"})));
  const auto back = probe_result_from_json(ojson::parse(to_json(r, true).dump()));
  CHECK(back.final_ids == r.final_ids);
  CHECK(back.best_loss_trace == r.best_loss_trace);
  CHECK(back.leaked == r.leaked);
  CHECK(back.stop_epoch == r.stop_epoch);
  CHECK(back.epochs == r.epochs);
  CHECK(to_json(back, true).dump() == to_json(r, true).dump());
}
