#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leakprobe/judge.hpp"
#include "leakprobe/model.hpp"
#include "leakprobe/probe_config.hpp"
#include "leakprobe/sequence.hpp"

namespace leakprobe {

/// X_i for every adversarial position, in slice order.
struct CandidateSet {
  std::vector<std::size_t> positions;           // prompt positions, slice order
  std::vector<std::vector<TokenId>> per_position;  // exactly k ids each
};

/// Per row, the k non-special tokens with the most negative gradient; ties go
/// to the smaller token id.
CandidateSet top_k_candidates(const GradientMatrix& grads, std::size_t k, const Vocab& vocab);

/// Draws up to B single-token substitutions of `seq`.
///
/// The pool is every (position, candidate) pair whose candidate differs from
/// the token already there. Pairs are drawn without replacement by a partial
/// Fisher-Yates shuffle driven by Rng(rng_seed), one uniform_index draw per
/// accepted or rejected pair. When B covers the pool the batch is the whole
/// pool. With a tokenizer, candidates whose prompt does not survive
/// encode(decode(.)) are dropped; after max_resample such drops sampling stops
/// with a warning and the batch may be short.
std::vector<TokenSequence> sample_batch(const TokenSequence& seq, const CandidateSet& cands,
                                        std::size_t B, std::uint64_t rng_seed,
                                        const Tokenizer* tokenizer = nullptr,
                                        std::size_t max_resample = 64);

struct EpochRecord {
  std::size_t epoch = 0;
  std::vector<double> batch_losses;
  std::int64_t chosen_index = -1;     // b*, -1 for an empty batch
  std::int64_t chosen_position = -1;  // prompt position of the substitution
  TokenId chosen_token = -1;
  bool accepted = false;
  bool judge_invoked = false;
  double loss = 0.0;  // loss of the sequence carried into the next epoch

  bool operator==(const EpochRecord&) const = default;
};

struct StepResult {
  TokenSequence seq;
  EpochRecord record;
};

/// One loop body: gradient, top-k, batch sampling, batched loss and greedy
/// adoption of b*. b* replaces seq only if its loss does not exceed
/// `current_loss` unless config.unconditional_adoption is set.
StepResult step(const LanguageModel& model, const TokenSequence& seq, const ProbeConfig& config,
                std::uint64_t rng_seed, std::optional<double> current_loss = std::nullopt);

struct ProbeResult {
  TokenSequence final_ids;
  std::vector<double> best_loss_trace;
  std::vector<std::pair<std::size_t, std::string>> completions;
  std::vector<std::pair<std::size_t, JudgeVerdict>> verdicts;
  bool leaked = false;
  std::optional<std::size_t> stop_epoch;

  std::vector<EpochRecord> epochs;
  std::string suffix_text;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct ProbeHooks {
  /// Polled once per epoch; when set the probe ends early without a leak.
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs at most config.epochs steps on template.with suffix_len =
/// config.suffix_len. After epochs e with e % check_interval == 0 (and after
/// the last epoch) a greedy completion of the prompt is judged against the
/// user query; the first leaked verdict stops the run. Epoch seeds come from
/// one Rng(config.seed), one draw per epoch.
ProbeResult probe(const LanguageModel& model, const PromptTemplate& tmpl, const ProbeConfig& config,
                  const JudgePolicy& judge, const ProbeHooks& hooks = {});

}  // namespace leakprobe
