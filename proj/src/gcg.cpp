#include "leakprobe/gcg.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

#include "leakprobe/errors.hpp"
#include "leakprobe/rng.hpp"

namespace leakprobe {

CandidateSet top_k_candidates(const GradientMatrix& grads, std::size_t k, const Vocab& vocab) {
  const auto V = static_cast<std::size_t>(grads.values.cols());
  if (V != vocab.size()) throw InvalidArgument("gradient width does not match vocabulary");
  if (k == 0 || k > vocab.substitutable_count()) {
    throw InvalidArgument("top_k must be in [1, " + std::to_string(vocab.substitutable_count()) + "]");
  }
  std::vector<TokenId> pool;
  for (std::size_t v = 0; v < V; ++v)
    if (!vocab.is_special(static_cast<TokenId>(v))) pool.push_back(static_cast<TokenId>(v));

  CandidateSet out;
  out.positions = grads.slice_index_order;
  for (Eigen::Index r = 0; r < grads.values.rows(); ++r) {
    std::vector<TokenId> ids = pool;
    const auto row = grads.values.row(r);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                      [&](TokenId a, TokenId b) {
                        if (row(a) != row(b)) return row(a) < row(b);
                        return a < b;
                      });
    ids.resize(k);
    out.per_position.push_back(std::move(ids));
  }
  return out;
}

std::vector<TokenSequence> sample_batch(const TokenSequence& seq, const CandidateSet& cands,
                                        std::size_t B, std::uint64_t rng_seed,
                                        const Tokenizer* tokenizer, std::size_t max_resample) {
  const AdvSlice& slice = seq.adv_slice();
  if (cands.per_position.size() != slice.length) {
    throw InvalidArgument("candidate set does not cover the adversarial slice");
  }
  struct Pair {
    std::size_t slot;
    TokenId token;
  };
  std::vector<Pair> pool;
  for (std::size_t s = 0; s < slice.length; ++s) {
    const TokenId current = seq.ids()[slice.begin + s];
    for (TokenId t : cands.per_position[s])
      if (t != current) pool.push_back({s, t});
  }

  Rng rng(rng_seed);
  std::vector<TokenSequence> batch;
  std::size_t rejected = 0;
  for (std::size_t drawn = 0; drawn < pool.size() && batch.size() < B; ++drawn) {
    const std::size_t j = drawn + rng.uniform_index(pool.size() - drawn);
    std::swap(pool[drawn], pool[j]);
    TokenSequence cand = seq.substituted(pool[drawn].slot, pool[drawn].token);
    if (tokenizer != nullptr && !tokenization_stable(cand, *tokenizer)) {
      if (++rejected > max_resample) {
        spdlog::warn("sample_batch: {} candidates failed the tokenizer check; batch has {} of {}",
                     rejected, batch.size(), B);
        break;
      }
      continue;
    }
    batch.push_back(std::move(cand));
  }
  return batch;
}

StepResult step(const LanguageModel& model, const TokenSequence& seq, const ProbeConfig& config,
                std::uint64_t rng_seed, std::optional<double> current_loss) {
  const double loss_now = current_loss ? *current_loss : adversarial_loss(model, seq);
  const GradientMatrix grads = token_gradients(model, seq);
  const CandidateSet cands = top_k_candidates(grads, config.top_k, model.vocab());
  std::vector<TokenSequence> batch =
      sample_batch(seq, cands, config.batch_size, rng_seed, &model.tokenizer(), config.max_resample);

  StepResult out{seq, EpochRecord{}};
  out.record.loss = loss_now;
  if (batch.empty()) return out;

  out.record.batch_losses = adversarial_losses(model, batch);
  const auto& losses = out.record.batch_losses;
  const auto best = static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
  out.record.chosen_index = static_cast<std::int64_t>(best);

  const TokenSequence& chosen = batch[best];
  const std::size_t begin = seq.adv_slice().begin;
  for (std::size_t s = 0; s < seq.adv_slice().length; ++s) {
    if (chosen.ids()[begin + s] != seq.ids()[begin + s]) {
      out.record.chosen_position = static_cast<std::int64_t>(begin + s);
      out.record.chosen_token = chosen.ids()[begin + s];
    }
  }
  if (config.unconditional_adoption || losses[best] <= loss_now) {
    out.record.accepted = true;
    out.record.loss = losses[best];
    out.seq = std::move(batch[best]);
  }
  return out;
}

ProbeResult probe(const LanguageModel& model, const PromptTemplate& tmpl, const ProbeConfig& config,
                  const JudgePolicy& judge, const ProbeHooks& hooks) {
  config.validate(model.vocab());
  PromptTemplate t = tmpl;
  t.suffix_placeholder_len = config.suffix_len;
  const auto suffix = initial_suffix(model.vocab(), config.suffix_len, config.init_token);

  ProbeResult result;
  TokenSequence seq = render_prompt(t, suffix, model.tokenizer());
  double loss = adversarial_loss(model, seq);
  double best = loss;
  result.initial_loss = loss;

  Rng rng(config.seed);
  const std::size_t interval = config.check_interval();
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    if (hooks.stop != nullptr && hooks.stop->load()) break;
    StepResult s = step(model, seq, config, rng.next_u64(), loss);
    s.record.epoch = e;
    seq = std::move(s.seq);
    loss = s.record.loss;
    best = std::min(best, loss);
    result.best_loss_trace.push_back(best);

    if (e % interval == 0 || e == config.epochs) {
      s.record.judge_invoked = true;
      std::string completion = generate(model, seq, config.max_new_tokens);
      JudgeVerdict v = judge.judge(t.user_query, completion);
      const bool hit = v.leaked();
      result.completions.emplace_back(e, std::move(completion));
      result.verdicts.emplace_back(e, std::move(v));
      if (hit) {
        result.leaked = true;
        result.stop_epoch = e;
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(s.record);
    result.epochs.push_back(std::move(s.record));
    if (result.leaked) break;
  }

  result.final_loss = loss;
  result.suffix_text = model.tokenizer().decode(seq.suffix());
  result.final_ids = std::move(seq);
  return result;
}

}  // namespace leakprobe
