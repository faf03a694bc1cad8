#include "leakprobe/model.hpp"

#include <algorithm>
#include <cmath>

#include "leakprobe/errors.hpp"

namespace leakprobe {

std::vector<double> LanguageModel::batch_losses(const std::vector<std::vector<TokenId>>& prompts,
                                                const std::vector<TokenId>& target) const {
  std::vector<double> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    double loss = 0.0;
    for (double lp : target_logprobs(p, target)) loss -= lp;
    out.push_back(std::max(0.0, loss));
  }
  return out;
}

namespace {

void check_context(const LanguageModel& model, std::size_t needed, const char* what) {
  if (needed > model.max_context()) {
    throw ContextOverflow(std::string(what) + " needs " + std::to_string(needed) +
                          " positions, backend context is " + std::to_string(model.max_context()));
  }
}

void check_ids(const LanguageModel& model, const TokenSequence& seq) {
  if (!validate_sequence(seq, model.vocab())) throw InvalidArgument("invalid token sequence");
}

}  // namespace

std::vector<double> sequence_logprobs(const LanguageModel& model, const TokenSequence& seq) {
  check_ids(model, seq);
  check_context(model, seq.ids().size() + seq.target_ids().size(), "target scoring");
  auto lps = model.target_logprobs(seq.ids(), seq.target_ids());
  if (lps.size() != seq.target_ids().size()) throw NumericError("backend returned wrong logprob count");
  for (double& lp : lps) {
    if (!std::isfinite(lp)) throw NumericError("non-finite log-probability");
    lp = std::min(lp, 0.0);
  }
  return lps;
}

double adversarial_loss(const LanguageModel& model, const TokenSequence& seq) {
  double loss = 0.0;
  for (double lp : sequence_logprobs(model, seq)) loss -= lp;
  return std::max(0.0, loss);
}

std::vector<double> adversarial_losses(const LanguageModel& model,
                                       const std::vector<TokenSequence>& batch) {
  if (batch.empty()) return {};
  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(batch.size());
  const auto& target = batch.front().target_ids();
  for (const auto& seq : batch) {
    check_ids(model, seq);
    if (seq.target_ids() != target) throw InvalidArgument("batch members must share a target");
    check_context(model, seq.ids().size() + target.size(), "target scoring");
    prompts.push_back(seq.ids());
  }
  auto losses = model.batch_losses(prompts, target);
  if (losses.size() != batch.size()) throw NumericError("backend returned wrong batch size");
  for (double& l : losses) {
    if (!std::isfinite(l)) throw NumericError("non-finite loss");
    l = std::max(0.0, l);
  }
  return losses;
}

GradientMatrix token_gradients(const LanguageModel& model, const TokenSequence& seq) {
  check_ids(model, seq);
  check_context(model, seq.ids().size() + seq.target_ids().size(), "gradient");
  const auto& slice = seq.adv_slice();
  GradientMatrix g;
  g.values = model.one_hot_gradient(seq.ids(), seq.target_ids(), slice.begin, slice.length);
  g.slice_index_order = slice.positions();
  if (static_cast<std::size_t>(g.values.rows()) != slice.length ||
      static_cast<std::size_t>(g.values.cols()) != model.vocab().size()) {
    throw NumericError("gradient matrix has the wrong shape");
  }
  if (!g.values.allFinite()) throw NumericError("non-finite gradient entries");
  return g;
}

std::string generate(const LanguageModel& model, const TokenSequence& seq,
                     std::size_t max_new_tokens) {
  check_ids(model, seq);
  if (max_new_tokens == 0) return {};
  check_context(model, seq.ids().size() + max_new_tokens, "generation");
  const auto out = model.greedy_decode(seq.ids(), max_new_tokens);
  return model.tokenizer().decode(out);
}

std::vector<double> SerializedModel::target_logprobs(const std::vector<TokenId>& prompt,
                                                     const std::vector<TokenId>& target) const {
  std::lock_guard lock(mu_);
  return inner_->target_logprobs(prompt, target);
}

Eigen::MatrixXd SerializedModel::one_hot_gradient(const std::vector<TokenId>& prompt,
                                                  const std::vector<TokenId>& target,
                                                  std::size_t slice_begin,
                                                  std::size_t slice_len) const {
  std::lock_guard lock(mu_);
  return inner_->one_hot_gradient(prompt, target, slice_begin, slice_len);
}

std::vector<TokenId> SerializedModel::greedy_decode(const std::vector<TokenId>& prompt,
                                                    std::size_t max_new_tokens) const {
  std::lock_guard lock(mu_);
  return inner_->greedy_decode(prompt, max_new_tokens);
}

std::vector<double> SerializedModel::batch_losses(const std::vector<std::vector<TokenId>>& prompts,
                                                  const std::vector<TokenId>& target) const {
  std::lock_guard lock(mu_);
  return inner_->batch_losses(prompts, target);
}

void BackendRegistry::add(const std::string& descriptor, std::string summary, Factory factory) {
  std::lock_guard lock(mu_);
  entries_[descriptor] = Entry{std::move(summary), std::move(factory)};
}

std::shared_ptr<LanguageModel> BackendRegistry::create(const std::string& descriptor,
                                                       const nlohmann::json& options) const {
  Factory factory;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(descriptor);
    if (it == entries_.end()) throw ConfigError("unknown backend descriptor '" + descriptor + "'");
    factory = it->second.factory;
  }
  return factory(options);
}

std::vector<std::pair<std::string, std::string>> BackendRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, e] : entries_) out.emplace_back(name, e.summary);
  return out;
}

}  // namespace leakprobe
