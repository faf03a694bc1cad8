#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "leakprobe/sequence.hpp"
#include "leakprobe/vocab.hpp"

namespace leakprobe {

/// Gradient of the adversarial loss with respect to the one-hot token
/// indicators of the adversarial slice. Row r belongs to prompt position
/// slice_index_order[r]; column v is token v.
struct GradientMatrix {
  Eigen::MatrixXd values;
  std::vector<std::size_t> slice_index_order;
};

/// An autoregressive language model F. Implementations see raw id vectors;
/// the free functions below own precondition checks.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::size_t max_context() const = 0;
  virtual std::string descriptor() const = 0;

  /// True when const calls may run concurrently from several threads.
  virtual bool concurrent_safe() const { return false; }

  /// log P(target[t] | prompt, target[0..t)) for every t.
  virtual std::vector<double> target_logprobs(const std::vector<TokenId>& prompt,
                                              const std::vector<TokenId>& target) const = 0;

  /// d(-sum log P(target)) / d(one-hot indicator) for prompt positions
  /// [slice_begin, slice_begin + slice_len). Shape slice_len x V.
  virtual Eigen::MatrixXd one_hot_gradient(const std::vector<TokenId>& prompt,
                                           const std::vector<TokenId>& target,
                                           std::size_t slice_begin,
                                           std::size_t slice_len) const = 0;

  /// Greedy continuation of `prompt`, at most max_new_tokens ids.
  virtual std::vector<TokenId> greedy_decode(const std::vector<TokenId>& prompt,
                                             std::size_t max_new_tokens) const = 0;

  /// Losses of several prompts sharing one target. Backends with real
  /// batching override this.
  virtual std::vector<double> batch_losses(const std::vector<std::vector<TokenId>>& prompts,
                                           const std::vector<TokenId>& target) const;

  const Vocab& vocab() const { return tokenizer().vocab(); }
};

std::vector<double> sequence_logprobs(const LanguageModel& model, const TokenSequence& seq);

/// -log P(target | prompt), clamped at zero.
double adversarial_loss(const LanguageModel& model, const TokenSequence& seq);

/// Losses for a batch of sequences that share their target.
std::vector<double> adversarial_losses(const LanguageModel& model,
                                       const std::vector<TokenSequence>& batch);

GradientMatrix token_gradients(const LanguageModel& model, const TokenSequence& seq);

/// Greedy completion of the prompt (target excluded), decoded to text.
std::string generate(const LanguageModel& model, const TokenSequence& seq,
                     std::size_t max_new_tokens);

/// Wraps a model that is not concurrent_safe() so calls are serialized.
class SerializedModel final : public LanguageModel {
 public:
  explicit SerializedModel(std::shared_ptr<const LanguageModel> inner) : inner_(std::move(inner)) {}

  const Tokenizer& tokenizer() const override { return inner_->tokenizer(); }
  std::size_t max_context() const override { return inner_->max_context(); }
  std::string descriptor() const override { return inner_->descriptor(); }
  bool concurrent_safe() const override { return true; }

  std::vector<double> target_logprobs(const std::vector<TokenId>& prompt,
                                      const std::vector<TokenId>& target) const override;
  Eigen::MatrixXd one_hot_gradient(const std::vector<TokenId>& prompt,
                                   const std::vector<TokenId>& target, std::size_t slice_begin,
                                   std::size_t slice_len) const override;
  std::vector<TokenId> greedy_decode(const std::vector<TokenId>& prompt,
                                     std::size_t max_new_tokens) const override;
  std::vector<double> batch_losses(const std::vector<std::vector<TokenId>>& prompts,
                                   const std::vector<TokenId>& target) const override;

 private:
  std::shared_ptr<const LanguageModel> inner_;
  mutable std::mutex mu_;
};

/// Backend factories keyed by descriptor. Options come from the run config.
class BackendRegistry {
 public:
  using Factory = std::function<std::shared_ptr<LanguageModel>(const nlohmann::json& options)>;

  static BackendRegistry& instance();

  void add(const std::string& descriptor, std::string summary, Factory factory);
  std::shared_ptr<LanguageModel> create(const std::string& descriptor,
                                        const nlohmann::json& options) const;
  /// (descriptor, summary) pairs in descriptor order.
  std::vector<std::pair<std::string, std::string>> list() const;

 private:
  BackendRegistry();
  struct Entry {
    std::string summary;
    Factory factory;
  };
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

}  // namespace leakprobe
