#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "leakprobe/model.hpp"
#include "leakprobe/sequence.hpp"

namespace leakprobe::toy {

/// Parameters of the single-layer model
///   H0 = onehot(x) E + P
///   H1 = H0 + softmax_causal((H0 Wq)(H0 Wk)^T / sqrt(d)) (H0 Wv) Wo
///   H2 = H1 + tanh(H1 W1 + b1) W2 + b2
///   logits = H2 U + c
struct Weights {
  Eigen::MatrixXd E;   // V x d
  Eigen::MatrixXd P;   // context x d
  Eigen::MatrixXd Wq, Wk, Wv, Wo;  // d x d
  Eigen::MatrixXd W1;  // d x f
  Eigen::VectorXd b1;  // f
  Eigen::MatrixXd W2;  // f x d
  Eigen::VectorXd b2;  // d
  Eigen::MatrixXd U;   // d x V
  Eigen::VectorXd c;   // V

  std::size_t vocab_size() const { return static_cast<std::size_t>(E.rows()); }
  std::size_t d_model() const { return static_cast<std::size_t>(E.cols()); }
  std::size_t ffn_width() const { return static_cast<std::size_t>(W1.cols()); }
  std::size_t context() const { return static_cast<std::size_t>(P.rows()); }
};

/// A hidden trigger: while every trigger token appears somewhere earlier in
/// the sequence, the model walks `chain` (state chain[i] predicts chain[i+1]).
/// Each trigger contributes chain_logit / triggers.size() to the chain
/// token's logit; with no trigger the default token wins with default_logit.
struct PlantedSpec {
  std::vector<TokenId> triggers;
  std::vector<TokenId> chain;
  TokenId default_token = 0;
  double default_logit = 45.0;
  double chain_logit = 80.0;
};

/// "!", " ", ":", then a-z, A-Z, 0-9 as needed. Single characters, so every
/// id sequence is its own canonical tokenization.
Vocab make_vocab(std::size_t size);

class ToyTransformer final : public LanguageModel {
 public:
  ToyTransformer(Vocab vocab, Weights weights, std::string descriptor);

  /// Seeded N(0, scale^2 / fan_in) weights.
  static std::shared_ptr<ToyTransformer> random(std::size_t vocab_size, std::size_t context,
                                                std::size_t d_model, std::size_t ffn_width,
                                                std::uint64_t seed, double scale = 1.0);
  /// All-zero weights: every next-token distribution is uniform.
  static std::shared_ptr<ToyTransformer> uniform(std::size_t vocab_size, std::size_t context);
  static std::shared_ptr<ToyTransformer> planted(std::size_t vocab_size, std::size_t context,
                                                 const PlantedSpec& spec);

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t max_context() const override { return weights_.context(); }
  std::string descriptor() const override { return descriptor_; }
  bool concurrent_safe() const override { return true; }

  std::vector<double> target_logprobs(const std::vector<TokenId>& prompt,
                                      const std::vector<TokenId>& target) const override;
  Eigen::MatrixXd one_hot_gradient(const std::vector<TokenId>& prompt,
                                   const std::vector<TokenId>& target, std::size_t slice_begin,
                                   std::size_t slice_len) const override;
  std::vector<TokenId> greedy_decode(const std::vector<TokenId>& prompt,
                                     std::size_t max_new_tokens) const override;

  const Weights& weights() const noexcept { return weights_; }

  /// Log-softmax rows for every position of `ids`.
  Eigen::MatrixXd log_probs(const std::vector<TokenId>& ids) const;

 private:
  struct Activations {
    Eigen::MatrixXd H0, Q, K, Vv, A, C, H1, F, H2, logits;
  };
  Activations forward(const std::vector<TokenId>& ids) const;

  PieceTokenizer tokenizer_;
  Weights weights_;
  std::string descriptor_;
};

/// The planted model plus matching prompt template and lexicon marker used
/// throughout the toy tests, examples and the shipped toy configs.
struct Scenario {
  std::shared_ptr<ToyTransformer> model;
  PlantedSpec spec;
  PromptTemplate prompt;
  std::string marker;  // lexicon entry emitted once the chain runs
};

/// Frame with no system text: "<query> <suffix>:" and target "hi".
PromptTemplate toy_template(std::string query = "cab dab", std::size_t suffix_len = 2);

/// Triggers 'e' and 'f', chain ":hi bag " (cycling " bag"), default 'c'.
/// Requires vocab_size >= 12.
Scenario planted_scenario(std::size_t vocab_size = 12, std::size_t context = 64);

/// Queries over the letters the planted chain never conditions on. The
/// `leaky` ones contain the word "fed", which holds both triggers, so the
/// planted model leaks on them with no suffix at all.
std::vector<std::pair<std::int64_t, std::string>> toy_queries(std::size_t count, std::size_t leaky,
                                                              std::uint64_t seed);

}  // namespace leakprobe::toy
