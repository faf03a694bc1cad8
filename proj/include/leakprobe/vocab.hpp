#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace leakprobe {

using TokenId = std::int32_t;

/// Finite vocabulary. Token ids are dense in [0, size()).
///
/// special_ids holds tokens that are never offered as substitution
/// candidates: explicitly flagged control tokens plus every token whose text
/// is empty.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> token_text,
                 const std::set<TokenId>& control_ids = {});

  std::size_t size() const noexcept { return token_text_.size(); }
  const std::string& text(TokenId id) const { return token_text_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& token_text() const noexcept { return token_text_; }
  const std::set<TokenId>& special_ids() const noexcept { return special_ids_; }

  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < token_text_.size();
  }
  bool is_special(TokenId id) const { return special_ids_.count(id) > 0; }
  bool is_control(TokenId id) const { return control_ids_.count(id) > 0; }

  /// Id of the first non-control token with exactly this text.
  std::optional<TokenId> find(std::string_view text) const;

  /// Number of tokens eligible for substitution.
  std::size_t substitutable_count() const noexcept { return size() - special_ids_.size(); }

 private:
  std::vector<std::string> token_text_;
  std::set<TokenId> control_ids_;
  std::set<TokenId> special_ids_;
  std::unordered_map<std::string, TokenId> by_text_;
};

/// Text <-> token-id conversion owned by a backend.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual const Vocab& vocab() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
};

/// Greedy longest-match tokenizer over the vocabulary's token texts.
/// Control tokens are never produced by encode(); decode() concatenates
/// texts, so encode(decode(ids)) == ids exactly when the ids are the
/// canonical segmentation of their text.
class PieceTokenizer final : public Tokenizer {
 public:
  explicit PieceTokenizer(Vocab vocab);

  const Vocab& vocab() const override { return vocab_; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

 private:
  Vocab vocab_;
  std::size_t max_piece_len_ = 0;
};

}  // namespace leakprobe
