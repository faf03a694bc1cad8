#include "leakprobe/vocab.hpp"

#include <algorithm>

#include "leakprobe/errors.hpp"

namespace leakprobe {

Vocab::Vocab(std::vector<std::string> token_text, const std::set<TokenId>& control_ids)
    : token_text_(std::move(token_text)) {
  if (token_text_.empty()) throw InvalidArgument("vocabulary must not be empty");
  for (TokenId id : control_ids) {
    if (!contains(id)) throw InvalidArgument("control id out of range: " + std::to_string(id));
    control_ids_.insert(id);
    special_ids_.insert(id);
  }
  for (std::size_t i = 0; i < token_text_.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (token_text_[i].empty()) special_ids_.insert(id);
    if (control_ids_.count(id) == 0) by_text_.try_emplace(token_text_[i], id);
  }
}

std::optional<TokenId> Vocab::find(std::string_view text) const {
  auto it = by_text_.find(std::string(text));
  if (it == by_text_.end()) return std::nullopt;
  return it->second;
}

PieceTokenizer::PieceTokenizer(Vocab vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!vocab_.is_control(static_cast<TokenId>(i)))
      max_piece_len_ = std::max(max_piece_len_, vocab_.token_text()[i].size());
  }
}

std::vector<TokenId> PieceTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(max_piece_len_, text.size() - pos);
    std::optional<TokenId> hit;
    for (; len > 0; --len) {
      hit = vocab_.find(text.substr(pos, len));
      if (hit) break;
    }
    if (!hit) {
      throw TokenizeError("no token covers byte " + std::to_string(pos) + " ('" +
                          std::string(text.substr(pos, 1)) + "')");
    }
    out.push_back(*hit);
    pos += len;
  }
  return out;
}

std::string PieceTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!vocab_.contains(id)) throw InvalidArgument("token id out of range: " + std::to_string(id));
    if (vocab_.is_control(id)) continue;
    out += vocab_.text(id);
  }
  return out;
}

}  // namespace leakprobe
