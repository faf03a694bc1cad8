#include "leakprobe/sequence.hpp"

#include <algorithm>

#include "leakprobe/errors.hpp"

namespace leakprobe {

std::vector<std::size_t> AdvSlice::positions() const {
  std::vector<std::size_t> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = begin + i;
  return out;
}

std::span<const TokenId> TokenSequence::suffix() const {
  if (adv_slice_.end() > ids_.size()) throw InvalidArgument("adv_slice exceeds prompt length");
  return std::span<const TokenId>(ids_).subspan(adv_slice_.begin, adv_slice_.length);
}

TokenSequence TokenSequence::substituted(std::size_t slot, TokenId token) const {
  if (slot >= adv_slice_.length) throw InvalidArgument("slot outside adv_slice");
  TokenSequence out = *this;
  out.ids_.at(adv_slice_.begin + slot) = token;
  return out;
}

namespace {

std::string text_before_suffix(const PromptTemplate& t) {
  return t.frame.system_prefix + t.system_text + t.frame.user_prefix + t.user_query +
         t.frame.suffix_prefix;
}

}  // namespace

TokenSequence render_prompt(const PromptTemplate& tmpl, std::span<const TokenId> suffix_ids,
                            const Tokenizer& tokenizer) {
  if (suffix_ids.size() != tmpl.suffix_placeholder_len) {
    throw InvalidArgument("suffix has " + std::to_string(suffix_ids.size()) +
                          " tokens, template declares " +
                          std::to_string(tmpl.suffix_placeholder_len));
  }
  const Vocab& vocab = tokenizer.vocab();
  for (TokenId id : suffix_ids) {
    if (!vocab.contains(id)) throw InvalidArgument("suffix token out of range: " + std::to_string(id));
  }

  const std::string before = text_before_suffix(tmpl);
  std::vector<TokenId> ids = tokenizer.encode(before);
  const AdvSlice slice{ids.size(), suffix_ids.size()};
  ids.insert(ids.end(), suffix_ids.begin(), suffix_ids.end());
  const std::vector<TokenId> after = tokenizer.encode(tmpl.frame.assistant_prefix);
  ids.insert(ids.end(), after.begin(), after.end());

  std::vector<TokenId> target = tokenizer.encode(tmpl.affirmative_text);
  if (target.empty()) throw InvalidArgument("affirmative text tokenizes to nothing");

  const std::string full = before + tokenizer.decode(suffix_ids) + tmpl.frame.assistant_prefix;
  if (tokenizer.encode(full) != ids) {
    throw TemplateIncompatible("suffix tokens merge with neighbouring text; re-tokenize and "
                               "re-derive the adversarial slice");
  }
  return TokenSequence(std::move(ids), slice, std::move(target));
}

TokenSequence render_plain(const PromptTemplate& tmpl, const Tokenizer& tokenizer) {
  std::string text = text_before_suffix(tmpl) + tmpl.frame.assistant_prefix;
  std::vector<TokenId> ids = tokenizer.encode(text);
  std::vector<TokenId> target = tokenizer.encode(tmpl.affirmative_text);
  if (target.empty()) throw InvalidArgument("affirmative text tokenizes to nothing");
  return TokenSequence(std::move(ids), AdvSlice{0, 0}, std::move(target));
}

std::vector<TokenId> initial_suffix(const Vocab& vocab, std::size_t count,
                                    const std::string& token_text) {
  auto id = vocab.find(token_text);
  if (!id) throw InvalidArgument("initial suffix token '" + token_text + "' not in vocabulary");
  if (vocab.is_special(*id)) throw InvalidArgument("initial suffix token is a special token");
  return std::vector<TokenId>(count, *id);
}

bool validate_sequence(const TokenSequence& seq, const Vocab& vocab) {
  if (seq.target_ids().empty()) return false;
  auto in_range = [&](TokenId id) { return vocab.contains(id); };
  if (!std::all_of(seq.ids().begin(), seq.ids().end(), in_range)) return false;
  if (!std::all_of(seq.target_ids().begin(), seq.target_ids().end(), in_range)) return false;
  return seq.adv_slice().end() <= seq.ids().size();
}

bool tokenization_stable(const TokenSequence& seq, const Tokenizer& tokenizer) {
  try {
    return tokenizer.encode(tokenizer.decode(seq.ids())) == seq.ids();
  } catch (const TokenizeError&) {
    return false;
  }
}

}  // namespace leakprobe
