#pragma once

#include <memory>
#include <string>
#include <vector>

#include "leakprobe/vocab.hpp"

namespace fixtures {

/// Control token 0 ("<s>"), an empty-text token, printable ASCII plus
/// newline, then any extra multi-character pieces.
inline leakprobe::Vocab char_vocab(const std::vector<std::string>& extra = {}) {
  std::vector<std::string> text{"<s>", ""};
  text.emplace_back("\n");
  for (char c = 32; c < 127; ++c) text.emplace_back(1, c);
  for (const auto& e : extra) text.push_back(e);
  return leakprobe::Vocab(std::move(text), {0});
}

inline std::shared_ptr<leakprobe::PieceTokenizer> char_tokenizer(const std::vector<std::string>& extra = {}) {
  return std::make_shared<leakprobe::PieceTokenizer>(char_vocab(extra));
}

}  // namespace fixtures
