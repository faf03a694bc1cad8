#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/verdict.hpp"

namespace leakprobe {

/// Canonical references with alias groups. Each entry is an entity; alias
/// strings (titled, possessive-free variants, plurals) map to the entity of
/// the entry they are grouped with.
///
/// File format: one reference per line; a line with tab-separated strings is
/// an alias group. Blank lines and lines starting with '#' are ignored.
class CanonLexicon {
 public:
  CanonLexicon() = default;

  static CanonLexicon load(const std::filesystem::path& path);
  static CanonLexicon parse(std::string_view text);
  static CanonLexicon from_entries(const std::vector<std::string>& entries,
                                   const std::vector<std::vector<std::string>>& alias_groups = {});

  const std::vector<std::string>& entries() const noexcept { return entries_; }
  std::size_t entity_count() const noexcept { return entity_names_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Occurrence of a surface form in some text.
  struct Match {
    std::size_t begin;
    std::size_t end;
    std::size_t entity;
    std::string text;  // as written in the scanned text
  };

  /// Whole-phrase, case-insensitive matches. When matches overlap the longest
  /// wins, so "Hogwarts Express" does not also produce "Hogwarts". Sorted by
  /// position.
  std::vector<Match> scan(std::string_view text) const;

  const std::string& entity_name(std::size_t entity) const { return entity_names_.at(entity); }

  /// Stable digest of the lexicon contents, used in cache keys.
  std::string fingerprint() const;

 private:
  void build(const std::vector<std::string>& entries,
             const std::vector<std::vector<std::string>>& groups);

  std::vector<std::string> entries_;
  std::vector<std::string> entity_names_;
  struct Form {
    std::string lowered;
    std::size_t entity;
  };
  std::vector<Form> forms_;  // longest first
};

/// Deterministic G: counts entities of the lexicon that occur in the
/// completion but have no surface form in the query. Each counted entity gets
/// one YES; further variants of an already-counted entity are listed as NO.
JudgeVerdict lexicon_check(std::string_view query, std::string_view completion,
                           const CanonLexicon& lexicon);

}  // namespace leakprobe
