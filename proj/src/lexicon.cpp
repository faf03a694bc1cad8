#include "leakprobe/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "leakprobe/errors.hpp"
#include "leakprobe/hash.hpp"

namespace leakprobe {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

struct DisjointSets {
  std::vector<std::size_t> parent;
  std::size_t add() {
    parent.push_back(parent.size());
    return parent.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

CanonLexicon CanonLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

CanonLexicon CanonLexicon::parse(std::string_view text) {
  std::vector<std::string> entries;
  std::vector<std::vector<std::string>> groups;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (line.find('\t') == std::string::npos) {
      entries.push_back(t);
      continue;
    }
    std::vector<std::string> group;
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, '\t')) {
      f = trim(f);
      if (!f.empty()) group.push_back(f);
    }
    groups.push_back(std::move(group));
  }
  return from_entries(entries, groups);
}

CanonLexicon CanonLexicon::from_entries(const std::vector<std::string>& entries,
                                        const std::vector<std::vector<std::string>>& alias_groups) {
  CanonLexicon lex;
  lex.build(entries, alias_groups);
  return lex;
}

void CanonLexicon::build(const std::vector<std::string>& entries,
                         const std::vector<std::vector<std::string>>& groups) {
  DisjointSets sets;
  std::map<std::string, std::size_t> node;  // lowered form -> set node
  std::vector<std::string> first_spelling;
  auto node_of = [&](const std::string& s) {
    const std::string key = lower(s);
    auto [it, inserted] = node.emplace(key, 0);
    if (inserted) {
      it->second = sets.add();
      first_spelling.push_back(s);
    }
    return it->second;
  };

  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.empty()) throw ConfigError("empty lexicon entry");
    if (!seen.insert(lower(e)).second) throw ConfigError("duplicate lexicon entry '" + e + "'");
    entries_.push_back(e);
    node_of(e);
  }
  for (const auto& g : groups) {
    const bool anchored = std::any_of(g.begin(), g.end(), [&](const auto& s) { return seen.count(lower(s)); });
    if (!anchored) {
      throw ConfigError("alias group '" + (g.empty() ? std::string() : g.front()) +
                        "' does not contain any lexicon entry");
    }
    const std::size_t first = node_of(g.front());
    for (const auto& s : g) sets.unite(first, node_of(s));
  }

  // Entities are numbered by their first entry in file order.
  std::map<std::size_t, std::size_t> entity_of_root;
  for (const auto& e : entries_) {
    const std::size_t root = sets.find(node.at(lower(e)));
    if (entity_of_root.emplace(root, entity_names_.size()).second) entity_names_.push_back(e);
  }
  for (const auto& [key, n] : node) {
    forms_.push_back(Form{key, entity_of_root.at(sets.find(n))});
  }
  std::stable_sort(forms_.begin(), forms_.end(), [](const Form& a, const Form& b) {
    return a.lowered.size() > b.lowered.size();
  });
}

std::vector<CanonLexicon::Match> CanonLexicon::scan(std::string_view text) const {
  const std::string low = lower(text);
  std::vector<Match> candidates;
  for (const auto& f : forms_) {
    for (std::size_t pos = low.find(f.lowered); pos != std::string::npos; pos = low.find(f.lowered, pos + 1)) {
      const std::size_t end = pos + f.lowered.size();
      // Boundaries only matter where the form itself starts/ends with a word char.
      if (pos > 0 && is_word_char(low[pos - 1]) && is_word_char(low[pos])) continue;
      if (end < low.size() && is_word_char(low[end]) && is_word_char(low[end - 1])) continue;
      candidates.push_back(Match{pos, end, f.entity, std::string(text.substr(pos, end - pos))});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Match& a, const Match& b) {
    if (a.end - a.begin != b.end - b.begin) return a.end - a.begin > b.end - b.begin;
    return a.begin < b.begin;
  });
  std::vector<Match> claimed;
  for (auto& m : candidates) {
    const bool overlaps = std::any_of(claimed.begin(), claimed.end(), [&](const Match& c) {
      return m.begin < c.end && c.begin < m.end;
    });
    if (!overlaps) claimed.push_back(std::move(m));
  }
  std::sort(claimed.begin(), claimed.end(), [](const Match& a, const Match& b) { return a.begin < b.begin; });
  return claimed;
}

std::string CanonLexicon::fingerprint() const {
  std::string canon;
  for (const auto& f : forms_) canon += f.lowered + '\x1f' + std::to_string(f.entity) + '\n';
  return sha256_hex(canon).substr(0, 16);
}

namespace {

void push_unique(std::vector<std::string>& list, const std::string& s) {
  const std::string key = lower(s);
  for (const auto& x : list)
    if (lower(x) == key) return;
  list.push_back(s);
}

}  // namespace

JudgeVerdict lexicon_check(std::string_view query, std::string_view completion,
                           const CanonLexicon& lexicon) {
  JudgeVerdict v;
  v.judge_id = "lexicon";

  std::set<std::size_t> query_entities;
  for (const auto& m : lexicon.scan(query)) {
    push_unique(v.query_refs, m.text);
    query_entities.insert(m.entity);
  }

  std::set<std::size_t> counted;
  for (const auto& m : lexicon.scan(completion)) {
    const std::size_t before = v.completion_refs.size();
    push_unique(v.completion_refs, m.text);
    if (v.completion_refs.size() == before) continue;  // same spelling seen already
    if (query_entities.count(m.entity)) continue;
    v.remaining_refs.push_back(m.text);
    if (counted.insert(m.entity).second) {
      v.explanations.push_back({m.text, Decision::kYes,
                                "canonical reference (" + lexicon.entity_name(m.entity) + ")"});
    } else {
      v.explanations.push_back({m.text, Decision::kNo,
                                "variant of an entity already counted (" + lexicon.entity_name(m.entity) + ")"});
    }
  }
  v.score = yes_count(v.explanations);
  return v;
}

}  // namespace leakprobe
