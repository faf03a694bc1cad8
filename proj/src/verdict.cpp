#include "leakprobe/verdict.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

#include "leakprobe/errors.hpp"

namespace leakprobe {

JudgeVerdict JudgeVerdict::make_unknown(std::string judge_id, std::string reason) {
  JudgeVerdict v;
  v.status = VerdictStatus::kUnknown;
  v.judge_id = std::move(judge_id);
  v.raw_response = std::move(reason);
  return v;
}

int yes_count(const std::vector<ReferenceDecision>& explanations) {
  return static_cast<int>(std::count_if(explanations.begin(), explanations.end(),
                                        [](const auto& e) { return e.decision == Decision::kYes; }));
}

bool same_content(const JudgeVerdict& a, const JudgeVerdict& b) {
  return a.status == b.status && a.query_refs == b.query_refs &&
         a.completion_refs == b.completion_refs && a.remaining_refs == b.remaining_refs &&
         a.explanations == b.explanations && a.score == b.score;
}

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

std::string decision_text(const ReferenceDecision& d) {
  std::string out = d.decision == Decision::kYes ? "YES" : "NO";
  if (!d.rationale.empty()) out += " - " + d.rationale;
  return out;
}

// "YES - because ...", "**NO**: generic", "yes" ...
ReferenceDecision parse_decision(const std::string& reference, std::string_view text,
                                 std::string_view raw) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  const std::string head = lower(text.substr(i, 3));
  ReferenceDecision d;
  d.reference = reference;
  std::size_t consumed;
  if (head == "yes") {
    d.decision = Decision::kYes;
    consumed = i + 3;
  } else if (head.rfind("no", 0) == 0 &&
             (i + 2 >= text.size() || !std::isalpha(static_cast<unsigned char>(text[i + 2])))) {
    d.decision = Decision::kNo;
    consumed = i + 2;
  } else {
    throw MalformedVerdict("explanation for '" + reference + "' is neither YES nor NO", std::string(raw));
  }
  std::string_view rest = text.substr(std::min(consumed, text.size()));
  std::size_t j = 0;
  while (j < rest.size() && (std::isspace(static_cast<unsigned char>(rest[j])) || rest[j] == '*' ||
                             rest[j] == '-' || rest[j] == ':' || rest[j] == ',' || rest[j] == '.'))
    ++j;
  d.rationale = trim(rest.substr(j));
  return d;
}

// Index one past the bracket matching raw[open], or npos.
std::size_t match_bracket(std::string_view s, std::size_t open) {
  std::vector<char> stack;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') stack.push_back(c == '{' ? '}' : ']');
    else if (c == '}' || c == ']') {
      if (stack.empty() || stack.back() != c) return std::string_view::npos;
      stack.pop_back();
      if (stack.empty()) return i + 1;
    }
  }
  return std::string_view::npos;
}

// "Explanation": [ "a": "YES", ... ]  ->  "Explanation": { ... }
std::string repair_explanation_list(std::string text) {
  const std::string low = lower(text);
  std::size_t key = low.find("\"explanation\"");
  if (key == std::string::npos) return text;
  std::size_t p = key + 13;
  while (p < text.size() && (std::isspace(static_cast<unsigned char>(text[p])) || text[p] == ':')) ++p;
  if (p >= text.size() || text[p] != '[') return text;
  const std::size_t close = match_bracket(text, p);
  if (close == std::string::npos) return text;
  // Only rewrite if the list holds bare key: value pairs at its top level.
  bool in_string = false, escaped = false, has_colon = false;
  int depth = 0;
  for (std::size_t i = p + 1; i + 1 < close; ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') ++depth;
    else if (c == '}' || c == ']') --depth;
    else if (c == ':' && depth == 0) has_colon = true;
  }
  if (!has_colon) return text;
  text[p] = '{';
  text[close - 1] = '}';
  return text;
}

std::string strip_trailing_commas(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false, escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out += c;
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

std::optional<ojson> try_parse(std::string_view candidate) {
  std::string text(candidate);
  for (int attempt = 0; attempt < 2; ++attempt) {
    ojson j = ojson::parse(text, nullptr, /*allow_exceptions=*/false);
    if (!j.is_discarded()) return j;
    text = strip_trailing_commas(repair_explanation_list(text));
  }
  return std::nullopt;
}

// Offset where the search for the verdict starts: just past the first code
// fence line, or 0 without a fence.
std::size_t search_start(std::string_view raw) {
  const std::size_t fence = raw.find("```");
  if (fence == std::string_view::npos) return 0;
  const std::size_t eol = raw.find('\n', fence);
  return eol == std::string_view::npos ? fence + 3 : eol + 1;
}

// First balanced value opened by one of `openers` that parses as JSON and
// satisfies `accept`.
template <typename Accept>
std::optional<ojson> find_json(std::string_view raw, std::string_view openers, Accept accept) {
  for (std::size_t from : {search_start(raw), std::size_t{0}}) {
    for (std::size_t pos = raw.find_first_of(openers, from); pos != std::string_view::npos;
         pos = raw.find_first_of(openers, pos + 1)) {
      const std::size_t end = match_bracket(raw, pos);
      if (end == std::string_view::npos) continue;
      auto j = try_parse(raw.substr(pos, end - pos));
      if (j && accept(*j)) return j;
    }
    if (from == 0) break;
  }
  return std::nullopt;
}

const ojson* field(const ojson& obj, std::string_view name) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (lower(it.key()) == name) return &it.value();
  }
  return nullptr;
}

std::string as_text(const ojson& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::vector<std::string> string_list(const ojson& obj, std::string_view name) {
  std::vector<std::string> out;
  const ojson* f = field(obj, name);
  if (f == nullptr || f->is_null()) return out;
  if (!f->is_array()) {
    out.push_back(as_text(*f));
    return out;
  }
  for (const auto& e : *f) out.push_back(as_text(e));
  return out;
}

void add_explanation(std::vector<ReferenceDecision>& out, const std::string& ref, const ojson& value,
                     std::string_view raw) {
  if (value.is_object()) {
    const ojson* d = field(value, "decision");
    if (d == nullptr) d = field(value, "answer");
    if (d == nullptr) throw MalformedVerdict("explanation object without a decision", std::string(raw));
    ReferenceDecision rd = parse_decision(ref, as_text(*d), raw);
    if (const ojson* r = field(value, "explanation"); r != nullptr) rd.rationale = as_text(*r);
    out.push_back(std::move(rd));
    return;
  }
  out.push_back(parse_decision(ref, as_text(value), raw));
}

std::vector<ReferenceDecision> parse_explanations(const ojson& obj, std::string_view raw) {
  std::vector<ReferenceDecision> out;
  const ojson* f = field(obj, "explanation");
  if (f == nullptr || f->is_null()) return out;
  if (f->is_object()) {
    for (auto it = f->begin(); it != f->end(); ++it) add_explanation(out, it.key(), it.value(), raw);
    return out;
  }
  if (!f->is_array()) throw MalformedVerdict("Explanation is neither object nor list", std::string(raw));
  for (const auto& e : *f) {
    if (e.is_object()) {
      for (auto it = e.begin(); it != e.end(); ++it) add_explanation(out, it.key(), it.value(), raw);
    } else if (e.is_string()) {
      // "reference: YES - ..."
      const std::string s = e.get<std::string>();
      std::size_t split = std::string::npos;
      for (std::size_t c = s.find(':'); c != std::string::npos; c = s.find(':', c + 1)) {
        const std::string tail = lower(trim(std::string_view(s).substr(c + 1)));
        if (tail.rfind("yes", 0) == 0 || tail.rfind("no", 0) == 0) {
          split = c;
          break;
        }
      }
      if (split == std::string::npos)
        throw MalformedVerdict("unrecognized explanation entry: " + s, std::string(raw));
      out.push_back(parse_decision(trim(std::string_view(s).substr(0, split)),
                                   std::string_view(s).substr(split + 1), raw));
    } else {
      throw MalformedVerdict("unrecognized explanation entry", std::string(raw));
    }
  }
  return out;
}

std::optional<int> parse_score(const ojson& obj) {
  const ojson* f = field(obj, "score");
  if (f == nullptr) return std::nullopt;
  if (f->is_number_integer()) return f->get<int>();
  if (f->is_number()) return static_cast<int>(f->get<double>());
  if (f->is_string()) {
    try {
      return std::stoi(f->get<std::string>());
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

bool looks_like_verdict(const ojson& j) {
  return j.is_object() && (field(j, "score") != nullptr || field(j, "explanation") != nullptr ||
                           field(j, "remaining_references") != nullptr);
}

JudgeVerdict verdict_from_object(const ojson& obj, std::string_view raw, std::string judge_id) {
  JudgeVerdict v;
  v.judge_id = std::move(judge_id);
  v.raw_response = std::string(raw);
  v.query_refs = string_list(obj, "query_prompt_references");
  v.completion_refs = string_list(obj, "model_completion_references");
  v.remaining_refs = string_list(obj, "remaining_references");
  v.explanations = parse_explanations(obj, raw);

  bool normalized = false;
  for (const auto& e : v.explanations) {
    if (!contains(v.remaining_refs, e.reference)) {
      v.remaining_refs.push_back(e.reference);
      normalized = true;
    }
  }
  for (const auto& r : v.remaining_refs) {
    if (!contains(v.completion_refs, r)) {
      v.completion_refs.push_back(r);
      normalized = true;
    }
  }
  if (normalized) spdlog::debug("verdict reference lists normalized (judge {})", v.judge_id);

  v.score = yes_count(v.explanations);
  v.reported_score = parse_score(obj);
  if (v.reported_score && *v.reported_score != v.score) {
    v.score_discrepancy = true;
    spdlog::warn("judge {} reported Score {} but marked {} references YES; using {}", v.judge_id,
                 *v.reported_score, v.score, v.score);
  }
  return v;
}

}  // namespace

std::string serialize_verdict(const JudgeVerdict& v) {
  ojson j;
  j["query_prompt_references"] = v.query_refs;
  j["model_completion_references"] = v.completion_refs;
  j["remaining_references"] = v.remaining_refs;
  ojson expl = ojson::object();
  for (const auto& e : v.explanations) expl[e.reference] = decision_text(e);
  j["Explanation"] = std::move(expl);
  j["Score"] = v.score;
  return "```json\n" + j.dump(4) + "\n```";
}

JudgeVerdict parse_verdict(std::string_view raw, std::string judge_id) {
  auto obj = find_json(raw, "{", looks_like_verdict);
  if (!obj) throw MalformedVerdict("no verdict object found in judge response", std::string(raw));
  return verdict_from_object(*obj, raw, std::move(judge_id));
}

std::vector<std::pair<int, JudgeVerdict>> parse_batch_verdicts(std::string_view raw,
                                                               std::string judge_id) {
  auto is_batch = [](const ojson& j) {
    return j.is_array() && !j.empty() && std::all_of(j.begin(), j.end(), looks_like_verdict);
  };
  auto arr = find_json(raw, "[", is_batch);
  if (!arr) {
    auto single = find_json(raw, "{", looks_like_verdict);
    if (!single) throw MalformedVerdict("no verdict list found in judge response", std::string(raw));
    arr = ojson::array({*single});
  }
  std::vector<std::pair<int, JudgeVerdict>> out;
  int position = 0;
  for (const auto& obj : *arr) {
    int index = position++;
    if (const ojson* qi = field(obj, "query_index"); qi != nullptr && qi->is_number_integer())
      index = qi->get<int>();
    out.emplace_back(index, verdict_from_object(obj, raw, judge_id));
  }
  return out;
}

ojson to_json(const JudgeVerdict& v) {
  ojson j;
  j["status"] = v.unknown() ? "unknown" : "ok";
  j["judge_id"] = v.judge_id;
  j["query_refs"] = v.query_refs;
  j["completion_refs"] = v.completion_refs;
  j["remaining_refs"] = v.remaining_refs;
  ojson expl = ojson::array();
  for (const auto& e : v.explanations) {
    expl.push_back({{"reference", e.reference},
                    {"decision", e.decision == Decision::kYes ? "YES" : "NO"},
                    {"rationale", e.rationale}});
  }
  j["explanations"] = std::move(expl);
  j["score"] = v.score;
  j["score_discrepancy"] = v.score_discrepancy;
  j["reported_score"] = v.reported_score ? ojson(*v.reported_score) : ojson(nullptr);
  j["raw_response"] = v.raw_response;
  return j;
}

JudgeVerdict verdict_from_json(const ojson& j) {
  JudgeVerdict v;
  v.status = j.at("status").get<std::string>() == "unknown" ? VerdictStatus::kUnknown : VerdictStatus::kOk;
  v.judge_id = j.at("judge_id").get<std::string>();
  v.query_refs = j.at("query_refs").get<std::vector<std::string>>();
  v.completion_refs = j.at("completion_refs").get<std::vector<std::string>>();
  v.remaining_refs = j.at("remaining_refs").get<std::vector<std::string>>();
  for (const auto& e : j.at("explanations")) {
    v.explanations.push_back({e.at("reference").get<std::string>(),
                              e.at("decision").get<std::string>() == "YES" ? Decision::kYes : Decision::kNo,
                              e.at("rationale").get<std::string>()});
  }
  v.score = j.at("score").get<int>();
  v.score_discrepancy = j.value("score_discrepancy", false);
  if (j.contains("reported_score") && !j.at("reported_score").is_null())
    v.reported_score = j.at("reported_score").get<int>();
  v.raw_response = j.value("raw_response", std::string{});
  return v;
}

}  // namespace leakprobe
