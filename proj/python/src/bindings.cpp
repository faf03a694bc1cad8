#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "leakprobe/errors.hpp"
#include "leakprobe/gcg.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/judge.hpp"
#include "leakprobe/lexicon.hpp"
#include "leakprobe/prompts.hpp"
#include "leakprobe/records.hpp"
#include "leakprobe/run_config.hpp"
#include "leakprobe/toy_model.hpp"

namespace py = pybind11;
using namespace leakprobe;

namespace {

/// Base for models written in Python. The tokenizer is a greedy piece
/// tokenizer over the token strings given at construction.
class PythonModel : public LanguageModel {
 public:
  PythonModel(std::vector<std::string> tokens, std::size_t max_context, std::vector<TokenId> control_ids)
      : tokenizer_(Vocab(std::move(tokens), std::set<TokenId>(control_ids.begin(), control_ids.end()))), max_context_(max_context) {}

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::size_t max_context() const override { return max_context_; }
  std::string descriptor() const override { return "python"; }

 private:
  PieceTokenizer tokenizer_;
  std::size_t max_context_;
};

class PyPythonModel final : public PythonModel {
 public:
  using PythonModel::PythonModel;

  std::string descriptor() const override { PYBIND11_OVERRIDE(std::string, PythonModel, descriptor); }
  std::vector<double> target_logprobs(const std::vector<TokenId>& prompt,
                                      const std::vector<TokenId>& target) const override {
    PYBIND11_OVERRIDE_PURE(std::vector<double>, PythonModel, target_logprobs, prompt, target);
  }
  Eigen::MatrixXd one_hot_gradient(const std::vector<TokenId>& prompt, const std::vector<TokenId>& target,
                                   std::size_t slice_begin, std::size_t slice_len) const override {
    PYBIND11_OVERRIDE_PURE(Eigen::MatrixXd, PythonModel, one_hot_gradient, prompt, target, slice_begin,
                           slice_len);
  }
  std::vector<TokenId> greedy_decode(const std::vector<TokenId>& prompt,
                                     std::size_t max_new_tokens) const override {
    PYBIND11_OVERRIDE_PURE(std::vector<TokenId>, PythonModel, greedy_decode, prompt, max_new_tokens);
  }
};

// Python callables may be invoked from worker threads with the GIL released.
std::shared_ptr<JudgeClient> client_of(const std::string& id, py::object fn) {
  if (fn.is_none()) return nullptr;
  auto release = [](py::object* o) {
    py::gil_scoped_acquire gil;
    delete o;
  };
  std::shared_ptr<py::object> guarded(new py::object(std::move(fn)), release);
  return std::make_shared<FunctionJudgeClient>(id, [guarded](const std::string& prompt) {
    py::gil_scoped_acquire gil;
    try {
      return (*guarded)(prompt).cast<std::string>();
    } catch (py::error_already_set& e) {
      throw JudgeTransportError(e.what());
    }
  });
}

py::object json_to_py(const std::string& dumped) {
  return py::module_::import("json").attr("loads")(dumped);
}

py::dict campaign_dict(const CampaignResult& r) {
  py::dict d;
  d["rate_before"] = r.report.rate_before();
  d["rate_after"] = r.report.rate_after();
  d["leaked_before"] = r.report.before.leaked;
  d["leaked_after"] = r.report.after.leaked;
  d["judged_before"] = r.report.before.judged;
  d["judged_after"] = r.report.after.judged;
  d["table"] = format_table(r.report);
  d["records"] = format_records(r.report);
  d["leak_csv"] = format_leak_csv(r.report);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial suffix probing of language models for leaked knowledge";

  auto base_error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base_error);
  py::register_exception<ConfigError>(m, "ConfigError", base_error);
  py::register_exception<ContextOverflow>(m, "ContextOverflow", base_error);
  py::register_exception<TemplateIncompatible>(m, "TemplateIncompatible", base_error);
  py::register_exception<TokenizeError>(m, "TokenizeError", base_error);
  py::register_exception<NumericError>(m, "NumericError", base_error);
  py::register_exception<MalformedVerdict>(m, "MalformedVerdict", base_error);
  py::register_exception<JudgeTransportError>(m, "JudgeTransportError", base_error);
  py::register_exception<Interrupted>(m, "Interrupted", base_error);

  py::class_<LanguageModel, std::shared_ptr<LanguageModel>>(m, "LanguageModel")
      .def("descriptor", &LanguageModel::descriptor)
      .def_property_readonly("max_context", &LanguageModel::max_context)
      .def_property_readonly("vocab_size", [](const LanguageModel& lm) { return lm.vocab().size(); })
      .def("encode", [](const LanguageModel& lm, const std::string& text) { return lm.tokenizer().encode(text); })
      .def("decode", [](const LanguageModel& lm, const std::vector<TokenId>& ids) {
        return lm.tokenizer().decode(ids);
      });

  py::class_<PythonModel, LanguageModel, PyPythonModel, std::shared_ptr<PythonModel>>(m, "Model")
      .def(py::init<std::vector<std::string>, std::size_t, std::vector<TokenId>>(), py::arg("tokens"),
           py::arg("max_context"), py::arg("control_ids") = std::vector<TokenId>{});

  py::class_<toy::ToyTransformer, LanguageModel, std::shared_ptr<toy::ToyTransformer>>(m, "ToyTransformer")
      .def_static("random", &toy::ToyTransformer::random, py::arg("vocab_size"), py::arg("context"),
                  py::arg("d_model"), py::arg("ffn_width"), py::arg("seed"), py::arg("scale") = 1.0)
      .def_static("uniform", &toy::ToyTransformer::uniform, py::arg("vocab_size"), py::arg("context"));

  py::class_<PromptTemplate>(m, "PromptTemplate")
      .def(py::init<>())
      .def_readwrite("system_text", &PromptTemplate::system_text)
      .def_readwrite("user_query", &PromptTemplate::user_query)
      .def_readwrite("suffix_placeholder_len", &PromptTemplate::suffix_placeholder_len)
      .def_readwrite("affirmative_text", &PromptTemplate::affirmative_text)
      .def("with_query", &PromptTemplate::with_query);

  m.def("toy_template", &toy::toy_template, py::arg("query") = "cab dab", py::arg("suffix_len") = 2);
  m.def("planted_scenario", [](std::size_t vocab_size) {
    auto sc = toy::planted_scenario(vocab_size);
    return py::make_tuple(std::static_pointer_cast<LanguageModel>(sc.model), sc.prompt, sc.marker);
  }, py::arg("vocab_size") = 12, "(model, template, marker) of the planted-trigger toy model");
  m.def("toy_queries", &toy::toy_queries, py::arg("count"), py::arg("leaky"), py::arg("seed"));

  py::class_<TokenSequence>(m, "TokenSequence")
      .def(py::init([](std::vector<TokenId> ids, std::size_t begin, std::size_t length, std::vector<TokenId> target) {
             return TokenSequence(std::move(ids), AdvSlice{begin, length}, std::move(target));
           }),
           py::arg("ids"), py::arg("slice_begin"), py::arg("slice_len"), py::arg("target"))
      .def_property_readonly("ids", &TokenSequence::ids)
      .def_property_readonly("target_ids", &TokenSequence::target_ids)
      .def_property_readonly("adv_slice", [](const TokenSequence& s) {
        return py::make_tuple(s.adv_slice().begin, s.adv_slice().length);
      })
      .def_property_readonly("suffix", [](const TokenSequence& s) {
        return std::vector<TokenId>(s.suffix().begin(), s.suffix().end());
      })
      .def("substituted", &TokenSequence::substituted)
      .def("__eq__", [](const TokenSequence& a, const TokenSequence& b) { return a == b; });

  m.def("render_prompt", [](const PromptTemplate& t, const std::vector<TokenId>& suffix, const LanguageModel& lm) {
    return render_prompt(t, suffix, lm.tokenizer());
  });
  m.def("adversarial_loss", &adversarial_loss);
  m.def("sequence_logprobs", &sequence_logprobs);
  m.def("token_gradients", [](const LanguageModel& lm, const TokenSequence& s) {
    return token_gradients(lm, s).values;
  });
  m.def("generate", &generate, py::arg("model"), py::arg("seq"), py::arg("max_new_tokens"));

  py::enum_<JudgePolicyKind>(m, "JudgePolicyKind")
      .value("LEXICON", JudgePolicyKind::kLexicon)
      .value("FAST", JudgePolicyKind::kFast)
      .value("STRONG", JudgePolicyKind::kStrong)
      .value("HYBRID", JudgePolicyKind::kHybrid);

  py::class_<ProbeConfig>(m, "ProbeConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &ProbeConfig::epochs)
      .def_readwrite("batch_size", &ProbeConfig::batch_size)
      .def_readwrite("top_k", &ProbeConfig::top_k)
      .def_readwrite("suffix_len", &ProbeConfig::suffix_len)
      .def_readwrite("max_new_tokens", &ProbeConfig::max_new_tokens)
      .def_readwrite("judge_policy", &ProbeConfig::judge_policy)
      .def_readwrite("judge_check_interval", &ProbeConfig::judge_check_interval)
      .def_readwrite("seed", &ProbeConfig::seed)
      .def_readwrite("unconditional_adoption", &ProbeConfig::unconditional_adoption)
      .def_readwrite("init_token", &ProbeConfig::init_token)
      .def_readwrite("max_resample", &ProbeConfig::max_resample);

  py::class_<JudgeVerdict>(m, "JudgeVerdict")
      .def_readonly("score", &JudgeVerdict::score)
      .def_readonly("judge_id", &JudgeVerdict::judge_id)
      .def_readonly("query_refs", &JudgeVerdict::query_refs)
      .def_readonly("completion_refs", &JudgeVerdict::completion_refs)
      .def_readonly("remaining_refs", &JudgeVerdict::remaining_refs)
      .def_readonly("score_discrepancy", &JudgeVerdict::score_discrepancy)
      .def_readonly("reported_score", &JudgeVerdict::reported_score)
      .def_property_readonly("leaked", &JudgeVerdict::leaked)
      .def_property_readonly("unknown", &JudgeVerdict::unknown)
      .def_property_readonly("explanations", [](const JudgeVerdict& v) {
        py::list out;
        for (const auto& e : v.explanations)
          out.append(py::make_tuple(e.reference, e.decision == Decision::kYes, e.rationale));
        return out;
      })
      .def("to_json", [](const JudgeVerdict& v) { return json_to_py(to_json(v).dump()); });

  m.def("parse_verdict", [](const std::string& raw) { return parse_verdict(raw); });
  m.def("serialize_verdict", &serialize_verdict);
  m.def("build_judge_request", [](const std::string& q, const std::string& c, const std::string& kind) {
    return build_judge_request(q, c, prompt_kind_from_string(kind));
  }, py::arg("query"), py::arg("completion"), py::arg("kind") = "cot_fs");
  m.def("prompt_template", [](const std::string& kind) { return prompt_template(prompt_kind_from_string(kind)); });

  py::class_<CanonLexicon, std::shared_ptr<CanonLexicon>>(m, "CanonLexicon")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<CanonLexicon>(CanonLexicon::load(p)); })
      .def_static("from_entries", [](const std::vector<std::string>& e, const std::vector<std::vector<std::string>>& g) {
        return std::make_shared<CanonLexicon>(CanonLexicon::from_entries(e, g));
      }, py::arg("entries"), py::arg("alias_groups") = std::vector<std::vector<std::string>>{})
      .def_property_readonly("entries", &CanonLexicon::entries)
      .def_property_readonly("entity_count", &CanonLexicon::entity_count)
      .def("check", [](const CanonLexicon& lex, const std::string& q, const std::string& c) {
        return lexicon_check(q, c, lex);
      }, py::arg("query"), py::arg("completion"));

  py::class_<JudgePolicy>(m, "JudgePolicy")
      .def_static("lexicon", [](std::shared_ptr<CanonLexicon> lex) { return JudgePolicy::lexicon(std::move(lex)); })
      .def_static("from_functions", [](JudgePolicyKind kind, py::object fast, py::object strong,
                                       std::shared_ptr<CanonLexicon> lex, std::size_t attempts) {
        JudgeOptions o;
        o.retry.attempts = attempts;
        o.retry.initial_backoff = std::chrono::milliseconds(0);
        return JudgePolicy(kind, std::move(lex), client_of("fast", std::move(fast)),
                           client_of("strong", std::move(strong)), nullptr, o);
      }, py::arg("kind"), py::arg("fast") = py::none(), py::arg("strong") = py::none(),
         py::arg("lexicon") = nullptr, py::arg("attempts") = 1,
         "Policy whose judge clients are Python callables mapping a prompt to response text")
      .def_property_readonly("kind", &JudgePolicy::kind)
      .def("judge", &JudgePolicy::judge, py::call_guard<py::gil_scoped_release>());

  m.def("probe", [](const LanguageModel& lm, const PromptTemplate& t, const ProbeConfig& c, const JudgePolicy& j) {
    ProbeResult r;
    {
      py::gil_scoped_release nogil;
      r = probe(lm, t, c, j);
    }
    return json_to_py(to_json(r, true).dump());
  }, py::arg("model"), py::arg("template"), py::arg("config"), py::arg("judge"));

  m.def("run_campaign", [](const LanguageModel& lm, std::vector<std::pair<std::int64_t, std::string>> queries,
                           const PromptTemplate& t, const ProbeConfig& c, const JudgePolicy& j, std::size_t jobs,
                           std::uint64_t seed) {
    const auto corpus = QueryCorpus::from_queries(std::move(queries));
    CampaignOptions opts;
    opts.pass.jobs = jobs;
    opts.pass.campaign_seed = seed;
    CampaignResult r;
    {
      py::gil_scoped_release nogil;
      r = run_campaign(lm, corpus, t, c, j, opts);
    }
    return campaign_dict(r);
  }, py::arg("model"), py::arg("queries"), py::arg("template"), py::arg("config"), py::arg("judge"),
     py::arg("jobs") = 1, py::arg("seed") = 0);

  m.def("format_rate", [](std::size_t leaked, std::size_t judged) { return RateCount{leaked, judged, 0}.formatted(); });

  py::class_<RunConfig>(m, "RunConfig")
      .def_static("load", &RunConfig::load)
      .def_readonly("prompt", &RunConfig::prompt)
      .def_readonly("probe", &RunConfig::probe)
      .def_readonly("campaign_seed", &RunConfig::campaign_seed)
      .def_property_readonly("hash", &RunConfig::hash)
      .def("make_model", &RunConfig::make_model)
      .def("make_judge", &RunConfig::make_judge);
}
