#include "leakprobe/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "leakprobe/errors.hpp"
#include "leakprobe/rng.hpp"

namespace leakprobe::toy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Vocab make_vocab(std::size_t size) {
  static const std::string kAlphabet =
      "!" " " ":"
      "abcdefghijklmnopqrstuvwxyz"
      "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
      "0123456789";
  if (size == 0 || size > kAlphabet.size())
    throw InvalidArgument("toy vocabulary size must be in [1, " + std::to_string(kAlphabet.size()) + "]");
  std::vector<std::string> texts;
  texts.reserve(size);
  for (std::size_t i = 0; i < size; ++i) texts.emplace_back(1, kAlphabet[i]);
  return Vocab(std::move(texts));
}

ToyTransformer::ToyTransformer(Vocab vocab, Weights weights, std::string descriptor)
    : tokenizer_(std::move(vocab)), weights_(std::move(weights)), descriptor_(std::move(descriptor)) {
  const auto& w = weights_;
  const auto V = static_cast<Eigen::Index>(tokenizer_.vocab().size());
  const auto d = static_cast<Eigen::Index>(w.d_model());
  const auto f = static_cast<Eigen::Index>(w.ffn_width());
  const bool ok = w.E.rows() == V && w.U.cols() == V && w.c.size() == V && w.P.cols() == d &&
                  w.Wq.rows() == d && w.Wq.cols() == d && w.Wk.rows() == d && w.Wk.cols() == d &&
                  w.Wv.rows() == d && w.Wv.cols() == d && w.Wo.rows() == d && w.Wo.cols() == d &&
                  w.W1.rows() == d && w.b1.size() == f && w.W2.rows() == f && w.W2.cols() == d &&
                  w.b2.size() == d && w.U.rows() == d && w.P.rows() > 0;
  if (!ok) throw InvalidArgument("toy weights have inconsistent shapes");
}

namespace {

Weights zero_weights(std::size_t V, std::size_t ctx, std::size_t d, std::size_t f) {
  const auto v = static_cast<Eigen::Index>(V), c = static_cast<Eigen::Index>(ctx),
             dd = static_cast<Eigen::Index>(d), ff = static_cast<Eigen::Index>(f);
  Weights w;
  w.E = MatrixXd::Zero(v, dd);
  w.P = MatrixXd::Zero(c, dd);
  w.Wq = MatrixXd::Zero(dd, dd);
  w.Wk = MatrixXd::Zero(dd, dd);
  w.Wv = MatrixXd::Zero(dd, dd);
  w.Wo = MatrixXd::Zero(dd, dd);
  w.W1 = MatrixXd::Zero(dd, ff);
  w.b1 = VectorXd::Zero(ff);
  w.W2 = MatrixXd::Zero(ff, dd);
  w.b2 = VectorXd::Zero(dd);
  w.U = MatrixXd::Zero(dd, v);
  w.c = VectorXd::Zero(v);
  return w;
}

void fill_normal(Rng& rng, MatrixXd& m, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stddev * rng.normal();
}

void fill_normal(Rng& rng, VectorXd& v, double stddev) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = stddev * rng.normal();
}

MatrixXd log_softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace

std::shared_ptr<ToyTransformer> ToyTransformer::random(std::size_t vocab_size, std::size_t context,
                                                       std::size_t d_model, std::size_t ffn_width,
                                                       std::uint64_t seed, double scale) {
  if (d_model == 0 || ffn_width == 0 || context == 0)
    throw InvalidArgument("toy dimensions must be positive");
  Weights w = zero_weights(vocab_size, context, d_model, ffn_width);
  Rng rng(seed);
  const double sd = scale / std::sqrt(static_cast<double>(d_model));
  const double sf = scale / std::sqrt(static_cast<double>(ffn_width));
  fill_normal(rng, w.E, scale);
  fill_normal(rng, w.P, 0.5 * scale);
  fill_normal(rng, w.Wq, sd);
  fill_normal(rng, w.Wk, sd);
  fill_normal(rng, w.Wv, sd);
  fill_normal(rng, w.Wo, sd);
  fill_normal(rng, w.W1, sd);
  fill_normal(rng, w.b1, 0.1 * scale);
  fill_normal(rng, w.W2, sf);
  fill_normal(rng, w.b2, 0.1 * scale);
  fill_normal(rng, w.U, sd);
  fill_normal(rng, w.c, 0.1 * scale);
  return std::make_shared<ToyTransformer>(make_vocab(vocab_size), std::move(w),
                                          "toy:random(seed=" + std::to_string(seed) + ")");
}

std::shared_ptr<ToyTransformer> ToyTransformer::uniform(std::size_t vocab_size, std::size_t context) {
  return std::make_shared<ToyTransformer>(make_vocab(vocab_size),
                                          zero_weights(vocab_size, context, 4, 4), "toy:uniform");
}

std::shared_ptr<ToyTransformer> ToyTransformer::planted(std::size_t vocab_size, std::size_t context,
                                                        const PlantedSpec& spec) {
  const std::size_t V = vocab_size;
  const std::size_t n_trig = spec.triggers.size();
  if (n_trig == 0) throw InvalidArgument("planted model needs at least one trigger");
  if (spec.chain.size() < 2) throw InvalidArgument("planted chain needs at least two states");
  auto valid = [&](TokenId t) { return t >= 0 && static_cast<std::size_t>(t) < V; };
  if (!std::all_of(spec.triggers.begin(), spec.triggers.end(), valid) ||
      !std::all_of(spec.chain.begin(), spec.chain.end(), valid) || !valid(spec.default_token))
    throw InvalidArgument("planted spec references tokens outside the vocabulary");

  std::map<TokenId, TokenId> next;
  for (std::size_t i = 0; i + 1 < spec.chain.size(); ++i) {
    auto [it, inserted] = next.emplace(spec.chain[i], spec.chain[i + 1]);
    if (!inserted && it->second != spec.chain[i + 1])
      throw InvalidArgument("planted chain is not deterministic: a state has two successors");
  }

  // Residual layout: [0,V) token identity, [V,2V) logit votes,
  // 2V+j trigger-j frequency, 2V+n_trig inverse position.
  const std::size_t d = 2 * V + n_trig + 1;
  const std::size_t f = next.size() * n_trig;
  const auto vote = [&](TokenId t) { return static_cast<Eigen::Index>(V + static_cast<std::size_t>(t)); };
  const auto trig = [&](std::size_t j) { return static_cast<Eigen::Index>(2 * V + j); };
  const auto posinv = static_cast<Eigen::Index>(2 * V + n_trig);

  Weights w = zero_weights(V, context, d, f);
  for (std::size_t v = 0; v < V; ++v) w.E(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v)) = 1.0;
  for (std::size_t p = 0; p < context; ++p)
    w.P(static_cast<Eigen::Index>(p), posinv) = 1.0 / static_cast<double>(p + 1);

  // Wq = Wk = 0 gives uniform causal attention, so trig_j = #t_j / (p + 1).
  for (std::size_t j = 0; j < n_trig; ++j) w.Wv(spec.triggers[j], trig(j)) = 1.0;
  w.Wo.setIdentity();

  // Unit (state, j) fires iff the current token is `state` and t_j occurred:
  //   pre = A (#t_j - 1/2) / (p + 1) + C ([x_p = state] - 1)
  // A keeps |pre| >= margin up to the full context; C > A silences other states.
  const double margin = 12.0;
  const double A = 2.0 * margin * static_cast<double>(context);
  const double C = A + margin;
  const double per_unit = spec.chain_logit / (2.0 * static_cast<double>(n_trig));
  Eigen::Index u = 0;
  for (const auto& [state, succ] : next) {
    for (std::size_t j = 0; j < n_trig; ++j, ++u) {
      w.W1(trig(j), u) = A;
      w.W1(posinv, u) = -0.5 * A;
      w.W1(state, u) = C;
      w.b1(u) = -C;
      w.W2(u, vote(succ)) = per_unit;
      w.b2(vote(succ)) += per_unit;
    }
  }
  for (std::size_t v = 0; v < V; ++v) w.U(vote(static_cast<TokenId>(v)), static_cast<Eigen::Index>(v)) = 1.0;
  w.c(spec.default_token) = spec.default_logit;

  return std::make_shared<ToyTransformer>(make_vocab(V), std::move(w), "toy:planted");
}

ToyTransformer::Activations ToyTransformer::forward(const std::vector<TokenId>& ids) const {
  const auto& w = weights_;
  const auto N = static_cast<Eigen::Index>(ids.size());
  if (ids.size() > w.context()) throw ContextOverflow("sequence longer than toy context");
  const auto d = static_cast<Eigen::Index>(w.d_model());

  Activations a;
  a.H0.resize(N, d);
  for (Eigen::Index i = 0; i < N; ++i) a.H0.row(i) = w.E.row(ids[static_cast<std::size_t>(i)]) + w.P.row(i);

  a.Q = a.H0 * w.Wq;
  a.K = a.H0 * w.Wk;
  a.Vv = a.H0 * w.Wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const MatrixXd S = scale * (a.Q * a.K.transpose());
  a.A = MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double mx = S.row(i).head(i + 1).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      a.A(i, j) = std::exp(S(i, j) - mx);
      z += a.A(i, j);
    }
    a.A.row(i).head(i + 1) /= z;
  }
  a.C = a.A * a.Vv;
  a.H1 = a.H0 + a.C * w.Wo;
  a.F = ((a.H1 * w.W1).rowwise() + w.b1.transpose()).array().tanh().matrix();
  a.H2 = a.H1 + ((a.F * w.W2).rowwise() + w.b2.transpose());
  a.logits = (a.H2 * w.U).rowwise() + w.c.transpose();
  return a;
}

Eigen::MatrixXd ToyTransformer::log_probs(const std::vector<TokenId>& ids) const {
  return log_softmax_rows(forward(ids).logits);
}

namespace {

std::vector<TokenId> joined(const std::vector<TokenId>& prompt, const std::vector<TokenId>& target) {
  // The last target token is never an input.
  std::vector<TokenId> ids = prompt;
  ids.insert(ids.end(), target.begin(), target.end() - 1);
  return ids;
}

}  // namespace

std::vector<double> ToyTransformer::target_logprobs(const std::vector<TokenId>& prompt,
                                                    const std::vector<TokenId>& target) const {
  if (prompt.empty() || target.empty()) throw InvalidArgument("prompt and target must be non-empty");
  const MatrixXd lp = log_probs(joined(prompt, target));
  std::vector<double> out(target.size());
  const auto n = static_cast<Eigen::Index>(prompt.size());
  for (std::size_t t = 0; t < target.size(); ++t)
    out[t] = lp(n - 1 + static_cast<Eigen::Index>(t), target[t]);
  return out;
}

Eigen::MatrixXd ToyTransformer::one_hot_gradient(const std::vector<TokenId>& prompt,
                                                 const std::vector<TokenId>& target,
                                                 std::size_t slice_begin,
                                                 std::size_t slice_len) const {
  if (prompt.empty() || target.empty()) throw InvalidArgument("prompt and target must be non-empty");
  if (slice_begin + slice_len > prompt.size()) throw InvalidArgument("slice outside prompt");
  const auto& w = weights_;
  const auto ids = joined(prompt, target);
  const Activations a = forward(ids);
  const auto N = static_cast<Eigen::Index>(ids.size());
  const auto n = static_cast<Eigen::Index>(prompt.size());

  // dL/dlogits: softmax - onehot on the rows that predict target tokens.
  MatrixXd dlogits = MatrixXd::Zero(N, a.logits.cols());
  const MatrixXd lp = log_softmax_rows(a.logits);
  for (std::size_t t = 0; t < target.size(); ++t) {
    const Eigen::Index r = n - 1 + static_cast<Eigen::Index>(t);
    dlogits.row(r) = lp.row(r).array().exp();
    dlogits(r, target[t]) -= 1.0;
  }

  const MatrixXd dH2 = dlogits * w.U.transpose();
  const MatrixXd dZ = ((dH2 * w.W2.transpose()).array() * (1.0 - a.F.array().square())).matrix();
  const MatrixXd dH1 = dH2 + dZ * w.W1.transpose();

  const MatrixXd dC = dH1 * w.Wo.transpose();
  const MatrixXd dA = dC * a.Vv.transpose();
  const MatrixXd dVv = a.A.transpose() * dC;
  MatrixXd dS = MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double dot = a.A.row(i).head(i + 1).dot(dA.row(i).head(i + 1));
    for (Eigen::Index j = 0; j <= i; ++j) dS(i, j) = a.A(i, j) * (dA(i, j) - dot);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.d_model()));
  const MatrixXd dQ = scale * (dS * a.K);
  const MatrixXd dK = scale * (dS.transpose() * a.Q);
  const MatrixXd dH0 = dH1 + dQ * w.Wq.transpose() + dK * w.Wk.transpose() + dVv * w.Wv.transpose();

  return dH0.middleRows(static_cast<Eigen::Index>(slice_begin), static_cast<Eigen::Index>(slice_len)) *
         w.E.transpose();
}

std::vector<TokenId> ToyTransformer::greedy_decode(const std::vector<TokenId>& prompt,
                                                   std::size_t max_new_tokens) const {
  if (prompt.empty()) throw InvalidArgument("prompt must be non-empty");
  std::vector<TokenId> ids = prompt;
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < max_new_tokens && ids.size() < max_context(); ++step) {
    const MatrixXd logits = forward(ids).logits;
    Eigen::Index best = 0;
    logits.row(logits.rows() - 1).maxCoeff(&best);  // first maximum wins ties
    out.push_back(static_cast<TokenId>(best));
    ids.push_back(static_cast<TokenId>(best));
  }
  return out;
}

PromptTemplate toy_template(std::string query, std::size_t suffix_len) {
  PromptTemplate t;
  t.system_text = "";
  t.user_query = std::move(query);
  t.suffix_placeholder_len = suffix_len;
  t.affirmative_text = "hi";
  t.frame = ChatFrame{"", "", " ", ":"};
  return t;
}

Scenario planted_scenario(std::size_t vocab_size, std::size_t context) {
  if (vocab_size < 12) throw InvalidArgument("planted scenario needs vocab_size >= 12");
  const Vocab vocab = make_vocab(vocab_size);
  auto id = [&](const char* s) { return *vocab.find(s); };
  PlantedSpec spec;
  spec.triggers = {id("e"), id("f")};
  for (char ch : std::string(":hi bag ")) spec.chain.push_back(id(std::string(1, ch).c_str()));
  spec.default_token = id("c");
  Scenario s;
  s.spec = spec;
  s.model = ToyTransformer::planted(vocab_size, context, spec);
  s.prompt = toy_template();
  s.marker = "bag";
  return s;
}

std::vector<std::pair<std::int64_t, std::string>> toy_queries(std::size_t count, std::size_t leaky,
                                                              std::uint64_t seed) {
  if (leaky > count) throw InvalidArgument("more leaky queries than queries");
  static const std::string kLetters = "abcdhi";
  Rng rng(seed);
  // Choose which queries leak with a partial Fisher-Yates shuffle.
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  for (std::size_t i = 0; i < leaky; ++i) std::swap(order[i], order[i + rng.uniform_index(count - i)]);
  std::vector<bool> is_leaky(count, false);
  for (std::size_t i = 0; i < leaky; ++i) is_leaky[order[i]] = true;

  std::vector<std::pair<std::int64_t, std::string>> out;
  for (std::size_t q = 0; q < count; ++q) {
    std::string text;
    const std::size_t words = 2 + rng.uniform_index(2);
    for (std::size_t wi = 0; wi < words; ++wi) {
      if (!text.empty()) text += ' ';
      const std::size_t len = 2 + rng.uniform_index(3);
      for (std::size_t k = 0; k < len; ++k) text += kLetters[rng.uniform_index(kLetters.size())];
    }
    if (is_leaky[q]) text += " fed";
    out.emplace_back(static_cast<std::int64_t>(q + 1), std::move(text));
  }
  return out;
}

}  // namespace leakprobe::toy

namespace leakprobe {

namespace {

template <typename T>
T opt(const nlohmann::json& o, const char* key, T fallback) {
  return o.contains(key) ? o.at(key).get<T>() : fallback;
}

std::shared_ptr<LanguageModel> make_toy(const nlohmann::json& o) {
  const auto V = opt<std::size_t>(o, "vocab_size", 12);
  const auto ctx = opt<std::size_t>(o, "context", 64);
  const auto kind = opt<std::string>(o, "kind", "planted");
  if (V == 0 || V > 64) throw ConfigError("toy vocab_size must be in [1, 64]");
  if (ctx == 0 || ctx > 64) throw ConfigError("toy context must be in [1, 64]");
  if (kind == "uniform") return toy::ToyTransformer::uniform(V, ctx);
  if (kind == "random") {
    return toy::ToyTransformer::random(V, ctx, opt<std::size_t>(o, "d_model", 16),
                                       opt<std::size_t>(o, "ffn", 32), opt<std::uint64_t>(o, "seed", 0),
                                       opt<double>(o, "scale", 1.0));
  }
  if (kind != "planted") throw ConfigError("toy kind must be planted, random or uniform");
  if (!o.contains("triggers") && !o.contains("chain")) return toy::planted_scenario(V, ctx).model;

  const Vocab vocab = toy::make_vocab(V);
  auto lookup = [&](const std::string& s) {
    auto id = vocab.find(s);
    if (!id) throw ConfigError("toy token '" + s + "' not in a vocabulary of size " + std::to_string(V));
    return *id;
  };
  toy::PlantedSpec spec;
  for (const auto& t : o.at("triggers")) spec.triggers.push_back(lookup(t.get<std::string>()));
  for (char ch : o.at("chain").get<std::string>()) spec.chain.push_back(lookup(std::string(1, ch)));
  spec.default_token = lookup(opt<std::string>(o, "default_token", "c"));
  spec.default_logit = opt<double>(o, "default_logit", spec.default_logit);
  spec.chain_logit = opt<double>(o, "chain_logit", spec.chain_logit);
  return toy::ToyTransformer::planted(V, ctx, spec);
}

}  // namespace

BackendRegistry::BackendRegistry() {
  add("toy", "single-layer attention+FFN toy model (kind: planted | random | uniform)", make_toy);
}

BackendRegistry& BackendRegistry::instance() {
  static BackendRegistry registry;
  return registry;
}

}  // namespace leakprobe
