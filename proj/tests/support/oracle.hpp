#pragma once
// Test-side reference implementations. These deliberately avoid the library's
// forward/backward code: plain loops over the weight matrices, soft one-hot
// inputs, finite differences and brute-force search.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "leakprobe/gcg.hpp"
#include "leakprobe/toy_model.hpp"

namespace oracle {

using leakprobe::TokenId;
using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat matmul(const Mat& a, const Eigen::MatrixXd& b) {
  Mat out = zeros(a.size(), static_cast<std::size_t>(b.cols()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (Eigen::Index k = 0; k < b.rows(); ++k)
      for (Eigen::Index j = 0; j < b.cols(); ++j) out[i][j] += a[i][k] * b(k, j);
  return out;
}

/// Soft inputs: X[p][v] is the indicator mass of token v at position p.
inline Mat one_hot(const std::vector<TokenId>& ids, std::size_t V) {
  Mat x = zeros(ids.size(), V);
  for (std::size_t p = 0; p < ids.size(); ++p) x[p][static_cast<std::size_t>(ids[p])] = 1.0;
  return x;
}

/// Log-softmax rows of the toy model's logits for soft inputs.
inline Mat log_probs(const leakprobe::toy::Weights& w, const Mat& X) {
  const std::size_t N = X.size();
  const std::size_t d = w.d_model();
  Mat h0 = matmul(X, w.E);
  for (std::size_t p = 0; p < N; ++p)
    for (std::size_t k = 0; k < d; ++k) h0[p][k] += w.P(p, k);
  const Mat q = matmul(h0, w.Wq), k = matmul(h0, w.Wk), v = matmul(h0, w.Wv);
  Mat ctx = zeros(N, d);
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> s(i + 1);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t c = 0; c < d; ++c) ctx[i][c] += s[j] / z * v[j][c];
  }
  Mat h1 = matmul(ctx, w.Wo);
  for (std::size_t p = 0; p < N; ++p)
    for (std::size_t c = 0; c < d; ++c) h1[p][c] += h0[p][c];
  Mat f = matmul(h1, w.W1);
  for (auto& row : f)
    for (std::size_t u = 0; u < row.size(); ++u) row[u] = std::tanh(row[u] + w.b1(u));
  Mat h2 = matmul(f, w.W2);
  for (std::size_t p = 0; p < N; ++p)
    for (std::size_t c = 0; c < d; ++c) h2[p][c] += h1[p][c] + w.b2(c);
  Mat logits = matmul(h2, w.U);
  for (auto& row : logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < row.size(); ++t) mx = std::max(mx, row[t] += w.c(t));
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    for (double& x : row) x -= mx + std::log(z);
  }
  return logits;
}

/// -sum log P(target | prompt) with soft prompt inputs.
inline double loss(const leakprobe::toy::Weights& w, Mat X, const std::vector<TokenId>& target) {
  const std::size_t n = X.size();
  const std::size_t V = w.vocab_size();
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    std::vector<double> row(V, 0.0);
    row[static_cast<std::size_t>(target[t])] = 1.0;
    X.push_back(row);
  }
  const Mat lp = log_probs(w, X);
  double l = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) l -= lp[n - 1 + t][static_cast<std::size_t>(target[t])];
  return l;
}

inline double loss(const leakprobe::toy::Weights& w, const std::vector<TokenId>& prompt,
                   const std::vector<TokenId>& target) {
  return loss(w, one_hot(prompt, w.vocab_size()), target);
}

/// Central differences of the loss in each indicator coordinate of the
/// adversarial positions. Shape |A| x V.
inline Mat finite_difference_gradient(const leakprobe::toy::Weights& w,
                                      const leakprobe::TokenSequence& seq, double h) {
  const std::size_t V = w.vocab_size();
  const auto& slice = seq.adv_slice();
  Mat g = zeros(slice.length, V);
  const Mat base = one_hot(seq.ids(), V);
  for (std::size_t r = 0; r < slice.length; ++r) {
    for (std::size_t v = 0; v < V; ++v) {
      Mat plus = base, minus = base;
      plus[slice.begin + r][v] += h;
      minus[slice.begin + r][v] -= h;
      g[r][v] = (loss(w, plus, seq.target_ids()) - loss(w, minus, seq.target_ids())) / (2.0 * h);
    }
  }
  return g;
}

/// Greedy argmax continuation computed with the oracle forward pass.
inline std::vector<TokenId> greedy(const leakprobe::toy::Weights& w, std::vector<TokenId> ids,
                                   std::size_t steps) {
  std::vector<TokenId> out;
  for (std::size_t s = 0; s < steps; ++s) {
    const Mat lp = log_probs(w, one_hot(ids, w.vocab_size()));
    const auto& last = lp.back();
    const auto best = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    out.push_back(best);
    ids.push_back(best);
  }
  return out;
}

struct Substitution {
  std::size_t slot;
  TokenId token;
  double loss;
};

/// Every single-token replacement in the adversarial slice (no-ops skipped),
/// scored with `score`; returns the lowest, first found on ties.
inline Substitution best_single_substitution(const leakprobe::TokenSequence& seq, std::size_t V,
                                             const std::function<double(const leakprobe::TokenSequence&)>& score) {
  Substitution best{0, -1, std::numeric_limits<double>::infinity()};
  for (std::size_t s = 0; s < seq.adv_slice().length; ++s) {
    for (std::size_t v = 0; v < V; ++v) {
      const auto tok = static_cast<TokenId>(v);
      if (seq.suffix()[s] == tok) continue;
      const double l = score(seq.substituted(s, tok));
      if (l < best.loss) best = {s, tok, l};
    }
  }
  return best;
}

/// Exhaustive search over all V^2 two-token suffixes; returns those for which
/// `leaks` holds.
inline std::vector<std::vector<TokenId>> leaking_suffixes(
    std::size_t V, const std::function<bool(const std::vector<TokenId>&)>& leaks) {
  std::vector<std::vector<TokenId>> out;
  for (std::size_t a = 0; a < V; ++a)
    for (std::size_t b = 0; b < V; ++b) {
      std::vector<TokenId> s{static_cast<TokenId>(a), static_cast<TokenId>(b)};
      if (leaks(s)) out.push_back(s);
    }
  return out;
}

/// Full sort of one gradient row: ascending value, then ascending id.
inline std::vector<TokenId> sorted_candidates(const Eigen::RowVectorXd& row, std::size_t k,
                                              const leakprobe::Vocab& vocab) {
  std::vector<std::pair<double, TokenId>> all;
  for (Eigen::Index v = 0; v < row.size(); ++v)
    if (!vocab.is_special(static_cast<TokenId>(v))) all.emplace_back(row(v), static_cast<TokenId>(v));
  std::sort(all.begin(), all.end());
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace oracle
