// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "topics/corpus.hpp"
#include "topics/matrix.hpp"
#include "topics/rng.hpp"

namespace topics {

struct LdaHyper {
  std::size_t k = 0;        // topic count
  double alpha = 0.5;       // symmetric Dirichlet prior on doc-topic rows
  double beta = 0.0;        // symmetric Dirichlet prior on topic-word rows
  std::uint64_t seed = 1;
  std::size_t max_iters = 100;
  double epsilon = 1e-6;    // fixed-point convergence tolerance
};

inline void validate(const LdaHyper& h) {
  if (h.k < 2) throw std::invalid_argument("k must be at least 2");
  if (!(h.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(h.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(h.epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
}

// Sampling state: one hard topic assignment per training pair plus the
// count aggregates, stored with every pair's own contribution included.
// n_dk: num_docs x K per-doc topic counts
// n_wk: V x K per-word topic counts
// n_k:  global topic counts
struct HardState {
  std::vector<Pair> pairs;  // training pairs in ascending corpus order
  std::vector<std::uint32_t> z;
  Matrix<std::int64_t> n_dk;
  Matrix<std::int64_t> n_wk;
  std::vector<std::int64_t> n_k;
};

// Soft-assignment state: each pair carries a full simplex vector kappa_j
// instead of a single label, and the aggregates are the real-valued sums
// of those vectors.
struct SoftState {
  std::vector<Pair> pairs;
  Matrix<double> kappa;  // M_train x K
  Matrix<double> n_dk;
  Matrix<double> n_wk;
  std::vector<double> n_k;
};

struct LdaModel {
  Matrix<double> theta;  // num_docs x K, row-stochastic
  Matrix<double> phi;    // K x V, row-stochastic
};

// Conditional posterior over topics for one pair, given count aggregates
// that exclude that pair: f(k) = (d[k]+alpha) * (w[k]+beta) / (n[k]+V*beta),
// normalized over k.
template <class T>
inline void lda_posterior(std::span<const T> d_excl, std::span<const T> w_excl,
                          std::span<const T> n_excl, double alpha, double beta,
                          std::uint64_t vocab_size, std::span<double> out) {
  const double vbeta = static_cast<double>(vocab_size) * beta;
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double f = (static_cast<double>(d_excl[k]) + alpha) *
                     (static_cast<double>(w_excl[k]) + beta) /
                     (static_cast<double>(n_excl[k]) + vbeta);
    out[k] = f;
    total += f;
  }
  if (!std::isfinite(total) || total <= 0.0)
    throw std::runtime_error("lda_posterior: invalid normalizer");
  for (double& f : out) f /= total;
}

inline std::vector<double> lda_posterior(std::span<const double> d_excl,
                                         std::span<const double> w_excl,
                                         std::span<const double> n_excl,
                                         const LdaHyper& hyper,
                                         std::uint64_t vocab_size) {
  std::vector<double> out(hyper.k);
  lda_posterior<double>(d_excl, w_excl, n_excl, hyper.alpha, hyper.beta,
                        vocab_size, out);
  return out;
}

// theta[d,k] = (n_dk+alpha) / (sum_k n_dk + K*alpha)
// phi[k,w]   = (n_wk+beta)  / (n_k + V*beta)
template <class T>
inline LdaModel estimate_model(const Matrix<T>& n_dk, const Matrix<T>& n_wk,
                               const std::vector<T>& n_k, double alpha,
                               double beta) {
  const std::size_t num_docs = n_dk.rows();
  const std::size_t k_count = n_dk.cols();
  const std::size_t vocab = n_wk.rows();
  LdaModel model;
  model.theta = Matrix<double>(num_docs, k_count);
  model.phi = Matrix<double>(k_count, vocab);
  for (std::size_t d = 0; d < num_docs; ++d) {
    double doc_total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k)
      doc_total += static_cast<double>(n_dk(d, k));
    const double denom = doc_total + static_cast<double>(k_count) * alpha;
    for (std::size_t k = 0; k < k_count; ++k)
      model.theta(d, k) = (static_cast<double>(n_dk(d, k)) + alpha) / denom;
  }
  const double vbeta = static_cast<double>(vocab) * beta;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double denom = static_cast<double>(n_k[k]) + vbeta;
    for (std::size_t w = 0; w < vocab; ++w)
      model.phi(k, w) = (static_cast<double>(n_wk(w, k)) + beta) / denom;
  }
  return model;
}

inline LdaModel estimate_model(const HardState& s, const LdaHyper& h) {
  return estimate_model(s.n_dk, s.n_wk, s.n_k, h.alpha, h.beta);
}
inline LdaModel estimate_model(const SoftState& s, const LdaHyper& h) {
  return estimate_model(s.n_dk, s.n_wk, s.n_k, h.alpha, h.beta);
}

using HardCallback = std::function<void(std::size_t iter, const HardState&)>;
using SoftCallback = std::function<void(std::size_t iter, const SoftState&)>;

namespace detail {

inline std::vector<Pair> collect_training_pairs(const Corpus& corpus,
                                                const Split& split) {
  std::vector<Pair> pairs = training_pairs(corpus, split);
  if (pairs.empty())
    throw std::invalid_argument("training split contains no pairs");
  return pairs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Collapsed Gibbs sampling
// ---------------------------------------------------------------------------

inline HardState cgs_init(const Corpus& corpus, const Split& split,
                          const LdaHyper& hyper, std::mt19937_64& rng) {
  validate(hyper);
  HardState s;
  s.pairs = detail::collect_training_pairs(corpus, split);
  s.z.resize(s.pairs.size());
  s.n_dk = Matrix<std::int64_t>(corpus.num_docs, hyper.k);
  s.n_wk = Matrix<std::int64_t>(corpus.vocab_size, hyper.k);
  s.n_k.assign(hyper.k, 0);
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    const auto topic = static_cast<std::uint32_t>(uniform_index(rng, hyper.k));
    s.z[j] = topic;
    ++s.n_dk(s.pairs[j].doc, topic);
    ++s.n_wk(s.pairs[j].word, topic);
    ++s.n_k[topic];
  }
  return s;
}

// One sweep over the training pairs in index order: remove the pair's own
// contribution, draw a new topic from the conditional posterior, reinstate.
inline void cgs_sweep(HardState& s, const LdaHyper& hyper,
                      std::mt19937_64& rng, std::vector<double>& weights) {
  const std::size_t k_count = hyper.k;
  const double vbeta = static_cast<double>(s.n_wk.rows()) * hyper.beta;
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    const Pair x = s.pairs[j];
    auto dk = s.n_dk.row(x.doc);
    auto wk = s.n_wk.row(x.word);
    const std::uint32_t old = s.z[j];
    --dk[old];
    --wk[old];
    --s.n_k[old];
    double total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double f = (static_cast<double>(dk[k]) + hyper.alpha) *
                       (static_cast<double>(wk[k]) + hyper.beta) /
                       (static_cast<double>(s.n_k[k]) + vbeta);
      weights[k] = f;
      total += f;
    }
    const auto topic =
        static_cast<std::uint32_t>(draw_categorical(weights, total, rng));
    s.z[j] = topic;
    ++dk[topic];
    ++wk[topic];
    ++s.n_k[topic];
  }
}

struct CgsResult {
  HardState state;
  LdaModel model;
};

// Algorithm: uniform random initialization, `iters` full sweeps, model
// estimated from the final counts. When average_last > 0 the returned model
// is instead the pointwise mean of the per-sweep estimates over the last
// average_last sweeps.
inline CgsResult cgs_train(const Corpus& corpus, const Split& split,
                           const LdaHyper& hyper, std::size_t iters,
                           const HardCallback& on_iter = {},
                           std::size_t average_last = 0) {
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  CgsResult result;
  result.state = cgs_init(corpus, split, hyper, rng);
  std::vector<double> weights(hyper.k);

  LdaModel sum;
  std::size_t averaged = 0;
  for (std::size_t iter = 1; iter <= iters; ++iter) {
    cgs_sweep(result.state, hyper, rng, weights);
    if (average_last > 0 && iter + average_last > iters) {
      LdaModel m = estimate_model(result.state, hyper);
      if (averaged == 0) {
        sum = std::move(m);
      } else {
        for (std::size_t i = 0; i < sum.theta.size(); ++i)
          sum.theta.data()[i] += m.theta.data()[i];
        for (std::size_t i = 0; i < sum.phi.size(); ++i)
          sum.phi.data()[i] += m.phi.data()[i];
      }
      ++averaged;
    }
    if (on_iter) on_iter(iter, result.state);
  }
  if (averaged > 0) {
    for (double& x : sum.theta.data()) x /= static_cast<double>(averaged);
    for (double& x : sum.phi.data()) x /= static_cast<double>(averaged);
    result.model = std::move(sum);
  } else {
    result.model = estimate_model(result.state, hyper);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Soft-assignment states (finite replication and its infinite limit)
// ---------------------------------------------------------------------------

enum class SoftInit {
  random_simplex,  // normalized i.i.d. unit exponentials per pair
  uniform,         // exactly 1/K everywhere; a symmetric fixed point
};

inline SoftState soft_init(const Corpus& corpus, const Split& split,
                           const LdaHyper& hyper, SoftInit mode,
                           std::mt19937_64& rng) {
  validate(hyper);
  SoftState s;
  s.pairs = detail::collect_training_pairs(corpus, split);
  s.kappa = Matrix<double>(s.pairs.size(), hyper.k);
  s.n_dk = Matrix<double>(corpus.num_docs, hyper.k);
  s.n_wk = Matrix<double>(corpus.vocab_size, hyper.k);
  s.n_k.assign(hyper.k, 0.0);
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    auto row = s.kappa.row(j);
    if (mode == SoftInit::uniform)
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(hyper.k));
    else
      random_simplex(rng, row);
    auto dk = s.n_dk.row(s.pairs[j].doc);
    auto wk = s.n_wk.row(s.pairs[j].word);
    for (std::size_t k = 0; k < hyper.k; ++k) {
      dk[k] += row[k];
      wk[k] += row[k];
      s.n_k[k] += row[k];
    }
  }
  return s;
}

// Recomputes the aggregates from scratch out of the kappa rows; used to
// bound incremental drift.
inline void recompute_soft_aggregates(SoftState& s) {
  s.n_dk.fill(0.0);
  s.n_wk.fill(0.0);
  std::fill(s.n_k.begin(), s.n_k.end(), 0.0);
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    auto row = s.kappa.row(j);
    auto dk = s.n_dk.row(s.pairs[j].doc);
    auto wk = s.n_wk.row(s.pairs[j].word);
    for (std::size_t k = 0; k < row.size(); ++k) {
      dk[k] += row[k];
      wk[k] += row[k];
      s.n_k[k] += row[k];
    }
  }
}

namespace detail {

// Removes pair j's kappa from the aggregates, clamping the tiny negative
// residuals that floating-point drift can leave behind.
inline void soft_remove(SoftState& s, std::size_t j) {
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  auto dk = s.n_dk.row(x.doc);
  auto wk = s.n_wk.row(x.word);
  for (std::size_t k = 0; k < row.size(); ++k) {
    dk[k] = std::max(0.0, dk[k] - row[k]);
    wk[k] = std::max(0.0, wk[k] - row[k]);
    s.n_k[k] = std::max(0.0, s.n_k[k] - row[k]);
  }
}

inline void soft_add(SoftState& s, std::size_t j) {
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  auto dk = s.n_dk.row(x.doc);
  auto wk = s.n_wk.row(x.word);
  for (std::size_t k = 0; k < row.size(); ++k) {
    dk[k] += row[k];
    wk[k] += row[k];
    s.n_k[k] += row[k];
  }
}

}  // namespace detail

// Finite replication: draw R topic samples from the conditional posterior at
// the residual counts and keep their histogram as the new kappa_j, so each
// replica contributes mass 1/R. Returns the new kappa_j.
inline std::vector<double> replicated_cgs_step(std::size_t j, std::uint64_t r,
                                               SoftState& s,
                                               const LdaHyper& hyper,
                                               std::mt19937_64& rng) {
  if (r == 0) throw std::invalid_argument("replica count must be positive");
  detail::soft_remove(s, j);
  const Pair x = s.pairs[j];
  std::vector<double> posterior(hyper.k);
  lda_posterior<double>(s.n_dk.row(x.doc), s.n_wk.row(x.word), s.n_k,
                        hyper.alpha, hyper.beta, s.n_wk.rows(), posterior);
  auto row = s.kappa.row(j);
  multinomial_histogram(posterior, r, rng, row);
  detail::soft_add(s, j);
  return {row.begin(), row.end()};
}

// Infinite limit of the replicated step: the histogram of infinitely many
// samples is the posterior itself, so kappa_j is replaced by the exact
// conditional posterior at the residual counts. Deterministic.
inline std::vector<double> ilr_update(std::size_t j, SoftState& s,
                                      const LdaHyper& hyper) {
  detail::soft_remove(s, j);
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  lda_posterior<double>(s.n_dk.row(x.doc), s.n_wk.row(x.word), s.n_k,
                        hyper.alpha, hyper.beta, s.n_wk.rows(), row);
  detail::soft_add(s, j);
  return {row.begin(), row.end()};
}

// One fixed-point sweep; returns the largest L-inf change of any kappa_j.
inline double ilr_sweep(SoftState& s, const LdaHyper& hyper,
                        std::vector<double>& scratch) {
  const double vbeta = static_cast<double>(s.n_wk.rows()) * hyper.beta;
  double max_delta = 0.0;
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    const Pair x = s.pairs[j];
    auto row = s.kappa.row(j);
    auto dk = s.n_dk.row(x.doc);
    auto wk = s.n_wk.row(x.word);
    double total = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      dk[k] = std::max(0.0, dk[k] - row[k]);
      wk[k] = std::max(0.0, wk[k] - row[k]);
      s.n_k[k] = std::max(0.0, s.n_k[k] - row[k]);
      const double f = (dk[k] + hyper.alpha) * (wk[k] + hyper.beta) /
                       (s.n_k[k] + vbeta);
      scratch[k] = f;
      total += f;
    }
    if (!std::isfinite(total) || total <= 0.0)
      throw std::runtime_error("ilr_sweep: invalid normalizer");
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double updated = scratch[k] / total;
      max_delta = std::max(max_delta, std::abs(updated - row[k]));
      row[k] = updated;
      dk[k] += updated;
      wk[k] += updated;
      s.n_k[k] += updated;
    }
  }
  return max_delta;
}

struct IlrResult {
  SoftState state;
  LdaModel model;
  std::size_t converged_at = 0;  // sweep at which the change fell below
                                 // epsilon; 0 if the budget ran out first
  std::size_t iterations = 0;
  bool converged = false;
};

// Deterministic fixed-point training: seeded random-simplex initialization,
// sweeps in pair order, convergence when no kappa_j moves more than epsilon
// during a full sweep.
inline IlrResult ilr_train(const Corpus& corpus, const Split& split,
                           const LdaHyper& hyper,
                           const SoftCallback& on_iter = {},
                           SoftInit init = SoftInit::random_simplex) {
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  IlrResult result;
  result.state = soft_init(corpus, split, hyper, init, rng);
  std::vector<double> scratch(hyper.k);
  for (std::size_t iter = 1; iter <= hyper.max_iters; ++iter) {
    const double delta = ilr_sweep(result.state, hyper, scratch);
    result.iterations = iter;
    if (on_iter) on_iter(iter, result.state);
    if (delta < hyper.epsilon) {
      result.converged = true;
      result.converged_at = iter;
      break;
    }
  }
  result.model = estimate_model(result.state, hyper);
  return result;
}

struct ReplicatedResult {
  SoftState state;
  LdaModel model;
};

// Finite-R replication training. Initial kappa_j is the histogram of R
// uniform topic draws, which collapses to CGS (with soft bookkeeping) at
// R = 1. Runs a fixed sweep budget like CGS; no convergence detector.
inline ReplicatedResult replicated_train(const Corpus& corpus,
                                         const Split& split,
                                         const LdaHyper& hyper,
                                         std::uint64_t replicas,
                                         std::size_t iters,
                                         const SoftCallback& on_iter = {}) {
  if (replicas == 0)
    throw std::invalid_argument("replica count must be positive");
  validate(hyper);
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  ReplicatedResult result;
  SoftState& s = result.state;
  s.pairs = detail::collect_training_pairs(corpus, split);
  s.kappa = Matrix<double>(s.pairs.size(), hyper.k);
  s.n_dk = Matrix<double>(corpus.num_docs, hyper.k);
  s.n_wk = Matrix<double>(corpus.vocab_size, hyper.k);
  s.n_k.assign(hyper.k, 0.0);
  const std::vector<double> uniform(hyper.k,
                                    1.0 / static_cast<double>(hyper.k));
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    multinomial_histogram(uniform, replicas, rng, s.kappa.row(j));
    detail::soft_add(s, j);
  }
  for (std::size_t iter = 1; iter <= iters; ++iter) {
    for (std::size_t j = 0; j < s.pairs.size(); ++j)
      replicated_cgs_step(j, replicas, s, hyper, rng);
    if (on_iter) on_iter(iter, s);
  }
  result.model = estimate_model(s, hyper);
  return result;
}

}  // namespace topics
