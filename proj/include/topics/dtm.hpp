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
#include "topics/lda.hpp"
#include "topics/matrix.hpp"
#include "topics/rng.hpp"

namespace topics {

struct DtmHyper {
  std::size_t kr = 0;     // row-topic count
  std::size_t kc = 0;     // column-topic count
  double alpha = 0.5;     // prior on the joint topic-pair matrix
  double beta_r = 0.0;    // prior on row distributions
  double beta_c = 0.0;    // prior on column distributions
  std::uint64_t seed = 1;
  std::size_t max_iters = 100;
  double epsilon = 1e-6;
};

inline void validate(const DtmHyper& h) {
  if (h.kr < 2) throw std::invalid_argument("kr must be at least 2");
  if (h.kc < 2) throw std::invalid_argument("kc must be at least 2");
  if (!(h.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(h.beta_r > 0.0)) throw std::invalid_argument("beta_r must be positive");
  if (!(h.beta_c > 0.0)) throw std::invalid_argument("beta_c must be positive");
  if (!(h.epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
}

// Joint assignment state. Each pair owns a Kr x Kc cell distribution; the
// aggregates split into row side (n_dk over rows, n_r totals), column side
// (n_wk over columns, n_c totals), and the joint pair-count matrix p_rc.
struct DtmSoftState {
  std::vector<Pair> pairs;
  Matrix<double> kappa;  // M_train x (Kr*Kc), each row a joint simplex
  Matrix<double> n_dk;   // num_rows x Kr
  Matrix<double> n_wk;   // num_cols x Kc
  Matrix<double> p_rc;   // Kr x Kc
  std::vector<double> n_r;
  std::vector<double> n_c;
};

struct DtmHardState {
  std::vector<Pair> pairs;
  std::vector<std::uint32_t> z;  // row topic per pair
  std::vector<std::uint32_t> y;  // column topic per pair
  Matrix<std::int64_t> n_dk;
  Matrix<std::int64_t> n_wk;
  Matrix<std::int64_t> p_rc;
  std::vector<std::int64_t> n_r;
  std::vector<std::int64_t> n_c;
};

struct DtmModel {
  Matrix<double> theta;  // Kr x Kc joint, sums to 1 over all cells
  Matrix<double> phi_r;  // Kr x num_rows, row-stochastic
  Matrix<double> phi_c;  // Kc x num_cols, row-stochastic
};

// Joint conditional posterior over (row topic, column topic) cells for one
// pair, from aggregates that exclude that pair:
//   f(kr,kc) = (d[kr]+beta_r) * (w[kc]+beta_c) * (p[kr,kc]+alpha)
//              / ((n_r[kr]+num_rows*beta_r) * (n_c[kc]+num_cols*beta_c))
// normalized over all Kr*Kc cells. Written flat, row-major in kc.
template <class T>
inline void dtm_posterior(std::span<const T> d_excl, std::span<const T> w_excl,
                          const Matrix<T>& p_excl, std::span<const T> nr_excl,
                          std::span<const T> nc_excl, const DtmHyper& hyper,
                          std::uint64_t num_rows, std::uint64_t num_cols,
                          std::span<double> out) {
  const double rbeta = static_cast<double>(num_rows) * hyper.beta_r;
  const double cbeta = static_cast<double>(num_cols) * hyper.beta_c;
  std::vector<double> row_factor(hyper.kr);
  std::vector<double> col_factor(hyper.kc);
  for (std::size_t kr = 0; kr < hyper.kr; ++kr)
    row_factor[kr] = (static_cast<double>(d_excl[kr]) + hyper.beta_r) /
                     (static_cast<double>(nr_excl[kr]) + rbeta);
  for (std::size_t kc = 0; kc < hyper.kc; ++kc)
    col_factor[kc] = (static_cast<double>(w_excl[kc]) + hyper.beta_c) /
                     (static_cast<double>(nc_excl[kc]) + cbeta);
  double total = 0.0;
  for (std::size_t kr = 0; kr < hyper.kr; ++kr)
    for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
      const double f = row_factor[kr] * col_factor[kc] *
                       (static_cast<double>(p_excl(kr, kc)) + hyper.alpha);
      out[kr * hyper.kc + kc] = f;
      total += f;
    }
  if (!std::isfinite(total) || total <= 0.0)
    throw std::runtime_error("dtm_posterior: invalid normalizer");
  for (double& f : out) f /= total;
}

inline Matrix<double> dtm_posterior(std::span<const double> d_excl,
                                    std::span<const double> w_excl,
                                    const Matrix<double>& p_excl,
                                    std::span<const double> nr_excl,
                                    std::span<const double> nc_excl,
                                    const DtmHyper& hyper,
                                    std::uint64_t num_rows,
                                    std::uint64_t num_cols) {
  Matrix<double> out(hyper.kr, hyper.kc);
  dtm_posterior<double>(d_excl, w_excl, p_excl, nr_excl, nc_excl, hyper,
                        num_rows, num_cols,
                        std::span<double>(out.data().data(), out.size()));
  return out;
}

// theta     proportional to p_rc + alpha, normalized over all cells
// phi_r[kr,d] = (n_dk[d,kr]+beta_r) / (n_r[kr]+num_rows*beta_r)
// phi_c[kc,w] = (n_wk[w,kc]+beta_c) / (n_c[kc]+num_cols*beta_c)
template <class T>
inline DtmModel dtm_estimate_model(const Matrix<T>& n_dk,
                                   const Matrix<T>& n_wk,
                                   const Matrix<T>& p_rc,
                                   const std::vector<T>& n_r,
                                   const std::vector<T>& n_c,
                                   const DtmHyper& hyper) {
  const std::size_t num_rows = n_dk.rows();
  const std::size_t num_cols = n_wk.rows();
  DtmModel model;
  model.theta = Matrix<double>(hyper.kr, hyper.kc);
  double theta_total = 0.0;
  for (std::size_t kr = 0; kr < hyper.kr; ++kr)
    for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
      const double v = static_cast<double>(p_rc(kr, kc)) + hyper.alpha;
      model.theta(kr, kc) = v;
      theta_total += v;
    }
  for (double& v : model.theta.data()) v /= theta_total;

  model.phi_r = Matrix<double>(hyper.kr, num_rows);
  const double rbeta = static_cast<double>(num_rows) * hyper.beta_r;
  for (std::size_t kr = 0; kr < hyper.kr; ++kr) {
    const double denom = static_cast<double>(n_r[kr]) + rbeta;
    for (std::size_t d = 0; d < num_rows; ++d)
      model.phi_r(kr, d) =
          (static_cast<double>(n_dk(d, kr)) + hyper.beta_r) / denom;
  }
  model.phi_c = Matrix<double>(hyper.kc, num_cols);
  const double cbeta = static_cast<double>(num_cols) * hyper.beta_c;
  for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
    const double denom = static_cast<double>(n_c[kc]) + cbeta;
    for (std::size_t w = 0; w < num_cols; ++w)
      model.phi_c(kc, w) =
          (static_cast<double>(n_wk(w, kc)) + hyper.beta_c) / denom;
  }
  return model;
}

inline DtmModel dtm_estimate_model(const DtmHardState& s,
                                   const DtmHyper& h) {
  return dtm_estimate_model(s.n_dk, s.n_wk, s.p_rc, s.n_r, s.n_c, h);
}
inline DtmModel dtm_estimate_model(const DtmSoftState& s,
                                   const DtmHyper& h) {
  return dtm_estimate_model(s.n_dk, s.n_wk, s.p_rc, s.n_r, s.n_c, h);
}

using DtmHardCallback =
    std::function<void(std::size_t iter, const DtmHardState&)>;
using DtmSoftCallback =
    std::function<void(std::size_t iter, const DtmSoftState&)>;

enum class DtmInit {
  random_simplex,  // independent random joint simplex per pair
  uniform,         // 1/(Kr*Kc) everywhere; a symmetric fixed point
  theta_seeded,    // one random joint simplex shared by every pair
};

// ---------------------------------------------------------------------------
// Collapsed Gibbs sampling
// ---------------------------------------------------------------------------

inline DtmHardState dtm_cgs_init(const Corpus& corpus, const Split& split,
                                 const DtmHyper& hyper, DtmInit init,
                                 std::mt19937_64& rng) {
  validate(hyper);
  DtmHardState s;
  s.pairs = detail::collect_training_pairs(corpus, split);
  s.z.resize(s.pairs.size());
  s.y.resize(s.pairs.size());
  s.n_dk = Matrix<std::int64_t>(corpus.num_docs, hyper.kr);
  s.n_wk = Matrix<std::int64_t>(corpus.vocab_size, hyper.kc);
  s.p_rc = Matrix<std::int64_t>(hyper.kr, hyper.kc);
  s.n_r.assign(hyper.kr, 0);
  s.n_c.assign(hyper.kc, 0);
  std::vector<double> seed_theta;
  if (init == DtmInit::theta_seeded) {
    seed_theta.resize(hyper.kr * hyper.kc);
    random_simplex(rng, seed_theta);
  }
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    std::size_t cell;
    if (init == DtmInit::theta_seeded)
      cell = draw_categorical(seed_theta, rng);
    else
      cell = uniform_index(rng, hyper.kr * hyper.kc);
    const auto zr = static_cast<std::uint32_t>(cell / hyper.kc);
    const auto yc = static_cast<std::uint32_t>(cell % hyper.kc);
    s.z[j] = zr;
    s.y[j] = yc;
    ++s.n_dk(s.pairs[j].doc, zr);
    ++s.n_wk(s.pairs[j].word, yc);
    ++s.p_rc(zr, yc);
    ++s.n_r[zr];
    ++s.n_c[yc];
  }
  return s;
}

inline void dtm_cgs_sweep(DtmHardState& s, const DtmHyper& hyper,
                          std::mt19937_64& rng, std::vector<double>& weights) {
  const double rbeta = static_cast<double>(s.n_dk.rows()) * hyper.beta_r;
  const double cbeta = static_cast<double>(s.n_wk.rows()) * hyper.beta_c;
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    const Pair x = s.pairs[j];
    auto dk = s.n_dk.row(x.doc);
    auto wk = s.n_wk.row(x.word);
    const std::uint32_t zr = s.z[j];
    const std::uint32_t yc = s.y[j];
    --dk[zr];
    --wk[yc];
    --s.p_rc(zr, yc);
    --s.n_r[zr];
    --s.n_c[yc];
    double total = 0.0;
    for (std::size_t kr = 0; kr < hyper.kr; ++kr) {
      const double row_factor =
          (static_cast<double>(dk[kr]) + hyper.beta_r) /
          (static_cast<double>(s.n_r[kr]) + rbeta);
      for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
        const double f =
            row_factor * (static_cast<double>(wk[kc]) + hyper.beta_c) /
            (static_cast<double>(s.n_c[kc]) + cbeta) *
            (static_cast<double>(s.p_rc(kr, kc)) + hyper.alpha);
        weights[kr * hyper.kc + kc] = f;
        total += f;
      }
    }
    const std::size_t cell = draw_categorical(weights, total, rng);
    const auto new_z = static_cast<std::uint32_t>(cell / hyper.kc);
    const auto new_y = static_cast<std::uint32_t>(cell % hyper.kc);
    s.z[j] = new_z;
    s.y[j] = new_y;
    ++dk[new_z];
    ++wk[new_y];
    ++s.p_rc(new_z, new_y);
    ++s.n_r[new_z];
    ++s.n_c[new_y];
  }
}

struct DtmCgsResult {
  DtmHardState state;
  DtmModel model;
};

inline DtmCgsResult dtm_cgs_train(const Corpus& corpus, const Split& split,
                                  const DtmHyper& hyper, std::size_t iters,
                                  const DtmHardCallback& on_iter = {},
                                  DtmInit init = DtmInit::random_simplex) {
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  DtmCgsResult result;
  const DtmInit hard_init =
      init == DtmInit::theta_seeded ? init : DtmInit::random_simplex;
  result.state = dtm_cgs_init(corpus, split, hyper, hard_init, rng);
  std::vector<double> weights(hyper.kr * hyper.kc);
  for (std::size_t iter = 1; iter <= iters; ++iter) {
    dtm_cgs_sweep(result.state, hyper, rng, weights);
    if (on_iter) on_iter(iter, result.state);
  }
  result.model = dtm_estimate_model(result.state, hyper);
  return result;
}

// ---------------------------------------------------------------------------
// Soft path
// ---------------------------------------------------------------------------

inline DtmSoftState dtm_soft_init(const Corpus& corpus, const Split& split,
                                  const DtmHyper& hyper, DtmInit mode,
                                  std::mt19937_64& rng) {
  validate(hyper);
  DtmSoftState s;
  s.pairs = detail::collect_training_pairs(corpus, split);
  const std::size_t cells = hyper.kr * hyper.kc;
  s.kappa = Matrix<double>(s.pairs.size(), cells);
  s.n_dk = Matrix<double>(corpus.num_docs, hyper.kr);
  s.n_wk = Matrix<double>(corpus.vocab_size, hyper.kc);
  s.p_rc = Matrix<double>(hyper.kr, hyper.kc);
  s.n_r.assign(hyper.kr, 0.0);
  s.n_c.assign(hyper.kc, 0.0);
  std::vector<double> seed_theta;
  if (mode == DtmInit::theta_seeded) {
    seed_theta.resize(cells);
    random_simplex(rng, seed_theta);
  }
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    auto row = s.kappa.row(j);
    switch (mode) {
      case DtmInit::uniform:
        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(cells));
        break;
      case DtmInit::theta_seeded:
        std::copy(seed_theta.begin(), seed_theta.end(), row.begin());
        break;
      default:
        random_simplex(rng, row);
    }
    auto dk = s.n_dk.row(s.pairs[j].doc);
    auto wk = s.n_wk.row(s.pairs[j].word);
    for (std::size_t kr = 0; kr < hyper.kr; ++kr)
      for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
        const double v = row[kr * hyper.kc + kc];
        dk[kr] += v;
        wk[kc] += v;
        s.p_rc(kr, kc) += v;
        s.n_r[kr] += v;
        s.n_c[kc] += v;
      }
  }
  return s;
}

inline void recompute_dtm_aggregates(DtmSoftState& s, const DtmHyper& hyper) {
  s.n_dk.fill(0.0);
  s.n_wk.fill(0.0);
  s.p_rc.fill(0.0);
  std::fill(s.n_r.begin(), s.n_r.end(), 0.0);
  std::fill(s.n_c.begin(), s.n_c.end(), 0.0);
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    auto row = s.kappa.row(j);
    auto dk = s.n_dk.row(s.pairs[j].doc);
    auto wk = s.n_wk.row(s.pairs[j].word);
    for (std::size_t kr = 0; kr < hyper.kr; ++kr)
      for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
        const double v = row[kr * hyper.kc + kc];
        dk[kr] += v;
        wk[kc] += v;
        s.p_rc(kr, kc) += v;
        s.n_r[kr] += v;
        s.n_c[kc] += v;
      }
  }
}

namespace detail {

// The joint kappa matrix feeds each aggregate through the matching
// marginal: rows for the row side, columns for the column side, the full
// matrix for the joint counts.
inline void dtm_soft_remove(DtmSoftState& s, std::size_t j,
                            const DtmHyper& hyper) {
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  auto dk = s.n_dk.row(x.doc);
  auto wk = s.n_wk.row(x.word);
  for (std::size_t kr = 0; kr < hyper.kr; ++kr) {
    double row_sum = 0.0;
    for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
      const double v = row[kr * hyper.kc + kc];
      row_sum += v;
      s.p_rc(kr, kc) = std::max(0.0, s.p_rc(kr, kc) - v);
    }
    dk[kr] = std::max(0.0, dk[kr] - row_sum);
    s.n_r[kr] = std::max(0.0, s.n_r[kr] - row_sum);
  }
  for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
    double col_sum = 0.0;
    for (std::size_t kr = 0; kr < hyper.kr; ++kr)
      col_sum += row[kr * hyper.kc + kc];
    wk[kc] = std::max(0.0, wk[kc] - col_sum);
    s.n_c[kc] = std::max(0.0, s.n_c[kc] - col_sum);
  }
}

inline void dtm_soft_add(DtmSoftState& s, std::size_t j,
                         const DtmHyper& hyper) {
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  auto dk = s.n_dk.row(x.doc);
  auto wk = s.n_wk.row(x.word);
  for (std::size_t kr = 0; kr < hyper.kr; ++kr) {
    double row_sum = 0.0;
    for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
      const double v = row[kr * hyper.kc + kc];
      row_sum += v;
      s.p_rc(kr, kc) += v;
    }
    dk[kr] += row_sum;
    s.n_r[kr] += row_sum;
  }
  for (std::size_t kc = 0; kc < hyper.kc; ++kc) {
    double col_sum = 0.0;
    for (std::size_t kr = 0; kr < hyper.kr; ++kr)
      col_sum += row[kr * hyper.kc + kc];
    wk[kc] += col_sum;
    s.n_c[kc] += col_sum;
  }
}

}  // namespace detail

// Deterministic joint update: the pair's kappa matrix becomes the exact
// joint conditional posterior at the residual aggregates.
inline Matrix<double> dtm_ilr_update(std::size_t j, DtmSoftState& s,
                                     const DtmHyper& hyper) {
  detail::dtm_soft_remove(s, j, hyper);
  const Pair x = s.pairs[j];
  auto row = s.kappa.row(j);
  dtm_posterior<double>(s.n_dk.row(x.doc), s.n_wk.row(x.word), s.p_rc, s.n_r,
                        s.n_c, hyper, s.n_dk.rows(), s.n_wk.rows(), row);
  detail::dtm_soft_add(s, j, hyper);
  Matrix<double> out(hyper.kr, hyper.kc);
  std::copy(row.begin(), row.end(), out.data().begin());
  return out;
}

// Finite-R joint step, mirroring the LDA replicated step over joint cells.
inline std::vector<double> dtm_replicated_step(std::size_t j, std::uint64_t r,
                                               DtmSoftState& s,
                                               const DtmHyper& hyper,
                                               std::mt19937_64& rng) {
  if (r == 0) throw std::invalid_argument("replica count must be positive");
  detail::dtm_soft_remove(s, j, hyper);
  const Pair x = s.pairs[j];
  std::vector<double> posterior(hyper.kr * hyper.kc);
  dtm_posterior<double>(s.n_dk.row(x.doc), s.n_wk.row(x.word), s.p_rc, s.n_r,
                        s.n_c, hyper, s.n_dk.rows(), s.n_wk.rows(), posterior);
  auto row = s.kappa.row(j);
  multinomial_histogram(posterior, r, rng, row);
  detail::dtm_soft_add(s, j, hyper);
  return {row.begin(), row.end()};
}

inline double dtm_ilr_sweep(DtmSoftState& s, const DtmHyper& hyper,
                            std::vector<double>& scratch) {
  double max_delta = 0.0;
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    detail::dtm_soft_remove(s, j, hyper);
    const Pair x = s.pairs[j];
    auto row = s.kappa.row(j);
    dtm_posterior<double>(s.n_dk.row(x.doc), s.n_wk.row(x.word), s.p_rc,
                          s.n_r, s.n_c, hyper, s.n_dk.rows(), s.n_wk.rows(),
                          scratch);
    for (std::size_t i = 0; i < row.size(); ++i) {
      max_delta = std::max(max_delta, std::abs(scratch[i] - row[i]));
      row[i] = scratch[i];
    }
    detail::dtm_soft_add(s, j, hyper);
  }
  return max_delta;
}

struct DtmIlrResult {
  DtmSoftState state;
  DtmModel model;
  std::size_t converged_at = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

inline DtmIlrResult dtm_ilr_train(const Corpus& corpus, const Split& split,
                                  const DtmHyper& hyper,
                                  const DtmSoftCallback& on_iter = {},
                                  DtmInit init = DtmInit::random_simplex) {
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  DtmIlrResult result;
  result.state = dtm_soft_init(corpus, split, hyper, init, rng);
  std::vector<double> scratch(hyper.kr * hyper.kc);
  for (std::size_t iter = 1; iter <= hyper.max_iters; ++iter) {
    const double delta = dtm_ilr_sweep(result.state, hyper, scratch);
    result.iterations = iter;
    if (on_iter) on_iter(iter, result.state);
    if (delta < hyper.epsilon) {
      result.converged = true;
      result.converged_at = iter;
      break;
    }
  }
  result.model = dtm_estimate_model(result.state, hyper);
  return result;
}

struct DtmReplicatedResult {
  DtmSoftState state;
  DtmModel model;
};

inline DtmReplicatedResult dtm_replicated_train(
    const Corpus& corpus, const Split& split, const DtmHyper& hyper,
    std::uint64_t replicas, std::size_t iters,
    const DtmSoftCallback& on_iter = {}) {
  if (replicas == 0)
    throw std::invalid_argument("replica count must be positive");
  validate(hyper);
  std::mt19937_64 rng = seeded_rng(hyper.seed);
  DtmReplicatedResult result;
  DtmSoftState& s = result.state;
  s.pairs = detail::collect_training_pairs(corpus, split);
  const std::size_t cells = hyper.kr * hyper.kc;
  s.kappa = Matrix<double>(s.pairs.size(), cells);
  s.n_dk = Matrix<double>(corpus.num_docs, hyper.kr);
  s.n_wk = Matrix<double>(corpus.vocab_size, hyper.kc);
  s.p_rc = Matrix<double>(hyper.kr, hyper.kc);
  s.n_r.assign(hyper.kr, 0.0);
  s.n_c.assign(hyper.kc, 0.0);
  const std::vector<double> uniform(cells, 1.0 / static_cast<double>(cells));
  for (std::size_t j = 0; j < s.pairs.size(); ++j) {
    multinomial_histogram(uniform, replicas, rng, s.kappa.row(j));
    detail::dtm_soft_add(s, j, hyper);
  }
  for (std::size_t iter = 1; iter <= iters; ++iter) {
    for (std::size_t j = 0; j < s.pairs.size(); ++j)
      dtm_replicated_step(j, replicas, s, hyper, rng);
    if (on_iter) on_iter(iter, s);
  }
  result.model = dtm_estimate_model(s, hyper);
  return result;
}

}  // namespace topics
