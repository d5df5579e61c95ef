// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "topics/corpus.hpp"
#include "topics/dtm.hpp"
#include "topics/lda.hpp"
#include "topics/matrix.hpp"

namespace topics {

// Kahan compensated accumulator, so log-likelihood sums are insensitive to
// pair order to well below the reported precision.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - compensation_;
    const double t = sum_ + y;
    compensation_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct PerplexityTrace {
  std::vector<std::pair<std::size_t, double>> points;  // (iteration, value)
};

// exp(-mean log p(w|d)) with p(w|d) = sum_k theta[d,k] * phi[k,w].
inline double lda_perplexity(const LdaModel& model,
                             std::span<const Pair> pairs) {
  if (pairs.empty())
    throw std::invalid_argument("lda_perplexity: no pairs to evaluate");
  const std::size_t k_count = model.theta.cols();
  KahanSum log_sum;
  for (const Pair& p : pairs) {
    if (p.doc >= model.theta.rows() || p.word >= model.phi.cols())
      throw std::out_of_range("lda_perplexity: pair outside model dimensions");
    double prob = 0.0;
    for (std::size_t k = 0; k < k_count; ++k)
      prob += model.theta(p.doc, k) * model.phi(k, p.word);
    log_sum.add(std::log(prob));
  }
  return std::exp(-log_sum.value() / static_cast<double>(pairs.size()));
}

// Which observable each phi factor is evaluated at in the DTM joint
// likelihood. `standard` scores the row observable under phi_r and the
// column observable under phi_c; `swapped` crosses them, which is only
// evaluable when the indices stay in range.
enum class DtmPairing { standard, swapped };

// exp(-mean log p(d,w)) with
//   p(d,w) = sum_{kr,kc} theta[kr,kc] * phi_r[kr,d] * phi_c[kc,w]
// (a joint likelihood, not a conditional one).
inline double dtm_perplexity(const DtmModel& model, std::span<const Pair> pairs,
                             DtmPairing pairing = DtmPairing::standard) {
  if (pairs.empty())
    throw std::invalid_argument("dtm_perplexity: no pairs to evaluate");
  const std::size_t kr_count = model.theta.rows();
  const std::size_t kc_count = model.theta.cols();
  KahanSum log_sum;
  for (const Pair& p : pairs) {
    const std::uint32_t row_obs =
        pairing == DtmPairing::standard ? p.doc : p.word;
    const std::uint32_t col_obs =
        pairing == DtmPairing::standard ? p.word : p.doc;
    if (row_obs >= model.phi_r.cols() || col_obs >= model.phi_c.cols())
      throw std::out_of_range("dtm_perplexity: pair outside model dimensions");
    double prob = 0.0;
    for (std::size_t kr = 0; kr < kr_count; ++kr) {
      const double row_factor = model.phi_r(kr, row_obs);
      for (std::size_t kc = 0; kc < kc_count; ++kc)
        prob += model.theta(kr, kc) * row_factor * model.phi_c(kc, col_obs);
    }
    log_sum.add(std::log(prob));
  }
  return std::exp(-log_sum.value() / static_cast<double>(pairs.size()));
}

// Per-topic word ids ranked by descending phi[k,w]; ties break toward the
// smaller word id so the ranking is deterministic.
inline std::vector<std::vector<std::uint32_t>> top_n_words(
    const Matrix<double>& phi, std::size_t n) {
  if (n > phi.cols())
    throw std::invalid_argument("top_n_words: n exceeds vocabulary size");
  std::vector<std::vector<std::uint32_t>> result(phi.rows());
  std::vector<std::uint32_t> order(phi.cols());
  for (std::size_t k = 0; k < phi.rows(); ++k) {
    std::iota(order.begin(), order.end(), 0u);
    auto row = phi.row(k);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       if (row[a] != row[b]) return row[a] > row[b];
                       return a < b;
                     });
    result[k].assign(order.begin(), order.begin() + n);
  }
  return result;
}

// Document-level frequency statistics for a fixed query word set:
// df(w) = number of documents containing w at least once,
// codf(u, v) = number of documents containing both.
struct CooccurrenceStats {
  std::size_t num_docs = 0;
  std::unordered_map<std::uint32_t, std::int64_t> doc_freq;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> co_doc_freq;

  std::int64_t df(std::uint32_t w) const {
    auto it = doc_freq.find(w);
    return it == doc_freq.end() ? 0 : it->second;
  }
  std::int64_t codf(std::uint32_t a, std::uint32_t b) const {
    if (a == b) return df(a);
    if (a > b) std::swap(a, b);
    auto it = co_doc_freq.find({a, b});
    return it == co_doc_freq.end() ? 0 : it->second;
  }

  // Tabulates from the pair stream; when a train mask is given only pairs
  // with train_mask[j] set are counted. num_docs stays the full corpus
  // document count.
  static CooccurrenceStats build(const Corpus& corpus,
                                 std::span<const std::uint32_t> words,
                                 const std::vector<bool>* train_mask = nullptr) {
    CooccurrenceStats stats;
    stats.num_docs = corpus.num_docs;
    std::unordered_set<std::uint32_t> query(words.begin(), words.end());
    // doc -> set of query words it contains
    std::unordered_map<std::uint32_t, std::unordered_set<std::uint32_t>>
        doc_words;
    for (std::size_t j = 0; j < corpus.pairs.size(); ++j) {
      if (train_mask && !(*train_mask)[j]) continue;
      const Pair& p = corpus.pairs[j];
      if (query.count(p.word)) doc_words[p.doc].insert(p.word);
    }
    for (const auto& [doc, present] : doc_words) {
      std::vector<std::uint32_t> sorted(present.begin(), present.end());
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        ++stats.doc_freq[sorted[i]];
        for (std::size_t l = i + 1; l < sorted.size(); ++l)
          ++stats.co_doc_freq[{sorted[i], sorted[l]}];
      }
    }
    return stats;
  }
};

enum class CoherenceMetric { lcp, pmi, npmi };

inline std::string to_string(CoherenceMetric m) {
  switch (m) {
    case CoherenceMetric::lcp:
      return "lcp";
    case CoherenceMetric::pmi:
      return "pmi";
    default:
      return "npmi";
  }
}

struct CoherenceReport {
  CoherenceMetric metric = CoherenceMetric::npmi;
  std::size_t top_n = 0;
  std::vector<double> per_topic;
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::size_t zero_df_words = 0;  // query words never seen in the corpus
};

inline constexpr double kCoherenceEpsilon = 1e-12;

// Per topic, averages the pairwise score over rank pairs (i, j) with i > j,
// with document-level probabilities p(w) = df(w)/num_docs:
//   PMI  = log((p(wi,wj)+eps) / (p(wi) p(wj)))
//   NPMI = PMI / (-log(p(wi,wj)+eps))
//   LCP  = log((codf(wi,wj)+1) / df(wj))
// Words with zero document frequency are dropped from pairing and counted.
inline CoherenceReport coherence(
    const std::vector<std::vector<std::uint32_t>>& topic_words,
    const Corpus& corpus, CoherenceMetric metric,
    const std::vector<bool>* train_mask = nullptr) {
  if (corpus.num_docs == 0)
    throw std::invalid_argument("coherence: empty corpus");
  std::vector<std::uint32_t> all_words;
  for (const auto& words : topic_words)
    for (std::uint32_t w : words) {
      if (w >= corpus.vocab_size)
        throw std::out_of_range("coherence: word id outside vocabulary");
      all_words.push_back(w);
    }
  const CooccurrenceStats stats =
      CooccurrenceStats::build(corpus, all_words, train_mask);

  CoherenceReport report;
  report.metric = metric;
  const double n_docs = static_cast<double>(stats.num_docs);
  for (const auto& ranked : topic_words) {
    std::vector<std::uint32_t> usable;
    for (std::uint32_t w : ranked) {
      if (stats.df(w) > 0)
        usable.push_back(w);
      else
        ++report.zero_df_words;
    }
    KahanSum sum;
    std::size_t pair_count = 0;
    for (std::size_t i = 1; i < usable.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const std::uint32_t wi = usable[i];
        const std::uint32_t wj = usable[j];
        double score;
        if (metric == CoherenceMetric::lcp) {
          score = std::log(
              (static_cast<double>(stats.codf(wi, wj)) + 1.0) /
              static_cast<double>(stats.df(wj)));
        } else {
          const double p_i = static_cast<double>(stats.df(wi)) / n_docs;
          const double p_j = static_cast<double>(stats.df(wj)) / n_docs;
          const double p_ij =
              static_cast<double>(stats.codf(wi, wj)) / n_docs;
          const double pmi =
              std::log((p_ij + kCoherenceEpsilon) / (p_i * p_j));
          score = metric == CoherenceMetric::pmi
                      ? pmi
                      : pmi / (-std::log(p_ij + kCoherenceEpsilon));
        }
        sum.add(score);
        ++pair_count;
      }
    }
    report.per_topic.push_back(
        pair_count == 0 ? 0.0 : sum.value() / static_cast<double>(pair_count));
  }
  report.top_n = topic_words.empty() ? 0 : topic_words.front().size();
  if (!report.per_topic.empty()) {
    report.mean =
        std::accumulate(report.per_topic.begin(), report.per_topic.end(), 0.0) /
        static_cast<double>(report.per_topic.size());
    report.max = *std::max_element(report.per_topic.begin(),
                                   report.per_topic.end());
    report.min = *std::min_element(report.per_topic.begin(),
                                   report.per_topic.end());
  }
  return report;
}

}  // namespace topics
