// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "topics/corpus.hpp"
#include "topics/dtm.hpp"
#include "topics/eval.hpp"
#include "topics/lda.hpp"
#include "topics/model_io.hpp"

namespace topics {

struct MethodSpec {
  enum class Kind { cgs, ilr, replicated };
  Kind kind = Kind::cgs;
  std::uint64_t replicas = 0;  // only for replicated

  std::string token() const {
    switch (kind) {
      case Kind::cgs:
        return "cgs";
      case Kind::ilr:
        return "ilr";
      default:
        return "replicated" + std::to_string(replicas);
    }
  }

  // Accepts "cgs", "ilr", "replicated:<R>" (also "replicated<R>").
  static MethodSpec parse(const std::string& text) {
    MethodSpec spec;
    if (text == "cgs") return spec;
    if (text == "ilr") {
      spec.kind = Kind::ilr;
      return spec;
    }
    if (text.rfind("replicated", 0) == 0) {
      std::string arg = text.substr(10);
      if (!arg.empty() && arg[0] == ':') arg = arg.substr(1);
      spec.kind = Kind::replicated;
      spec.replicas = arg.empty() ? 1 : std::stoull(arg);
      if (spec.replicas == 0)
        throw std::invalid_argument("replica count must be positive");
      return spec;
    }
    throw std::invalid_argument("unknown method \"" + text + "\"");
  }
};

// A multi-trial grid experiment over one corpus. Grid axes are crossed in a
// fixed order (k, alpha, beta, epsilon for LDA; kr, kc, alpha, beta_r,
// beta_c, epsilon for DTM), and trial t runs with seed base_seed + t.
struct ExperimentPlan {
  std::string model = "lda";  // "lda" | "dtm"
  std::vector<MethodSpec> methods;
  std::vector<std::size_t> k, kr, kc;
  std::vector<double> alpha, beta, beta_r, beta_c;
  std::vector<double> epsilon{1e-6};
  std::size_t trials = 5;
  std::size_t iters = 100;
  std::string corpus_path;
  std::string corpus_format = "uci";  // "uci" | "csv" | "cache"
  std::string vocab_path;
  double holdout = 0.4;
  std::uint64_t seed = 1;
  std::string out_dir;

  static ExperimentPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  void validate_plan() const {
    if (model != "lda" && model != "dtm")
      throw std::invalid_argument("plan: model must be lda or dtm");
    if (methods.empty()) throw std::invalid_argument("plan: empty method set");
    if (trials < 1) throw std::invalid_argument("plan: trials must be >= 1");
    if (corpus_path.empty())
      throw std::invalid_argument("plan: corpus path required");
    if (out_dir.empty())
      throw std::invalid_argument("plan: output directory required");
    if (holdout < 0.0 || holdout >= 1.0)
      throw std::invalid_argument("plan: holdout must lie in [0, 1)");
    if (model == "lda") {
      if (k.empty() || alpha.empty() || beta.empty() || epsilon.empty())
        throw std::invalid_argument("plan: empty lda grid axis");
    } else {
      if (kr.empty() || kc.empty() || alpha.empty() || beta_r.empty() ||
          beta_c.empty() || epsilon.empty())
        throw std::invalid_argument("plan: empty dtm grid axis");
    }
  }

  std::vector<nlohmann::json> expand_grid() const {
    std::vector<nlohmann::json> configs;
    if (model == "lda") {
      for (std::size_t kk : k)
        for (double a : alpha)
          for (double b : beta)
            for (double e : epsilon)
              configs.push_back(nlohmann::json{
                  {"k", kk}, {"alpha", a}, {"beta", b}, {"epsilon", e}});
    } else {
      for (std::size_t kkr : kr)
        for (std::size_t kkc : kc)
          for (double a : alpha)
            for (double br : beta_r)
              for (double bc : beta_c)
                for (double e : epsilon)
                  configs.push_back(nlohmann::json{{"kr", kkr},
                                                   {"kc", kkc},
                                                   {"alpha", a},
                                                   {"beta_r", br},
                                                   {"beta_c", bc},
                                                   {"epsilon", e}});
    }
    return configs;
  }
};

namespace detail {

template <class T>
std::vector<T> axis(const nlohmann::json& j, const char* name,
                    std::vector<T> fallback = {}) {
  if (!j.contains(name)) return fallback;
  const auto& v = j.at(name);
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace detail

inline ExperimentPlan ExperimentPlan::from_json(const nlohmann::json& j) {
  ExperimentPlan plan;
  plan.model = j.value("model", std::string("lda"));
  for (const auto& m : j.at("methods"))
    plan.methods.push_back(MethodSpec::parse(m.get<std::string>()));
  const nlohmann::json grid = j.value("grid", nlohmann::json::object());
  plan.k = detail::axis<std::size_t>(grid, "k");
  plan.kr = detail::axis<std::size_t>(grid, "kr");
  plan.kc = detail::axis<std::size_t>(grid, "kc");
  plan.alpha = detail::axis<double>(grid, "alpha");
  plan.beta = detail::axis<double>(grid, "beta");
  plan.beta_r = detail::axis<double>(grid, "beta_r");
  plan.beta_c = detail::axis<double>(grid, "beta_c");
  plan.epsilon = detail::axis<double>(grid, "epsilon", {1e-6});
  plan.trials = j.value("trials", std::size_t{5});
  plan.iters = j.value("iters", std::size_t{100});
  plan.corpus_path = j.at("corpus").get<std::string>();
  plan.corpus_format = j.value("corpus_format", std::string("uci"));
  plan.vocab_path = j.value("vocab", std::string());
  plan.holdout = j.value("holdout", 0.4);
  plan.seed = j.value("seed", std::uint64_t{1});
  plan.out_dir = j.value("out_dir", std::string());
  plan.validate_plan();
  return plan;
}

inline nlohmann::json ExperimentPlan::to_json() const {
  nlohmann::json grid;
  if (model == "lda") {
    grid = {{"k", k}, {"alpha", alpha}, {"beta", beta}, {"epsilon", epsilon}};
  } else {
    grid = {{"kr", kr},         {"kc", kc},         {"alpha", alpha},
            {"beta_r", beta_r}, {"beta_c", beta_c}, {"epsilon", epsilon}};
  }
  std::vector<std::string> method_tokens;
  for (const MethodSpec& m : methods) method_tokens.push_back(m.token());
  return nlohmann::json{{"model", model},
                        {"methods", method_tokens},
                        {"grid", grid},
                        {"trials", trials},
                        {"iters", iters},
                        {"corpus", corpus_path},
                        {"corpus_format", corpus_format},
                        {"vocab", vocab_path},
                        {"holdout", holdout},
                        {"seed", seed},
                        {"out_dir", out_dir}};
}

struct CellResult {
  std::string key;
  nlohmann::json config;
  std::string method;
  std::size_t trial = 0;
  PerplexityTrace trace;  // held-out perplexity per iteration
  double final_perplexity = 0.0;
  std::size_t converged_at = 0;        // ILR only; 0 otherwise
  std::size_t iterations = 0;
  std::size_t train_increase_at = 0;   // first iteration where training
                                       // perplexity rose; 0 if monotone
  double seconds = 0.0;                // wall clock; not part of the
                                       // deterministic outputs
  bool failed = false;
  std::string error;
  bool from_cache = false;             // loaded from a previous run
};

struct SweepResult {
  std::vector<CellResult> cells;

  // Pointwise mean trace over trials for one (config, method); iterations
  // missing from some trials (early ILR convergence) average over the
  // trials that reached them.
  PerplexityTrace mean_trace(const nlohmann::json& config,
                             const std::string& method) const {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const CellResult& cell : cells) {
      if (cell.failed || cell.method != method || cell.config != config)
        continue;
      for (const auto& [iter, value] : cell.trace.points) {
        acc[iter].first += value;
        acc[iter].second += 1;
      }
    }
    PerplexityTrace mean;
    for (const auto& [iter, sum_count] : acc)
      mean.points.emplace_back(
          iter, sum_count.first / static_cast<double>(sum_count.second));
    return mean;
  }
};

inline Corpus load_corpus_any(const std::string& path,
                              const std::string& format,
                              const std::string& vocab_path = "") {
  if (format == "uci") return load_uci_bow(path, vocab_path);
  if (format == "csv") return load_triplet_csv(path, true);
  if (format == "cache") return load_cache(path);
  throw std::invalid_argument("unknown corpus format \"" + format + "\"");
}

namespace detail {

struct CellOutcome {
  PerplexityTrace heldout;
  PerplexityTrace training;
  std::size_t converged_at = 0;
  std::size_t iterations = 0;
};

inline std::size_t first_increase(const PerplexityTrace& trace) {
  for (std::size_t i = 1; i < trace.points.size(); ++i)
    if (trace.points[i].second > trace.points[i - 1].second)
      return trace.points[i].first;
  return 0;
}

inline CellOutcome run_lda_cell(const Corpus& corpus, const Split& split,
                                const LdaHyper& hyper, const MethodSpec& method,
                                std::size_t iters,
                                std::span<const Pair> eval_pairs,
                                std::span<const Pair> train_pairs) {
  CellOutcome outcome;
  auto record = [&](std::size_t iter, const LdaModel& model) {
    outcome.heldout.points.emplace_back(iter,
                                        lda_perplexity(model, eval_pairs));
    outcome.training.points.emplace_back(iter,
                                         lda_perplexity(model, train_pairs));
  };
  switch (method.kind) {
    case MethodSpec::Kind::cgs: {
      auto cb = [&](std::size_t iter, const HardState& s) {
        record(iter, estimate_model(s, hyper));
      };
      cgs_train(corpus, split, hyper, iters, cb);
      outcome.iterations = iters;
      break;
    }
    case MethodSpec::Kind::ilr: {
      auto cb = [&](std::size_t iter, const SoftState& s) {
        record(iter, estimate_model(s, hyper));
      };
      IlrResult r = ilr_train(corpus, split, hyper, cb);
      outcome.converged_at = r.converged_at;
      outcome.iterations = r.iterations;
      break;
    }
    case MethodSpec::Kind::replicated: {
      auto cb = [&](std::size_t iter, const SoftState& s) {
        record(iter, estimate_model(s, hyper));
      };
      replicated_train(corpus, split, hyper, method.replicas, iters, cb);
      outcome.iterations = iters;
      break;
    }
  }
  return outcome;
}

inline CellOutcome run_dtm_cell(const Corpus& corpus, const Split& split,
                                const DtmHyper& hyper, const MethodSpec& method,
                                std::size_t iters,
                                std::span<const Pair> eval_pairs,
                                std::span<const Pair> train_pairs) {
  CellOutcome outcome;
  auto record = [&](std::size_t iter, const DtmModel& model) {
    outcome.heldout.points.emplace_back(iter,
                                        dtm_perplexity(model, eval_pairs));
    outcome.training.points.emplace_back(iter,
                                         dtm_perplexity(model, train_pairs));
  };
  switch (method.kind) {
    case MethodSpec::Kind::cgs: {
      auto cb = [&](std::size_t iter, const DtmHardState& s) {
        record(iter, dtm_estimate_model(s, hyper));
      };
      dtm_cgs_train(corpus, split, hyper, iters, cb);
      outcome.iterations = iters;
      break;
    }
    case MethodSpec::Kind::ilr: {
      auto cb = [&](std::size_t iter, const DtmSoftState& s) {
        record(iter, dtm_estimate_model(s, hyper));
      };
      DtmIlrResult r = dtm_ilr_train(corpus, split, hyper, cb);
      outcome.converged_at = r.converged_at;
      outcome.iterations = r.iterations;
      break;
    }
    case MethodSpec::Kind::replicated: {
      auto cb = [&](std::size_t iter, const DtmSoftState& s) {
        record(iter, dtm_estimate_model(s, hyper));
      };
      dtm_replicated_train(corpus, split, hyper, method.replicas, iters, cb);
      outcome.iterations = iters;
      break;
    }
  }
  return outcome;
}

}  // namespace detail

// Runs every (config, method, trial) cell of the plan. Completed cells are
// written incrementally (one trace CSV per cell plus manifest.json), so an
// interrupted sweep resumes by skipping everything the manifest already
// lists. Cell content is a pure function of (corpus bytes, plan, base seed);
// wall-clock timings go to a separate append-only timings.csv.
inline SweepResult run_plan(const ExperimentPlan& plan,
                            std::size_t workers = 1, bool resume = true) {
  plan.validate_plan();
  namespace fs = std::filesystem;
  fs::create_directories(plan.out_dir);
  const fs::path out_dir(plan.out_dir);
  const fs::path manifest_path = out_dir / "manifest.json";

  const Corpus corpus =
      load_corpus_any(plan.corpus_path, plan.corpus_format, plan.vocab_path);

  nlohmann::json manifest{{"plan", plan.to_json()},
                          {"cells", nlohmann::json::object()}};
  if (resume && fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json existing;
    in >> existing;
    if (existing.value("plan", nlohmann::json()) != plan.to_json())
      throw std::runtime_error(
          "output directory holds results for a different plan: " +
          manifest_path.string());
    manifest = existing;
  }

  const std::vector<nlohmann::json> configs = plan.expand_grid();
  struct Job {
    nlohmann::json config;
    MethodSpec method;
    std::size_t trial;
    std::string key;
  };
  std::vector<Job> jobs;
  for (const nlohmann::json& config : configs) {
    const std::string hash = detail::hex64(detail::fnv1a64(config.dump()));
    for (const MethodSpec& method : plan.methods)
      for (std::size_t trial = 0; trial < plan.trials; ++trial)
        jobs.push_back({config, method, trial,
                        plan.model + "_" + method.token() + "_" + hash + "_" +
                            std::to_string(trial)});
  }

  SweepResult result;
  result.cells.resize(jobs.size());
  std::mutex io_mutex;

  auto write_manifest = [&]() {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
  };

  auto run_job = [&](std::size_t index) {
    const Job& job = jobs[index];
    CellResult& cell = result.cells[index];
    cell.key = job.key;
    cell.config = job.config;
    cell.method = job.method.token();
    cell.trial = job.trial;
    const fs::path csv_path = out_dir / (job.key + ".csv");

    {
      std::lock_guard<std::mutex> lock(io_mutex);
      if (resume && manifest["cells"].contains(job.key) &&
          fs::exists(csv_path)) {
        const nlohmann::json& entry = manifest["cells"][job.key];
        cell.from_cache = true;
        cell.failed = entry.value("status", "ok") != "ok";
        cell.error = entry.value("error", "");
        if (!cell.failed) {
          cell.trace = load_trace_csv(csv_path.string());
          cell.final_perplexity = entry.value("final_perplexity", 0.0);
          cell.converged_at = entry.value("converged_at", std::size_t{0});
          cell.iterations = entry.value("iterations", std::size_t{0});
          cell.train_increase_at =
              entry.value("train_increase_at", std::size_t{0});
        }
        return;
      }
    }

    const auto start = std::chrono::steady_clock::now();
    try {
      const std::uint64_t cell_seed = plan.seed + job.trial;
      const Split split = plan.holdout > 0.0
                              ? split_holdout(corpus, plan.holdout, cell_seed)
                              : full_training_split(corpus);
      const std::vector<Pair> train = training_pairs(corpus, split);
      const std::vector<Pair> heldout = held_out_pairs(corpus, split);
      std::span<const Pair> eval_span =
          heldout.empty() ? std::span<const Pair>(train)
                          : std::span<const Pair>(heldout);

      detail::CellOutcome outcome;
      if (plan.model == "lda") {
        LdaHyper hyper;
        hyper.k = job.config.at("k").get<std::size_t>();
        hyper.alpha = job.config.at("alpha").get<double>();
        hyper.beta = job.config.at("beta").get<double>();
        hyper.epsilon = job.config.at("epsilon").get<double>();
        hyper.seed = cell_seed;
        hyper.max_iters = plan.iters;
        outcome = detail::run_lda_cell(corpus, split, hyper, job.method,
                                       plan.iters, eval_span, train);
      } else {
        DtmHyper hyper;
        hyper.kr = job.config.at("kr").get<std::size_t>();
        hyper.kc = job.config.at("kc").get<std::size_t>();
        hyper.alpha = job.config.at("alpha").get<double>();
        hyper.beta_r = job.config.at("beta_r").get<double>();
        hyper.beta_c = job.config.at("beta_c").get<double>();
        hyper.epsilon = job.config.at("epsilon").get<double>();
        hyper.seed = cell_seed;
        hyper.max_iters = plan.iters;
        outcome = detail::run_dtm_cell(corpus, split, hyper, job.method,
                                       plan.iters, eval_span, train);
      }
      cell.trace = std::move(outcome.heldout);
      cell.final_perplexity = cell.trace.points.back().second;
      cell.converged_at = outcome.converged_at;
      cell.iterations = outcome.iterations;
      cell.train_increase_at = detail::first_increase(outcome.training);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();

    std::lock_guard<std::mutex> lock(io_mutex);
    nlohmann::json entry{{"file", job.key + ".csv"},
                         {"status", cell.failed ? "failed" : "ok"},
                         {"config", job.config},
                         {"method", cell.method},
                         {"trial", cell.trial}};
    if (cell.failed) {
      entry["error"] = cell.error;
    } else {
      save_trace_csv(cell.trace, csv_path.string());
      entry["final_perplexity"] = cell.final_perplexity;
      entry["converged_at"] = cell.converged_at;
      entry["iterations"] = cell.iterations;
      entry["train_increase_at"] = cell.train_increase_at;
    }
    manifest["cells"][job.key] = entry;
    write_manifest();
    std::ofstream timings(out_dir / "timings.csv", std::ios::app);
    timings << job.key << "," << cell.seconds << "\n";
  };

  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          run_job(i);
        }
      });
    for (std::thread& t : pool) t.join();
  }
  write_manifest();
  return result;
}

// Final-perplexity matrix over a rectangular (alpha, beta) grid, one matrix
// per method, with max-min spread per method. Values are means over trials.
struct SensitivityTable {
  std::vector<double> alphas;  // ascending
  std::vector<double> betas;   // ascending
  std::vector<std::pair<std::string, Matrix<double>>> per_method;
  std::vector<std::pair<std::string, double>> spreads;
};

inline SensitivityTable sensitivity_table(const SweepResult& result) {
  std::set<double> alpha_set, beta_set;
  std::set<std::string> methods;
  // (method, alpha, beta) -> (sum, count)
  std::map<std::tuple<std::string, double, double>,
           std::pair<double, std::size_t>>
      acc;
  for (const CellResult& cell : result.cells) {
    if (cell.failed) continue;
    if (!cell.config.contains("alpha") || !cell.config.contains("beta"))
      throw std::invalid_argument(
          "sensitivity table requires an (alpha, beta) grid");
    const double a = cell.config.at("alpha").get<double>();
    const double b = cell.config.at("beta").get<double>();
    alpha_set.insert(a);
    beta_set.insert(b);
    methods.insert(cell.method);
    auto& slot = acc[{cell.method, a, b}];
    slot.first += cell.final_perplexity;
    slot.second += 1;
  }
  if (acc.empty()) throw std::invalid_argument("no completed cells");

  SensitivityTable table;
  table.alphas.assign(alpha_set.begin(), alpha_set.end());
  table.betas.assign(beta_set.begin(), beta_set.end());
  for (const std::string& method : methods) {
    Matrix<double> grid(table.alphas.size(), table.betas.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < table.alphas.size(); ++i)
      for (std::size_t j = 0; j < table.betas.size(); ++j) {
        auto it = acc.find({method, table.alphas[i], table.betas[j]});
        if (it == acc.end())
          throw std::invalid_argument("ragged (alpha, beta) grid");
        const double mean =
            it->second.first / static_cast<double>(it->second.second);
        grid(i, j) = mean;
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
      }
    table.per_method.emplace_back(method, std::move(grid));
    table.spreads.emplace_back(method, hi - lo);
  }
  return table;
}

inline void save_sensitivity_csv(const SensitivityTable& table,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (const auto& [method, grid] : table.per_method) {
    out << "method," << method << "\n";
    out << "alpha\\beta";
    for (double b : table.betas) out << "," << b;
    out << "\n";
    for (std::size_t i = 0; i < table.alphas.size(); ++i) {
      out << table.alphas[i];
      for (std::size_t j = 0; j < table.betas.size(); ++j)
        out << "," << grid(i, j);
      out << "\n";
    }
  }
  out << "method,spread\n";
  for (const auto& [method, spread] : table.spreads)
    out << method << "," << spread << "\n";
}

// Conditional posterior for one pair at the residual (pair-excluded) counts
// of a frozen soft state, without mutating the state.
inline std::vector<double> residual_posterior(const SoftState& s,
                                              std::size_t j,
                                              const LdaHyper& hyper) {
  const Pair x = s.pairs[j];
  const auto kappa = s.kappa.row(j);
  std::vector<double> d_excl(kappa.size()), w_excl(kappa.size()),
      n_excl(kappa.size());
  const auto dk = s.n_dk.row(x.doc);
  const auto wk = s.n_wk.row(x.word);
  for (std::size_t kk = 0; kk < kappa.size(); ++kk) {
    d_excl[kk] = std::max(0.0, dk[kk] - kappa[kk]);
    w_excl[kk] = std::max(0.0, wk[kk] - kappa[kk]);
    n_excl[kk] = std::max(0.0, s.n_k[kk] - kappa[kk]);
  }
  std::vector<double> posterior(kappa.size());
  lda_posterior<double>(d_excl, w_excl, n_excl, hyper.alpha, hyper.beta,
                        s.n_wk.rows(), posterior);
  return posterior;
}

struct ReplicationStudy {
  std::vector<std::uint64_t> r_values;
  std::vector<double> mean_tv;  // parallel to r_values
  double analytic_tv_r1 = 0.0;  // expected one-draw TV: mean of 1 - |kappa|^2
};

// Law-of-large-numbers study: freezes a soft state after two deterministic
// sweeps, then for each R measures the mean TV distance between R-sample
// histograms and the exact per-pair posterior, cycling over pairs across
// `trials` draws.
inline ReplicationStudy replication_convergence_study(
    const Corpus& corpus, const LdaHyper& hyper,
    std::span<const std::uint64_t> r_list, std::size_t trials) {
  if (r_list.empty())
    throw std::invalid_argument("replication study: empty R list");
  for (std::size_t i = 1; i < r_list.size(); ++i)
    if (r_list[i] < r_list[i - 1])
      throw std::invalid_argument("replication study: R list must ascend");
  if (trials == 0)
    throw std::invalid_argument("replication study: trials must be >= 1");

  std::mt19937_64 rng = seeded_rng(hyper.seed);
  const Split split = full_training_split(corpus);
  SoftState state =
      soft_init(corpus, split, hyper, SoftInit::random_simplex, rng);
  std::vector<double> scratch(hyper.k);
  ilr_sweep(state, hyper, scratch);
  ilr_sweep(state, hyper, scratch);

  const std::size_t m = state.pairs.size();
  std::vector<std::vector<double>> exact;
  exact.reserve(std::min(trials, m));
  for (std::size_t t = 0; t < std::min(trials, m); ++t)
    exact.push_back(residual_posterior(state, t, hyper));

  ReplicationStudy study;
  double analytic = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& kappa = exact[t % exact.size()];
    double sq = 0.0;
    for (double x : kappa) sq += x * x;
    analytic += 1.0 - sq;
  }
  study.analytic_tv_r1 = analytic / static_cast<double>(trials);

  std::vector<double> hist(hyper.k);
  for (std::uint64_t r : r_list) {
    double tv_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& kappa = exact[t % exact.size()];
      multinomial_histogram(kappa, r, rng, hist);
      tv_sum += total_variation(hist, kappa);
    }
    study.r_values.push_back(r);
    study.mean_tv.push_back(tv_sum / static_cast<double>(trials));
  }
  return study;
}

inline void save_replication_study_csv(const ReplicationStudy& study,
                                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "r,mean_tv\n";
  for (std::size_t i = 0; i < study.r_values.size(); ++i)
    out << study.r_values[i] << "," << study.mean_tv[i] << "\n";
}

}  // namespace topics
