// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end: train / eval / coherence / sweep / convert.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topics/corpus.hpp"
#include "topics/dtm.hpp"
#include "topics/eval.hpp"
#include "topics/lda.hpp"
#include "topics/model_io.hpp"
#include "topics/sweep.hpp"

namespace {

using namespace topics;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string infer_format(const std::string& path, const std::string& forced) {
  if (!forced.empty()) return forced;
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") return "csv";
  if (ext == ".bin" || ext == ".cache") return "cache";
  return "uci";
}

struct TrainArgs {
  std::string model = "lda";
  std::string method = "cgs";
  std::string input, format, vocab;
  std::size_t k = 0, kr = 0, kc = 0;
  double alpha = 0.5;
  double beta = -1.0, beta_r = -1.0, beta_c = -1.0;
  double epsilon = 1e-6;
  std::uint64_t seed = 1;
  std::size_t iters = 100;
  std::uint64_t replicas = 0;
  double holdout = 0.4;
  std::string init = "random";
  std::size_t average_last = 0;
  std::string out, binary_out, trace_path;
};

int cmd_train(const TrainArgs& args) {
  if (args.model != "lda" && args.model != "dtm")
    throw UsageError("--model must be lda or dtm");
  if (args.method != "cgs" && args.method != "ilr" &&
      args.method != "replicated")
    throw UsageError("--method must be cgs, ilr or replicated");
  if (args.method == "replicated" && args.replicas == 0)
    throw UsageError("--method replicated requires --replicas");
  if (args.model == "lda") {
    if (args.k == 0) throw UsageError("--model lda requires --k");
    if (args.beta <= 0.0) throw UsageError("--model lda requires --beta");
    if (args.init == "theta")
      throw UsageError("--init theta is only available for dtm");
  } else {
    if (args.kr == 0 || args.kc == 0)
      throw UsageError("--model dtm requires --kr and --kc");
    if (args.beta_r <= 0.0 || args.beta_c <= 0.0)
      throw UsageError("--model dtm requires --beta-r and --beta-c");
  }
  if (args.out.empty()) throw UsageError("--out is required");
  if (args.init != "random" && args.init != "uniform" && args.init != "theta")
    throw UsageError("--init must be random, uniform or theta");
  if (args.holdout < 0.0 || args.holdout >= 1.0)
    throw UsageError("--holdout must lie in [0, 1)");

  const Corpus corpus = load_corpus_any(
      args.input, infer_format(args.input, args.format), args.vocab);
  const Split split = args.holdout > 0.0
                          ? split_holdout(corpus, args.holdout, args.seed)
                          : full_training_split(corpus);
  const std::vector<Pair> train = training_pairs(corpus, split);
  const std::vector<Pair> heldout = held_out_pairs(corpus, split);
  const std::span<const Pair> eval_span =
      heldout.empty() ? std::span<const Pair>(train)
                      : std::span<const Pair>(heldout);

  PerplexityTrace trace;

  if (args.model == "lda") {
    LdaHyper hyper;
    hyper.k = args.k;
    hyper.alpha = args.alpha;
    hyper.beta = args.beta;
    hyper.epsilon = args.epsilon;
    hyper.seed = args.seed;
    hyper.max_iters = args.iters;
    auto trace_cb = [&](std::size_t iter, const LdaModel& model) {
      trace.points.emplace_back(iter, lda_perplexity(model, eval_span));
    };
    LdaDump dump;
    dump.hyper = hyper;
    if (args.method == "cgs") {
      auto cb = [&](std::size_t iter, const HardState& s) {
        trace_cb(iter, estimate_model(s, hyper));
      };
      dump.model = cgs_train(corpus, split, hyper, args.iters, cb,
                             args.average_last)
                       .model;
    } else if (args.method == "ilr") {
      auto cb = [&](std::size_t iter, const SoftState& s) {
        trace_cb(iter, estimate_model(s, hyper));
      };
      const SoftInit init = args.init == "uniform" ? SoftInit::uniform
                                                   : SoftInit::random_simplex;
      IlrResult result = ilr_train(corpus, split, hyper, cb, init);
      dump.model = std::move(result.model);
      std::cout << "converged_at " << result.converged_at << "\n";
      std::cout << "iterations " << result.iterations << "\n";
    } else {
      auto cb = [&](std::size_t iter, const SoftState& s) {
        trace_cb(iter, estimate_model(s, hyper));
      };
      dump.model = replicated_train(corpus, split, hyper, args.replicas,
                                    args.iters, cb)
                       .model;
    }
    save_model_json(dump, args.out);
    if (!args.binary_out.empty()) save_model_binary(dump, args.binary_out);
  } else {
    DtmHyper hyper;
    hyper.kr = args.kr;
    hyper.kc = args.kc;
    hyper.alpha = args.alpha;
    hyper.beta_r = args.beta_r;
    hyper.beta_c = args.beta_c;
    hyper.epsilon = args.epsilon;
    hyper.seed = args.seed;
    hyper.max_iters = args.iters;
    auto trace_cb = [&](std::size_t iter, const DtmModel& model) {
      trace.points.emplace_back(iter, dtm_perplexity(model, eval_span));
    };
    DtmInit init = DtmInit::random_simplex;
    if (args.init == "uniform") init = DtmInit::uniform;
    if (args.init == "theta") init = DtmInit::theta_seeded;
    DtmDump dump;
    dump.hyper = hyper;
    if (args.method == "cgs") {
      auto cb = [&](std::size_t iter, const DtmHardState& s) {
        trace_cb(iter, dtm_estimate_model(s, hyper));
      };
      dump.model = dtm_cgs_train(corpus, split, hyper, args.iters, cb, init)
                       .model;
    } else if (args.method == "ilr") {
      auto cb = [&](std::size_t iter, const DtmSoftState& s) {
        trace_cb(iter, dtm_estimate_model(s, hyper));
      };
      DtmIlrResult result = dtm_ilr_train(corpus, split, hyper, cb, init);
      dump.model = std::move(result.model);
      std::cout << "converged_at " << result.converged_at << "\n";
      std::cout << "iterations " << result.iterations << "\n";
    } else {
      auto cb = [&](std::size_t iter, const DtmSoftState& s) {
        trace_cb(iter, dtm_estimate_model(s, hyper));
      };
      dump.model = dtm_replicated_train(corpus, split, hyper, args.replicas,
                                        args.iters, cb)
                       .model;
    }
    save_model_json(dump, args.out);
    if (!args.binary_out.empty()) save_model_binary(dump, args.binary_out);
  }

  if (!args.trace_path.empty()) save_trace_csv(trace, args.trace_path);
  return 0;
}

struct EvalArgs {
  std::string model_file, input, format, vocab;
  double holdout = 0.4;
  std::uint64_t seed = 1;
  std::string pairing = "standard";
};

int cmd_eval(const EvalArgs& args) {
  if (args.pairing != "standard" && args.pairing != "swapped")
    throw UsageError("--pairing must be standard or swapped");
  if (args.holdout < 0.0 || args.holdout >= 1.0)
    throw UsageError("--holdout must lie in [0, 1)");
  const AnyModel any = load_model(args.model_file);
  const Corpus corpus = load_corpus_any(
      args.input, infer_format(args.input, args.format), args.vocab);
  std::vector<Pair> pairs;
  if (args.holdout > 0.0) {
    const Split split = split_holdout(corpus, args.holdout, args.seed);
    pairs = held_out_pairs(corpus, split);
  } else {
    pairs = corpus.pairs;
  }
  double perplexity;
  if (any.is_dtm) {
    perplexity = dtm_perplexity(any.dtm.model, pairs,
                                args.pairing == "swapped"
                                    ? DtmPairing::swapped
                                    : DtmPairing::standard);
  } else {
    perplexity = lda_perplexity(any.lda.model, pairs);
  }
  std::printf("perplexity %.6f\n", perplexity);
  return 0;
}

struct CoherenceArgs {
  std::string model_file, input, format, vocab;
  std::size_t top_n = 10;
  std::string metric = "all";
  double holdout = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_coherence(const CoherenceArgs& args) {
  const AnyModel any = load_model(args.model_file);
  const Corpus corpus = load_corpus_any(
      args.input, infer_format(args.input, args.format), args.vocab);
  const Matrix<double>& phi =
      any.is_dtm ? any.dtm.model.phi_c : any.lda.model.phi;
  if (args.top_n > phi.cols())
    throw UsageError("--top-n exceeds the model vocabulary");
  const auto ranked = top_n_words(phi, args.top_n);

  std::optional<Split> split;
  const std::vector<bool>* mask = nullptr;
  if (args.holdout > 0.0) {
    split = split_holdout(corpus, args.holdout, args.seed);
    mask = &split->train_mask;
  }

  std::vector<CoherenceMetric> metrics;
  if (args.metric == "all") {
    metrics = {CoherenceMetric::lcp, CoherenceMetric::pmi,
               CoherenceMetric::npmi};
  } else if (args.metric == "lcp") {
    metrics = {CoherenceMetric::lcp};
  } else if (args.metric == "pmi") {
    metrics = {CoherenceMetric::pmi};
  } else if (args.metric == "npmi") {
    metrics = {CoherenceMetric::npmi};
  } else {
    throw UsageError("--metric must be lcp, pmi, npmi or all");
  }

  std::vector<CoherenceReport> reports;
  for (CoherenceMetric metric : metrics) {
    CoherenceReport report = coherence(ranked, corpus, metric, mask);
    std::printf("%s mean %.6f max %.6f min %.6f\n",
                to_string(metric).c_str(), report.mean, report.max,
                report.min);
    if (report.zero_df_words > 0)
      std::fprintf(stderr, "warning: %zu top words never occur in the corpus\n",
                   report.zero_df_words);
    reports.push_back(std::move(report));
  }
  if (!args.out.empty()) save_coherence_csv(reports, args.out);
  return 0;
}

struct SweepArgs {
  std::string plan_path;
  std::size_t workers = 0;  // 0: resolve from environment, default 1
  bool no_resume = false;
  // replication-study mode
  std::string study_rs;
  std::string input, format, vocab;
  std::size_t k = 0;
  double alpha = 0.5, beta = -1.0;
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  std::string out;
};

int cmd_sweep(const SweepArgs& args) {
  if (!args.study_rs.empty()) {
    if (args.input.empty() || args.k == 0 || args.beta <= 0.0)
      throw UsageError(
          "--replication-study requires --input, --k and --beta");
    std::vector<std::uint64_t> r_list;
    std::stringstream ss(args.study_rs);
    std::string token;
    while (std::getline(ss, token, ','))
      if (!token.empty()) r_list.push_back(std::stoull(token));
    if (r_list.empty()) throw UsageError("--replication-study: empty R list");
    const Corpus corpus = load_corpus_any(
        args.input, infer_format(args.input, args.format), args.vocab);
    LdaHyper hyper;
    hyper.k = args.k;
    hyper.alpha = args.alpha;
    hyper.beta = args.beta;
    hyper.seed = args.seed;
    const ReplicationStudy study =
        replication_convergence_study(corpus, hyper, r_list, args.trials);
    for (std::size_t i = 0; i < study.r_values.size(); ++i)
      std::printf("r %llu mean_tv %.6f\n",
                  static_cast<unsigned long long>(study.r_values[i]),
                  study.mean_tv[i]);
    if (!args.out.empty()) save_replication_study_csv(study, args.out);
    return 0;
  }

  if (args.plan_path.empty())
    throw UsageError("sweep requires --plan or --replication-study");
  std::ifstream in(args.plan_path);
  if (!in) throw std::runtime_error("cannot open " + args.plan_path);
  nlohmann::json plan_json;
  in >> plan_json;
  ExperimentPlan plan;
  try {
    plan = ExperimentPlan::from_json(plan_json);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::size_t workers = args.workers;
  if (workers == 0) {
    if (const char* env = std::getenv("TOPICS_WORKERS"))
      workers = static_cast<std::size_t>(std::strtoul(env, nullptr, 10));
    if (workers == 0) workers = 1;
  }

  const SweepResult result = run_plan(plan, workers, !args.no_resume);
  std::size_t completed = 0, failed = 0, cached = 0;
  for (const CellResult& cell : result.cells) {
    if (cell.failed)
      ++failed;
    else
      ++completed;
    if (cell.from_cache) ++cached;
  }
  std::printf("cells %zu completed %zu failed %zu skipped %zu\n",
              result.cells.size(), completed, failed, cached);

  // mean traces per (config, method)
  const std::vector<nlohmann::json> configs = plan.expand_grid();
  for (const nlohmann::json& config : configs) {
    const std::string hash = detail::hex64(detail::fnv1a64(config.dump()));
    for (const MethodSpec& method : plan.methods) {
      const PerplexityTrace mean = result.mean_trace(config, method.token());
      if (mean.points.empty()) continue;
      const std::filesystem::path path =
          std::filesystem::path(plan.out_dir) /
          ("mean_" + plan.model + "_" + method.token() + "_" + hash + ".csv");
      save_trace_csv(mean, path.string());
    }
  }

  if (plan.model == "lda" && plan.alpha.size() * plan.beta.size() > 1) {
    try {
      const SensitivityTable table = sensitivity_table(result);
      const std::filesystem::path path =
          std::filesystem::path(plan.out_dir) / "sensitivity.csv";
      save_sensitivity_csv(table, path.string());
      for (const auto& [method, spread] : table.spreads)
        std::printf("spread %s %.6f\n", method.c_str(), spread);
    } catch (const std::invalid_argument&) {
      // grid is not a clean (alpha, beta) rectangle; nothing to tabulate
    }
  }
  return failed == 0 ? 0 : 1;
}

struct ConvertArgs {
  std::string input, output;
  std::string from, to;
  std::string vocab_in, vocab_out;
};

int cmd_convert(const ConvertArgs& args) {
  const std::string from = infer_format(args.input, args.from);
  const std::string to = infer_format(args.output, args.to);
  const Corpus corpus = load_corpus_any(args.input, from, args.vocab_in);
  if (to == "uci")
    save_uci_bow(corpus, args.output, args.vocab_out);
  else if (to == "csv")
    save_triplet_csv(corpus, args.output);
  else if (to == "cache")
    save_cache(corpus, args.output);
  else
    throw UsageError("unknown output format \"" + to + "\"");
  std::printf("docs %llu vocab %llu pairs %zu\n",
              static_cast<unsigned long long>(corpus.num_docs),
              static_cast<unsigned long long>(corpus.vocab_size),
              corpus.pairs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topic-model inference engine"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a model and dump it");
  train_cmd->add_option("--model", train.model, "lda or dtm");
  train_cmd->add_option("--method", train.method, "cgs, ilr or replicated");
  train_cmd->add_option("--input", train.input, "corpus file")->required();
  train_cmd->add_option("--format", train.format, "uci, csv or cache");
  train_cmd->add_option("--vocab", train.vocab, "vocab file (uci)");
  train_cmd->add_option("--k", train.k, "topic count (lda)");
  train_cmd->add_option("--kr", train.kr, "row-topic count (dtm)");
  train_cmd->add_option("--kc", train.kc, "column-topic count (dtm)");
  train_cmd->add_option("--alpha", train.alpha, "doc-topic prior");
  train_cmd->add_option("--beta", train.beta, "topic-word prior (lda)");
  train_cmd->add_option("--beta-r", train.beta_r, "row prior (dtm)");
  train_cmd->add_option("--beta-c", train.beta_c, "column prior (dtm)");
  train_cmd->add_option("--epsilon", train.epsilon, "convergence tolerance");
  train_cmd->add_option("--seed", train.seed, "random seed");
  train_cmd->add_option("--iters", train.iters, "iteration budget");
  train_cmd->add_option("--replicas", train.replicas,
                        "sample count for --method replicated");
  train_cmd->add_option("--holdout", train.holdout,
                        "held-out pair fraction (0 trains on everything)");
  train_cmd->add_option("--init", train.init, "random, uniform or theta");
  train_cmd->add_option("--average-last", train.average_last,
                        "average the model over the last s sweeps (cgs)");
  train_cmd->add_option("--out", train.out, "model dump path (json)")
      ->required();
  train_cmd->add_option("--binary-out", train.binary_out,
                        "binary model dump path");
  train_cmd->add_option("--trace", train.trace_path,
                        "per-iteration perplexity CSV");

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "held-out perplexity of a dumped model");
  eval_cmd->add_option("--model-file", eval.model_file, "model dump")
      ->required();
  eval_cmd->add_option("--input", eval.input, "corpus file")->required();
  eval_cmd->add_option("--format", eval.format, "uci, csv or cache");
  eval_cmd->add_option("--vocab", eval.vocab, "vocab file");
  eval_cmd->add_option("--holdout", eval.holdout,
                       "held-out fraction (0 evaluates all pairs)");
  eval_cmd->add_option("--seed", eval.seed, "split seed");
  eval_cmd->add_option("--pairing", eval.pairing,
                       "dtm factor pairing: standard or swapped");

  CoherenceArgs coh;
  CLI::App* coh_cmd =
      app.add_subcommand("coherence", "topic coherence of a dumped model");
  coh_cmd->add_option("--model-file", coh.model_file, "model dump")
      ->required();
  coh_cmd->add_option("--input", coh.input, "corpus file")->required();
  coh_cmd->add_option("--format", coh.format, "uci, csv or cache");
  coh_cmd->add_option("--vocab", coh.vocab, "vocab file");
  coh_cmd->add_option("--top-n", coh.top_n, "top words per topic");
  coh_cmd->add_option("--metric", coh.metric, "lcp, pmi, npmi or all");
  coh_cmd->add_option("--holdout", coh.holdout,
                      "score on the training side of this split");
  coh_cmd->add_option("--seed", coh.seed, "split seed");
  coh_cmd->add_option("--out", coh.out, "report CSV path");

  SweepArgs sweep;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run a grid experiment plan");
  sweep_cmd->add_option("--plan", sweep.plan_path, "plan JSON file");
  sweep_cmd->add_option("--workers", sweep.workers,
                        "parallel cells (default $TOPICS_WORKERS or 1)");
  sweep_cmd->add_flag("--no-resume", sweep.no_resume,
                      "recompute even if results exist");
  sweep_cmd->add_option("--replication-study", sweep.study_rs,
                        "comma-separated R list; runs the histogram "
                        "convergence study instead of a plan");
  sweep_cmd->add_option("--input", sweep.input, "corpus (study mode)");
  sweep_cmd->add_option("--format", sweep.format, "corpus format");
  sweep_cmd->add_option("--vocab", sweep.vocab, "vocab file");
  sweep_cmd->add_option("--k", sweep.k, "topic count (study mode)");
  sweep_cmd->add_option("--alpha", sweep.alpha, "doc-topic prior");
  sweep_cmd->add_option("--beta", sweep.beta, "topic-word prior");
  sweep_cmd->add_option("--seed", sweep.seed, "seed");
  sweep_cmd->add_option("--trials", sweep.trials, "draws per R");
  sweep_cmd->add_option("--out", sweep.out, "study CSV path");

  ConvertArgs convert;
  CLI::App* convert_cmd =
      app.add_subcommand("convert", "convert between corpus formats");
  convert_cmd->add_option("--input", convert.input, "input file")->required();
  convert_cmd->add_option("--out", convert.output, "output file")->required();
  convert_cmd->add_option("--from", convert.from, "uci, csv or cache");
  convert_cmd->add_option("--to", convert.to, "uci, csv or cache");
  convert_cmd->add_option("--vocab", convert.vocab_in, "input vocab (uci)");
  convert_cmd->add_option("--vocab-out", convert.vocab_out,
                          "output vocab (uci)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (coh_cmd->parsed()) return cmd_coherence(coh);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep);
    if (convert_cmd->parsed()) return cmd_convert(convert);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
