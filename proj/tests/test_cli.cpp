// Apache License, Version 2.0, refer to LICENSE.txt
//
// End-to-end checks against the built binary. Each case drives a real
// subprocess and inspects exit codes, stdout and produced files.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "support/synthetic.hpp"
#include "topics/corpus.hpp"
#include "topics/model_io.hpp"

using namespace topics;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

fs::path temp_root() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("topics_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = temp_root() / ("stdout_" + std::to_string(counter));
  const fs::path err = temp_root() / ("stderr_" + std::to_string(counter));
  ++counter;
  const std::string command = std::string(TOPICS_CLI_PATH) + " " + args +
                              " > " + out.string() + " 2> " + err.string();
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream out_in(out), err_in(err);
  result.out.assign(std::istreambuf_iterator<char>(out_in), {});
  result.err.assign(std::istreambuf_iterator<char>(err_in), {});
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string toy_docword() {
  static const std::string path = [] {
    const Corpus corpus = testsupport::planted_corpus(8, 10, 2, 25, 42);
    const fs::path p = temp_root() / "toy.docword";
    save_uci_bow(corpus, p.string());
    return p.string();
  }();
  return path;
}

}  // namespace

TEST_CASE("train ilr writes the model and trace it promises") {
  const fs::path model = temp_root() / "model.json";
  const fs::path trace = temp_root() / "trace.csv";
  const RunResult r = run_cli(
      "train --model lda --method ilr --k 4 --alpha 0.5 --beta 0.5 "
      "--epsilon 1e-6 --seed 1 --input " + toy_docword() +
      " --holdout 0.4 --out " + model.string() + " --trace " +
      trace.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("converged_at") != std::string::npos);
  REQUIRE(fs::exists(model));
  REQUIRE(fs::exists(trace));
  CHECK(slurp(trace).rfind("iteration,perplexity\n", 0) == 0);
  const AnyModel loaded = load_model(model.string());
  CHECK_FALSE(loaded.is_dtm);
  CHECK(loaded.lda.hyper.k == 4);
}

TEST_CASE("identical ilr invocations produce byte-identical dumps") {
  const fs::path first = temp_root() / "rep_a.json";
  const fs::path second = temp_root() / "rep_b.json";
  const std::string base =
      "train --model lda --method ilr --k 3 --alpha 0.5 --beta 0.5 "
      "--seed 9 --input " + toy_docword() + " --holdout 0.4 --out ";
  REQUIRE(run_cli(base + first.string()).exit_code == 0);
  REQUIRE(run_cli(base + second.string()).exit_code == 0);
  CHECK(slurp(first) == slurp(second));
}

TEST_CASE("replicated training accepts a replica count") {
  const fs::path model = temp_root() / "replicated.json";
  const RunResult r = run_cli(
      "train --model lda --method replicated --replicas 4 --k 3 "
      "--alpha 0.5 --beta 0.5 --seed 2 --iters 5 --input " + toy_docword() +
      " --holdout 0.4 --out " + model.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const AnyModel loaded = load_model(model.string());
  // every kappa is a histogram of 4 draws, so theta entries are smoothed
  // quarters; just confirm the dump is a valid stochastic model
  for (std::size_t d = 0; d < loaded.lda.model.theta.rows(); ++d) {
    double sum = 0.0;
    for (std::size_t k = 0; k < loaded.lda.model.theta.cols(); ++k)
      sum += loaded.lda.model.theta(d, k);
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
  // omitting --replicas is a usage error
  const RunResult bad = run_cli(
      "train --model lda --method replicated --k 3 --alpha 0.5 --beta 0.5 "
      "--input " + toy_docword() + " --out " + model.string());
  CHECK(bad.exit_code == 2);
}

TEST_CASE("dtm training works end to end") {
  const fs::path model = temp_root() / "dtm.json";
  const RunResult r = run_cli(
      "train --model dtm --method ilr --kr 2 --kc 2 --alpha 0.5 "
      "--beta-r 0.5 --beta-c 0.5 --seed 3 --iters 60 --input " +
      toy_docword() + " --holdout 0.4 --out " + model.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("converged_at") != std::string::npos);
  const AnyModel loaded = load_model(model.string());
  CHECK(loaded.is_dtm);
}

TEST_CASE("eval prints the uniform-model perplexity exactly") {
  // hand-built uniform model over V=100
  nlohmann::json j;
  j["K"] = 2;
  j["alpha"] = 0.5;
  j["beta"] = 0.5;
  j["theta"] = std::vector<double>(4 * 2, 0.5);
  j["phi"] = std::vector<double>(2 * 100, 0.01);
  const fs::path model = temp_root() / "uniform.json";
  std::ofstream(model) << j.dump();

  // corpus over the same 100-word vocabulary
  Corpus corpus;
  corpus.num_docs = 4;
  corpus.vocab_size = 100;
  for (std::uint32_t d = 0; d < 4; ++d)
    for (std::uint32_t w = 0; w < 10; ++w)
      corpus.pairs.push_back({d, static_cast<std::uint32_t>(w * 7)});
  const fs::path docword = temp_root() / "uniform.docword";
  save_uci_bow(corpus, docword.string());

  const RunResult r = run_cli("eval --model-file " + model.string() +
                              " --input " + docword.string() + " --holdout 0");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("perplexity 100.000000") != std::string::npos);
}

TEST_CASE("coherence scores the perfect-association corpus at one") {
  // words 0 and 1 co-occur in two documents and never appear apart
  const Corpus corpus = testsupport::corpus_from_pairs(
      5, 3, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}, {3, 2}, {4, 2}});
  const fs::path docword = temp_root() / "assoc.docword";
  save_uci_bow(corpus, docword.string());

  // model whose top-2 words are 0 and 1 in both topics
  nlohmann::json j;
  j["K"] = 2;
  j["alpha"] = 0.5;
  j["beta"] = 0.5;
  j["theta"] = std::vector<double>{1.0};
  j["theta"] = std::vector<double>(1 * 2, 0.5);
  j["phi"] = std::vector<double>{0.5, 0.4, 0.1, 0.6, 0.3, 0.1};
  const fs::path model = temp_root() / "assoc_model.json";
  std::ofstream(model) << j.dump();

  const fs::path report = temp_root() / "coherence.csv";
  const RunResult r = run_cli("coherence --model-file " + model.string() +
                              " --input " + docword.string() +
                              " --top-n 2 --metric npmi --out " +
                              report.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.out.find("npmi mean ") != std::string::npos);
  const double mean = std::stod(r.out.substr(r.out.find("npmi mean ") + 10));
  CHECK(mean == Catch::Approx(1.0).margin(1e-6));
  CHECK(slurp(report).rfind("topic,metric,score\n", 0) == 0);
}

TEST_CASE("sweep executes a 5x5 grid plan and lists every cell") {
  const fs::path out_dir = temp_root() / "sweep_out";
  nlohmann::json plan;
  plan["model"] = "lda";
  plan["methods"] = {"cgs", "ilr"};
  plan["grid"]["k"] = {3};
  plan["grid"]["alpha"] = {0.01, 0.05, 0.10, 0.25, 0.50};
  plan["grid"]["beta"] = {0.01, 0.05, 0.10, 0.25, 0.50};
  plan["trials"] = 1;
  plan["iters"] = 3;
  plan["corpus"] = toy_docword();
  plan["corpus_format"] = "uci";
  plan["holdout"] = 0.4;
  plan["seed"] = 1;
  plan["out_dir"] = out_dir.string();
  const fs::path plan_path = temp_root() / "plan.json";
  std::ofstream(plan_path) << plan.dump(2);

  const RunResult r = run_cli("sweep --plan " + plan_path.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  nlohmann::json manifest;
  std::ifstream manifest_in(out_dir / "manifest.json");
  manifest_in >> manifest;
  CHECK(manifest["cells"].size() == 25 * 2);  // 5*5 configs, 2 methods
  CHECK(fs::exists(out_dir / "sensitivity.csv"));
  CHECK(r.out.find("spread cgs") != std::string::npos);
  CHECK(r.out.find("spread ilr") != std::string::npos);

  // rerun skips everything
  const RunResult again = run_cli("sweep --plan " + plan_path.string());
  REQUIRE(again.exit_code == 0);
  CHECK(again.out.find("skipped 50") != std::string::npos);
}

TEST_CASE("sweep runs the replication convergence study") {
  const fs::path csv = temp_root() / "study.csv";
  const RunResult r = run_cli(
      "sweep --replication-study 1,100 --input " + toy_docword() +
      " --k 3 --alpha 0.5 --beta 0.5 --seed 2 --trials 50 --out " +
      csv.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("r 1 mean_tv") != std::string::npos);
  CHECK(slurp(csv).rfind("r,mean_tv\n", 0) == 0);
}

TEST_CASE("convert round-trips between the formats") {
  // csv -> uci -> csv preserves the cells
  const fs::path csv_in = temp_root() / "in.csv";
  std::ofstream(csv_in) << "row,col,count\nu1,a1,2\nu2,a1,1\nu2,a2,3\n";
  const fs::path docword = temp_root() / "converted.docword";
  const fs::path vocab = temp_root() / "converted.vocab";
  RunResult r = run_cli("convert --input " + csv_in.string() + " --from csv" +
                        " --to uci --out " + docword.string() +
                        " --vocab-out " + vocab.string());
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("docs 2 vocab 2 pairs 6") != std::string::npos);
  CHECK(slurp(docword) == "2\n2\n3\n1 1 2\n2 1 1\n2 2 3\n");
  CHECK(slurp(vocab) == "a1\na2\n");

  const fs::path cache = temp_root() / "converted.cache";
  r = run_cli("convert --input " + docword.string() + " --to cache --out " +
              cache.string());
  REQUIRE(r.exit_code == 0);
  const Corpus reloaded = load_cache(cache.string());
  CHECK(reloaded.pairs.size() == 6);

  // inputs are never mutated
  CHECK(slurp(csv_in) == "row,col,count\nu1,a1,2\nu2,a1,1\nu2,a2,3\n");
}

TEST_CASE("exit codes distinguish usage errors from runtime failures") {
  // missing required flag: parse error
  CHECK(run_cli("train --model lda").exit_code == 2);
  // bad flag value caught before any work
  CHECK(run_cli("train --model lda --method ilr --k 3 --alpha 0.5 "
                "--beta 0.5 --holdout 1.5 --input " + toy_docword() +
                " --out /tmp/x.json")
            .exit_code == 2);
  // unknown method
  CHECK(run_cli("train --model lda --method vb --k 3 --beta 0.5 --input " +
                toy_docword() + " --out /tmp/x.json")
            .exit_code == 2);
  // nonexistent corpus: runtime failure
  const RunResult r = run_cli(
      "train --model lda --method ilr --k 3 --alpha 0.5 --beta 0.5 "
      "--input /nonexistent/corpus.docword --out /tmp/x.json");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error") != std::string::npos);
  // unreadable model file for eval
  CHECK(run_cli("eval --model-file /nonexistent.json --input " +
                toy_docword())
            .exit_code == 1);
}
