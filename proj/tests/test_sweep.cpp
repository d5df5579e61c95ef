// Apache License, Version 2.0, refer to LICENSE.txt

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "support/synthetic.hpp"
#include "topics/sweep.hpp"

using namespace topics;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("topics_sweep_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// small planted corpus on disk, shared by the plans below
std::string corpus_path() {
  static const std::string path = [] {
    const Corpus corpus = testsupport::planted_corpus(10, 12, 2, 30, 5);
    const fs::path p = temp_root() / "sweep_corpus.docword";
    save_uci_bow(corpus, p.string());
    return p.string();
  }();
  return path;
}

ExperimentPlan base_plan(const std::string& out_dir) {
  ExperimentPlan plan;
  plan.model = "lda";
  plan.methods = {MethodSpec::parse("cgs"), MethodSpec::parse("ilr")};
  plan.k = {2};
  plan.alpha = {0.5};
  plan.beta = {0.5};
  plan.epsilon = {1e-6};
  plan.trials = 1;
  plan.iters = 8;
  plan.corpus_path = corpus_path();
  plan.corpus_format = "uci";
  plan.holdout = 0.4;
  plan.seed = 1;
  plan.out_dir = (temp_root() / out_dir).string();
  return plan;
}

std::map<std::string, std::string> result_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "timings.csv") continue;  // wall clock, not deterministic
    files[name] = slurp(entry.path());
  }
  return files;
}

}  // namespace

TEST_CASE("method tokens parse and print consistently") {
  CHECK(MethodSpec::parse("cgs").token() == "cgs");
  CHECK(MethodSpec::parse("ilr").token() == "ilr");
  CHECK(MethodSpec::parse("replicated:8").replicas == 8);
  CHECK(MethodSpec::parse("replicated8").token() == "replicated8");
  CHECK_THROWS_AS(MethodSpec::parse("gibbs"), std::invalid_argument);
  CHECK_THROWS_AS(MethodSpec::parse("replicated:0"), std::invalid_argument);
}

TEST_CASE("plans round-trip through json and validate their axes") {
  const ExperimentPlan plan = base_plan("plan_roundtrip");
  const ExperimentPlan reparsed = ExperimentPlan::from_json(plan.to_json());
  CHECK(reparsed.to_json() == plan.to_json());

  nlohmann::json broken = plan.to_json();
  broken["methods"] = nlohmann::json::array();
  CHECK_THROWS_AS(ExperimentPlan::from_json(broken), std::invalid_argument);
  broken = plan.to_json();
  broken["grid"].erase("beta");
  CHECK_THROWS_AS(ExperimentPlan::from_json(broken), std::invalid_argument);
  broken = plan.to_json();
  broken["model"] = "plsa";
  CHECK_THROWS_AS(ExperimentPlan::from_json(broken), std::invalid_argument);
}

TEST_CASE("grid expansion crosses the axes in a fixed order") {
  ExperimentPlan plan = base_plan("plan_grid");
  plan.alpha = {0.01, 0.05, 0.10, 0.25, 0.50};
  plan.beta = {0.01, 0.05, 0.10, 0.25, 0.50};
  const auto configs = plan.expand_grid();
  REQUIRE(configs.size() == 25);
  CHECK(configs.front()["alpha"] == 0.01);
  CHECK(configs.front()["beta"] == 0.01);
  CHECK(configs.back()["alpha"] == 0.50);
  CHECK(configs.back()["beta"] == 0.50);
  // same config always hashes to the same cell name component
  CHECK(detail::hex64(detail::fnv1a64(configs[3].dump())) ==
        detail::hex64(detail::fnv1a64(configs[3].dump())));
}

TEST_CASE("run_plan produces one monotone trace per cell plus a manifest") {
  const ExperimentPlan plan = base_plan("plan_basic");
  const SweepResult result = run_plan(plan);
  REQUIRE(result.cells.size() == 2);
  for (const CellResult& cell : result.cells) {
    REQUIRE_FALSE(cell.failed);
    REQUIRE_FALSE(cell.trace.points.empty());
    for (std::size_t i = 1; i < cell.trace.points.size(); ++i)
      CHECK(cell.trace.points[i].first > cell.trace.points[i - 1].first);
    CHECK(cell.final_perplexity == cell.trace.points.back().second);
    CHECK(fs::exists(fs::path(plan.out_dir) / (cell.key + ".csv")));
  }
  REQUIRE(fs::exists(fs::path(plan.out_dir) / "manifest.json"));
  nlohmann::json manifest;
  std::ifstream manifest_in(fs::path(plan.out_dir) / "manifest.json");
  manifest_in >> manifest;
  CHECK(manifest["cells"].size() == 2);
  for (const auto& [key, entry] : manifest["cells"].items()) {
    CHECK(entry["status"] == "ok");
    CHECK(entry.contains("train_increase_at"));
  }
}

TEST_CASE("rerunning a completed plan recomputes nothing") {
  const ExperimentPlan plan = base_plan("plan_idempotent");
  const SweepResult first = run_plan(plan);
  const SweepResult second = run_plan(plan);
  REQUIRE(second.cells.size() == first.cells.size());
  for (std::size_t i = 0; i < first.cells.size(); ++i) {
    CHECK_FALSE(first.cells[i].from_cache);
    CHECK(second.cells[i].from_cache);
    CHECK(second.cells[i].final_perplexity == first.cells[i].final_perplexity);
    CHECK(second.cells[i].converged_at == first.cells[i].converged_at);
    REQUIRE(second.cells[i].trace.points.size() ==
            first.cells[i].trace.points.size());
    for (std::size_t p = 0; p < first.cells[i].trace.points.size(); ++p)
      CHECK(second.cells[i].trace.points[p] ==
            first.cells[i].trace.points[p]);
  }
}

TEST_CASE("a resumed sweep reproduces the uninterrupted output bytes") {
  ExperimentPlan full = base_plan("plan_full");
  full.trials = 2;
  run_plan(full);

  // simulate an interrupted run: only the first completed cell survives
  ExperimentPlan partial = base_plan("plan_resumed");
  partial.trials = 2;
  fs::create_directories(partial.out_dir);
  nlohmann::json manifest;
  std::ifstream manifest_in(fs::path(full.out_dir) / "manifest.json");
  manifest_in >> manifest;
  nlohmann::json pruned{{"plan", partial.to_json()},
                        {"cells", nlohmann::json::object()}};
  const std::string kept = manifest["cells"].begin().key();
  pruned["cells"][kept] = manifest["cells"][kept];
  std::ofstream(fs::path(partial.out_dir) / "manifest.json")
      << pruned.dump(2) << "\n";
  fs::copy_file(fs::path(full.out_dir) / (kept + ".csv"),
                fs::path(partial.out_dir) / (kept + ".csv"));

  run_plan(partial);
  const auto full_files = result_files(full.out_dir);
  auto resumed_files = result_files(partial.out_dir);
  // the manifests embed their own plan (same content, different out_dir)
  REQUIRE(full_files.size() == resumed_files.size());
  for (const auto& [name, content] : full_files) {
    REQUIRE(resumed_files.count(name) == 1);
    if (name == "manifest.json") {
      nlohmann::json a = nlohmann::json::parse(content);
      nlohmann::json b = nlohmann::json::parse(resumed_files[name]);
      a["plan"].erase("out_dir");
      b["plan"].erase("out_dir");
      CHECK(a == b);
    } else {
      CHECK(content == resumed_files[name]);
    }
  }
}

TEST_CASE("a mismatched plan cannot reuse an output directory") {
  const ExperimentPlan plan = base_plan("plan_mismatch");
  run_plan(plan);
  ExperimentPlan other = plan;
  other.alpha = {0.25};
  CHECK_THROWS_WITH(run_plan(other),
                    Catch::Matchers::ContainsSubstring("different plan"));
}

TEST_CASE("failed cells are recorded and the sweep continues") {
  ExperimentPlan plan = base_plan("plan_failures");
  plan.methods = {MethodSpec::parse("cgs")};
  plan.k = {0, 2};  // k = 0 violates the hyperparameter contract
  const SweepResult result = run_plan(plan);
  REQUIRE(result.cells.size() == 2);
  std::size_t failed = 0, ok = 0;
  for (const CellResult& cell : result.cells) {
    if (cell.failed) {
      ++failed;
      CHECK_FALSE(cell.error.empty());
    } else {
      ++ok;
    }
  }
  CHECK(failed == 1);
  CHECK(ok == 1);
}

TEST_CASE("parallel workers produce the same bytes as a serial run") {
  ExperimentPlan serial = base_plan("plan_serial");
  serial.trials = 2;
  ExperimentPlan parallel = base_plan("plan_parallel");
  parallel.trials = 2;
  run_plan(serial, 1);
  run_plan(parallel, 2);
  const auto serial_files = result_files(serial.out_dir);
  auto parallel_files = result_files(parallel.out_dir);
  REQUIRE(serial_files.size() == parallel_files.size());
  for (const auto& [name, content] : serial_files) {
    if (name == "manifest.json") continue;  // embeds out_dir
    REQUIRE(parallel_files.count(name) == 1);
    CHECK(content == parallel_files[name]);
  }
}

TEST_CASE("pointwise mean traces average over trials") {
  ExperimentPlan plan = base_plan("plan_meantrace");
  plan.trials = 2;
  const SweepResult result = run_plan(plan);
  const auto configs = plan.expand_grid();
  const PerplexityTrace mean = result.mean_trace(configs[0], "cgs");
  REQUIRE_FALSE(mean.points.empty());
  // recompute by hand from the two cgs cells
  std::map<std::size_t, std::pair<double, int>> acc;
  for (const CellResult& cell : result.cells) {
    if (cell.method != "cgs") continue;
    for (const auto& [iter, value] : cell.trace.points) {
      acc[iter].first += value;
      acc[iter].second += 1;
    }
  }
  for (const auto& [iter, value] : mean.points) {
    CHECK(acc[iter].second == 2);
    CHECK(value == Catch::Approx(acc[iter].first / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("sensitivity table recomputes spreads from the grid cells") {
  ExperimentPlan plan = base_plan("plan_sensitivity");
  plan.alpha = {0.05, 0.5};
  plan.beta = {0.05, 0.5};
  plan.iters = 6;
  const SweepResult result = run_plan(plan);
  const SensitivityTable table = sensitivity_table(result);
  REQUIRE(table.alphas == std::vector<double>{0.05, 0.5});
  REQUIRE(table.betas == std::vector<double>{0.05, 0.5});
  REQUIRE(table.per_method.size() == 2);
  for (std::size_t m = 0; m < table.per_method.size(); ++m) {
    const auto& [method, grid] = table.per_method[m];
    double lo = grid(0, 0), hi = grid(0, 0);
    for (double x : grid.data()) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(table.spreads[m].first == method);
    CHECK(table.spreads[m].second == Catch::Approx(hi - lo).epsilon(1e-15));
  }

  const fs::path csv = fs::path(plan.out_dir) / "sens.csv";
  save_sensitivity_csv(table, csv.string());
  const std::string text = slurp(csv);
  CHECK(text.find("method,cgs") != std::string::npos);
  CHECK(text.find("method,spread") != std::string::npos);
}

TEST_CASE("single-cell grids have zero spread") {
  ExperimentPlan plan = base_plan("plan_singlecell");
  plan.iters = 5;
  const SweepResult result = run_plan(plan);
  const SensitivityTable table = sensitivity_table(result);
  for (const auto& [method, spread] : table.spreads)
    CHECK(spread == 0.0);
}

TEST_CASE("replication study mean tv matches the one-draw expectation") {
  const Corpus corpus = testsupport::planted_corpus(6, 10, 2, 20, 8);
  LdaHyper hyper{.k = 4, .alpha = 0.5, .beta = 0.5, .seed = 3};
  const std::vector<std::uint64_t> r_list{1, 10, 100, 100000};
  const ReplicationStudy study =
      replication_convergence_study(corpus, hyper, r_list, 400);
  REQUIRE(study.r_values == r_list);
  // R=1: expected TV of a one-hot draw against kappa is 1 - sum kappa^2
  CHECK(study.mean_tv[0] ==
        Catch::Approx(study.analytic_tv_r1).margin(0.02));
  // monotone improvement and near-exactness at large R
  CHECK(study.mean_tv[3] < study.mean_tv[1]);
  CHECK(study.mean_tv[3] < 0.01);

  CHECK_THROWS_AS(replication_convergence_study(
                      corpus, hyper, std::vector<std::uint64_t>{10, 1}, 10),
                  std::invalid_argument);
}

TEST_CASE("degenerate one-hot kappa has zero tv at every replica count") {
  const std::vector<double> one_hot{0.0, 1.0, 0.0};
  std::mt19937_64 rng = seeded_rng(4);
  std::vector<double> hist(3);
  for (std::uint64_t r : {1ull, 7ull, 1000ull}) {
    multinomial_histogram(one_hot, r, rng, hist);
    CHECK(total_variation(hist, one_hot) == 0.0);
  }
}
