// nlueval command-line front end.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nlueval/harness.hpp"
#include "nlueval/http_backend.hpp"

namespace {

using namespace nlueval;

std::unique_ptr<eval::Backend> make_backend(const harness::ModelConfig& m) {
  if (m.backend == "http") {
    eval::BackendProfile p{m.id, m.generative, false, std::nullopt};
    return std::make_unique<eval::HttpBackend>(std::move(p), eval::HttpOptions{m.endpoint, m.api_key_env});
  }
  return harness::make_mock_backend(m);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot NLU benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> models, datasets, languages;
  std::string results_dir = "results";
  std::string out_dir = "out";
  std::string input;
  std::string matrix_path = "out/matrix.csv";
  double alpha = rank::kDefaultAlpha;

  auto* bench = app.add_subcommand("benchmark", "Evaluate configured models on configured datasets");
  bench->add_option("-c,--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  bench->add_option("-m,--model", models, "Only these model ids");
  bench->add_option("-d,--dataset", datasets, "Only these dataset ids");

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("-r,--results", results_dir, "Results directory");
    cmd->add_option("-a,--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  };
  auto* agg = app.add_subcommand("aggregate", "Rank scores, traces and leaderboards from results");
  common(agg);
  agg->add_option("-o,--out", out_dir, "Output directory");
  auto* board = app.add_subcommand("leaderboard", "Per-language leaderboards");
  common(board);
  board->add_option("-o,--out", out_dir, "Output directory");
  board->add_option("-l,--language", languages, "Only these languages");
  auto* analyze = app.add_subcommand("analyze", "Correlate the generative flag with task performance");
  common(analyze);
  analyze->add_option("-o,--out", out_dir, "Output directory");
  auto* import = app.add_subcommand("import-scores", "Add external score vectors to the results");
  import->add_option("input", input, "Line-delimited score vectors")->required()->check(CLI::ExistingFile);
  import->add_option("-r,--results", results_dir, "Results directory");
  auto* matrix = app.add_subcommand("export-matrix", "Write the model x dataset mean-score matrix");
  matrix->add_option("-r,--results", results_dir, "Results directory");
  matrix->add_option("-o,--out", matrix_path, "CSV file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) {
      const auto cfg = harness::load_config(config_path);
      const auto summary = harness::run_benchmarks(cfg, make_backend, models, datasets);
      print_warnings(summary.log);
      std::cout << summary.cells << " (model, dataset) runs written to " << cfg.results_dir.string() << '\n';
      return summary.complete ? 0 : 3;
    }
    if (agg->parsed()) {
      print_warnings(harness::aggregate(results_dir, out_dir, alpha));
    } else if (board->parsed()) {
      harness::leaderboard(results_dir, out_dir, alpha, languages);
    } else if (analyze->parsed()) {
      const auto report = harness::analyze(results_dir, out_dir, alpha);
      std::cout << harness::to_json(report).dump(2) << '\n';
    } else if (import->parsed()) {
      std::cout << harness::import_scores(input, results_dir) << " score vectors imported\n";
    } else if (matrix->parsed()) {
      harness::export_matrix(results_dir, matrix_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
