#include "fmdiff/gradcheck.hpp"
#include "fmdiff/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace fmdiff;

namespace {

struct RunOptions {
  std::string config;
  std::string kind;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<long> steps;
};

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--kind", o.kind, "Experiment kind when no config is given");
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--steps", o.steps, "Training steps (also caps the deterministic baseline)");
}

ExperimentConfig resolve(const RunOptions& o, const std::string& fallback_kind) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
    if (!o.kind.empty() && o.kind != c.kind) throw std::invalid_argument("--kind " + o.kind + " contradicts the config's " + c.kind);
  } else {
    c = default_config(o.kind.empty() ? fallback_kind : o.kind);
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.steps) {
    c.train.steps = *o.steps;
    c.baseline.steps = std::min(c.baseline.steps, *o.steps);
  }
  return c;
}

int report_run(const RunReport& r) {
  std::cout << r.json.at("kind").get<std::string>() << " -> " << r.dir.string() << "\n";
  for (const auto& c : r.json.at("checks"))
    std::cout << "  " << (c.at("pass").get<bool>() ? "PASS " : "FAIL ") << c.at("name").get<std::string>() << "  "
              << c.at("statistic").dump() << " (threshold " << c.at("threshold").dump() << ")\n";
  if (r.json.at("status") == "failed") {
    std::cout << "run failed: " << r.json.at("error").get<std::string>() << "\n";
    return 2;
  }
  std::cout << (r.pass ? "all checks passed" : "some checks failed") << "\n";
  return r.pass ? 0 : 1;
}

Eigen::MatrixXd read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error(path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion through differentiable forward models at desk scale"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment and write its artifacts");
  add_run_flags(run_cmd, run_opts);

  std::uint64_t measure_seed = 0;
  std::string measure_out = "runs/measure-suite";
  auto* measures_cmd = app.add_subcommand("verify-measures", "Run the measure-theory property suite");
  measures_cmd->add_option("--seed", measure_seed, "Root seed");
  measures_cmd->add_option("--out", measure_out, "Output directory");

  std::uint64_t grad_seed = 0;
  int grad_points = 10;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Reverse mode against central differences");
  grad_cmd->add_option("--seed", grad_seed, "Root seed");
  grad_cmd->add_option("--points", grad_points, "Random points per op or model");

  std::string samples_path, oracle_path, compare_kind = "w1";
  std::uint64_t compare_seed = 0;
  auto* cmp_cmd = app.add_subcommand("compare", "Distance between samples and an oracle");
  cmp_cmd->add_option("--samples", samples_path, "CSV, one sample per row (labels for tv)")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--oracle", oracle_path, "CSV: oracle samples (w1) or one row of probabilities (tv)")
      ->required()
      ->check(CLI::ExistingFile);
  cmp_cmd->add_option("--kind", compare_kind, "w1 or tv")->check(CLI::IsMember({"w1", "tv"}));
  cmp_cmd->add_option("--seed", compare_seed, "Bootstrap seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (run_opts.config.empty() && run_opts.kind.empty()) throw std::invalid_argument("run needs --config or --kind");
      return report_run(run(resolve(run_opts, "")));
    }
    if (*measures_cmd) {
      ExperimentConfig c = default_config("measure-suite");
      c.seed = measure_seed;
      c.out_dir = measure_out;
      return report_run(run(c));
    }
    if (*grad_cmd) {
      auto results = op_gradient_suite(grad_seed, grad_points);
      const auto models = model_gradient_suite(grad_seed, grad_points);
      results.insert(results.end(), models.begin(), models.end());
      bool ok = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << "  points " << r.points << "  max rel " << r.max_rel_error
                  << "  max abs " << r.max_abs_error << "\n";
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
    if (*cmp_cmd) {
      const Eigen::MatrixXd samples = read_csv(samples_path), oracle = read_csv(oracle_path);
      Rng rng(compare_seed);
      PosteriorComparison cmp;
      if (compare_kind == "tv") {
        if (samples.cols() != 1 || oracle.rows() != 1) throw std::invalid_argument("tv needs one label column and one oracle row");
        std::vector<Index> labels;
        for (Index i = 0; i < samples.rows(); ++i) labels.push_back(static_cast<Index>(std::lround(samples(i, 0))));
        cmp = compare_posteriors(labels, oracle.row(0).transpose(), rng);
      } else {
        cmp = compare_posteriors(samples, oracle, rng);
      }
      std::cout << ojson{{"kind", compare_kind}, {"distance", cmp.distance}, {"stderr", cmp.stderr_}}.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
