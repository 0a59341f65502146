// Acceptance gate: runs each criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is non-zero if any criterion fails.

#include "fmdiff/gradcheck.hpp"
#include "fmdiff/harness.hpp"
#include "fmdiff/stats.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace fmdiff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = op_gradient_suite(0, 10, 1e-5);
  const std::size_t n_ops = results.size();
  const auto models = model_gradient_suite(0, 10, 1e-4);
  results.insert(results.end(), models.begin(), models.end());
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 60.0;
  double worst_op = 0.0, worst_model = 0.0;
  std::string failed;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    ok = ok && r.pass && r.points == 10;
    if (!r.pass) failed += " " + r.name;
    (i < n_ops ? worst_op : worst_model) = std::max(i < n_ops ? worst_op : worst_model, r.max_rel_error);
  }
  return {ok, std::to_string(n_ops) + " ops, " + std::to_string(models.size()) + " models; worst rel " + fmt(worst_op) +
                  " (ops), " + fmt(worst_model) + " (models); " + fmt(elapsed, 3) + " s" +
                  (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome noise_matching() {
  const auto t0 = std::chrono::steady_clock::now();
  const VarianceSchedule s = default_config("linear-gaussian").schedule.make();
  const Index n = 10000;
  Rng rng(2);
  bool ok = true;
  std::string detail;
  for (int t : {1, s.T / 2, s.T - 1}) {
    const Tensor x0 = Tensor::full({n}, 0.7);
    const Tensor a = renoise(x0, t, Tensor({n}, rng.normal_array(n)), s);
    const Tensor b = q_sample(x0, t, Tensor({n}, rng.normal_array(n)), s);
    const std::vector<double> va(a.data().begin(), a.data().end()), vb(b.data().begin(), b.data().end());
    const PermutationTest test = energy_permutation_test_1d(va, vb, 200, 0.01, rng);
    ok = ok && !test.reject;
    detail += "t=" + std::to_string(t) + " p=" + fmt(test.p_value, 3) + "; ";
  }
  const double elapsed = seconds_since(t0);
  return {ok && elapsed < 60.0, detail + fmt(elapsed, 3) + " s"};
}

Outcome structural_invariant() {
  const GeneratorWorld gen;
  struct Case {
    std::string name;
    const World* world;
    PoseRoles roles;
  };
  const RenderWorld render_world;
  const MotionWorld motion_world;
  const std::vector<Case> cases{{"render", &render_world, RenderWorld::roles()},
                                {"warp", &motion_world, MotionWorld::roles()},
                                {"generator", &gen, gen.roles()}};
  const VarianceSchedule sched = default_config("toy-render").schedule.make();
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const Dataset data = generate_tuples(*c.world, 100, 3, c.roles);
    const Batch b = make_batch(data);
    DenoiserConfig cfg;
    cfg.seed = 5;
    const Denoiser den(c.world->model(), sched.T, b.ctxt.obs.dim(1), b.trgt.obs.dim(1), cfg);
    const std::vector<ObsBatch> ctxts{b.ctxt};
    double gap = 0.0;
    for (ReverseStep step : {ReverseStep::renoise, ReverseStep::ddpm_posterior}) {
      const SampleResult r = sample(den, sched, ctxts, b.trgt.phis, {step, 11, false});
      const Tensor o = c.world->model()->apply(r.signals, b.trgt.phis);
      const bool exact = o.shape() == r.observation.shape() && (o.data() == r.observation.data()).all();
      ok = ok && exact && r.signals.dim(0) == 100;
      gap = std::max(gap, structural_gap(*c.world->model(), r, b.trgt.phis));
    }
    detail += c.name + " max|forward(S)-O|=" + fmt(gap) + "; ";
  }
  return {ok, detail + "100 samples per model, both reverse steps"};
}

Outcome experiment(const std::string& kind, const fs::path& work, double budget_seconds, std::uint64_t seed,
                   bool seed_given) {
  ExperimentConfig c = default_config(kind);
  if (seed_given) c.seed = seed;
  c.out_dir = (work / kind).string();
  const RunReport r = run(c);
  const double wall = r.json.at("wall_clock_seconds").get<double>();
  std::string detail;
  for (const auto& chk : r.json.at("checks")) {
    detail += chk.at("name").get<std::string>() + "=" + chk.at("statistic").dump() + (chk.at("pass").get<bool>() ? "" : " (FAIL)") + "; ";
  }
  if (r.json.at("status") == "failed") detail += "run failed: " + r.json.at("error").get<std::string>() + "; ";
  detail += "seed " + std::to_string(c.seed) + ", " + fmt(wall, 4) + " s";
  return {r.pass && wall < budget_seconds, detail};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome reproducibility(const fs::path& work, const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found; pass --cli"};
  bool ok = true;
  std::string detail;
  for (const auto& kind : experiment_kinds()) {
    // Short budgets: the contract concerns byte identity, not quality.
    ExperimentConfig c = default_config(kind);
    c.train.steps = std::min<long>(c.train.steps, 60);
    c.baseline.steps = std::min<long>(c.baseline.steps, 30);
    c.tuples = std::min<Index>(c.tuples, 2000);
    c.eval_samples = std::min<Index>(c.eval_samples, kind == "measure-suite" ? 20000 : 40);
    c.seed = 17;
    const fs::path first = work / "repro" / kind / "first";
    const fs::path second = work / "repro" / kind / "second";
    fs::remove_all(first);
    fs::remove_all(second);
    fs::create_directories(first.parent_path());
    const fs::path seed_config = first.parent_path() / "short.json";
    std::ofstream(seed_config) << to_json(c).dump(2) << "\n";

    const int a = shell(cli + " run --config " + seed_config.string() + " --out " + first.string() + " > /dev/null");
    const int b = shell(cli + " run --config " + (first / "config.json").string() + " --out " + second.string() + " > /dev/null");
    const std::string ma = slurp(first / "metrics.csv");
    bool same = a <= 1 && b <= 1 && !ma.empty() && ma == slurp(second / "metrics.csv");
    for (const auto& entry : fs::directory_iterator(first)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("metrics", 0) == 0) same = same && slurp(entry.path()) == slurp(second / name);
    }
    const ojson ra = ojson::parse(slurp(first / "report.json"), nullptr, false);
    const ojson rb = ojson::parse(slurp(second / "report.json"), nullptr, false);
    same = same && !ra.is_discarded() && !rb.is_discarded() && ra.at("statistics") == rb.at("statistics");
    ok = ok && same;
    detail += kind + (same ? " identical" : " DIFFERS") + "; ";
  }
  return {ok, detail};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_runs";
  std::string cli;
  std::vector<int> only;
  std::uint64_t seed = 0;
  app.add_option("--work", work, "Directory for run artifacts");
  app.add_option("--cli", cli, "Path to the fmdiff binary (criterion 10)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed of the trained experiments (4-6, 8, 9)");
  CLI11_PARSE(app, argc, argv);
  const bool seed_given = seed_opt->count() > 0;
  const fs::path root(work);
  fs::create_directories(root);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "schedule noise matching", noise_matching},
      {3, "sampling structural invariant", structural_invariant},
      {4, "linear-Gaussian posterior recovery", [&] { return experiment("linear-gaussian", root, 600, seed, seed_given); }},
      {5, "discrete posterior recovery", [&] { return experiment("discrete-prop1", root, 600, seed, seed_given); }},
      {6, "novel-view loss effect", [&] { return experiment("novel-loss", root, 1e9, seed, seed_given); }},
      // The suite is statistical; seed 1 is the documented acceptance seed.
      {7, "measure suite", [&] { return experiment("measure-suite", root, 120, 1, true); }},
      {8, "toy-render conditional diversity", [&] { return experiment("toy-render", root, 1800, seed, seed_given); }},
      {9, "motion-warp collapse contrast", [&] { return experiment("motion-warp", root, 1e9, seed, seed_given); }},
      {10, "end-to-end reproducibility", [&] { return reproducibility(root, cli); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << o.detail << "]"
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
