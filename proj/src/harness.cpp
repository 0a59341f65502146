#include "fmdiff/harness.hpp"

#include "fmdiff/serialize.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fmdiff {

namespace fs = std::filesystem;

void write_metrics_csv(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, losses[i]);
    out << buf;
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return config_from_json(ojson::parse(in));
}

namespace {

void write_json(const fs::path& path, const ojson& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

} // namespace

RunReport run(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(config));

  const ExperimentOutput result = run_experiment(config);

  ojson curves = ojson::object();
  for (std::size_t i = 0; i < result.curves.size(); ++i) {
    const auto& [name, losses] = result.curves[i];
    const std::string file = i == 0 ? "metrics.csv" : "metrics_" + name + ".csv";
    write_metrics_csv(dir / file, losses);
    curves[name] = file;
  }
  if (result.curves.empty()) {
    write_metrics_csv(dir / "metrics.csv", {});
    curves["loss"] = "metrics.csv";
  }
  for (const auto& [name, image] : result.images) write_pnm(dir / name, image);
  if (result.checkpoint) write_checkpoint(dir / "checkpoint", *result.checkpoint);
  if (result.dataset) write_dataset(dir / "dataset.bin", *result.dataset, config.seed);

  bool pass = !result.failed;
  ojson checks = ojson::array();
  for (const CheckResult& c : result.checks) {
    checks.push_back({{"name", c.name}, {"statistic", c.statistic}, {"stderr", c.stderr_}, {"threshold", c.threshold}, {"pass", c.pass}});
    pass = pass && c.pass;
  }
  ojson report{{"schema", kReportSchema},
               {"kind", config.kind},
               {"seed", config.seed},
               {"status", result.failed ? "failed" : "ok"},
               {"failed_step", result.failed ? ojson(result.failed_step) : ojson(nullptr)},
               {"error", result.error},
               {"config", to_json(config)},
               {"loss_curves", curves},
               {"statistics", result.statistics},
               {"checks", checks},
               {"pass", pass},
               {"wall_clock_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  if (const auto problems = validate_report(report); !problems.empty())
    throw std::logic_error("report does not match its schema: " + problems.front());
  write_json(dir / "report.json", report);
  return {report, dir, pass};
}

std::vector<std::string> validate_report(const ojson& r) {
  std::vector<std::string> problems;
  // Non-finite doubles serialize as null.
  auto number_or_null = [](const ojson& v) { return v.is_number() || v.is_null(); };
  auto need = [&](const char* key, auto is_type, const char* type) {
    if (!r.contains(key)) problems.push_back(std::string("missing '") + key + "'");
    else if (!is_type(r.at(key))) problems.push_back(std::string("'") + key + "' is not " + type);
  };
  if (!r.is_object()) return {"report is not an object"};
  need("schema", [](const ojson& v) { return v.is_string() && v == kReportSchema; }, kReportSchema);
  need("kind", [](const ojson& v) { return v.is_string(); }, "a string");
  need("seed", [](const ojson& v) { return v.is_number_unsigned() || v.is_number_integer(); }, "an integer");
  need("status", [](const ojson& v) { return v == "ok" || v == "failed"; }, "'ok' or 'failed'");
  need("failed_step", [](const ojson& v) { return v.is_null() || v.is_number_integer(); }, "null or an integer");
  need("error", [](const ojson& v) { return v.is_string(); }, "a string");
  need("config", [](const ojson& v) { return v.is_object(); }, "an object");
  need("loss_curves", [](const ojson& v) { return v.is_object(); }, "an object");
  need("statistics", [](const ojson& v) { return v.is_object(); }, "an object");
  need("checks", [](const ojson& v) { return v.is_array(); }, "an array");
  need("pass", [](const ojson& v) { return v.is_boolean(); }, "a boolean");
  need("wall_clock_seconds", [](const ojson& v) { return v.is_number(); }, "a number");
  if (r.contains("checks") && r.at("checks").is_array())
    for (const auto& c : r.at("checks")) {
      const bool ok = c.is_object() && c.contains("name") && c.at("name").is_string() && c.contains("statistic") &&
                      number_or_null(c.at("statistic")) && c.contains("stderr") && number_or_null(c.at("stderr")) &&
                      c.contains("threshold") && c.at("threshold").is_number() && c.contains("pass") && c.at("pass").is_boolean();
      if (!ok) problems.push_back("malformed check entry " + c.dump());
    }
  if (r.contains("status") && r.contains("failed_step") && (r.at("status") == "failed") != r.at("failed_step").is_number_integer())
    problems.push_back("'failed_step' must be set exactly when status is 'failed'");
  return problems;
}

} // namespace fmdiff
