#pragma once

#include "fmdiff/experiments.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fmdiff {

/// Identifies the report layout checked by validate_report.
inline constexpr const char* kReportSchema = "fmdiff-report/1";

struct RunReport {
  ojson json;
  std::filesystem::path dir;
  bool pass = false;
};

/// Runs one experiment and writes under `config.out_dir`: config.json,
/// metrics.csv (step,loss of the main curve), one metrics_<name>.csv per
/// further curve, report.json, images, checkpoint and optionally dataset.bin.
RunReport run(const ExperimentConfig& config);

/// Problems with a report's layout; empty when it conforms.
std::vector<std::string> validate_report(const ojson& report);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<double>& losses);

ExperimentConfig load_config(const std::filesystem::path& path);

} // namespace fmdiff
