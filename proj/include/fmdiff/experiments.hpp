#pragma once

#include "fmdiff/diffusion.hpp"
#include "fmdiff/image_io.hpp"
#include "fmdiff/measures.hpp"
#include "fmdiff/schedule.hpp"
#include "fmdiff/testbeds.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fmdiff {

using ojson = nlohmann::ordered_json;

struct ScheduleConfig {
  int T = 64;
  double beta_start = 1e-4;
  double beta_end = 0.15;
  ReverseStep reverse_step = ReverseStep::renoise;

  VarianceSchedule make() const { return make_linear_schedule(T, beta_start, beta_end); }
};

struct OptimConfig {
  long steps = 5000;
  Index batch_size = 64;
  AdamConfig adam{};
  double final_lr_fraction = 0.05;
};

struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";
  ScheduleConfig schedule;
  DenoiserConfig model;
  OptimConfig train;
  /// Deterministic baseline budget (toy-render, motion-warp only).
  OptimConfig baseline;
  double lambda = 1.0;
  double smoothness = 0.0;
  Index tuples = 20000;
  Index eval_samples = 200;
  bool write_dataset = false;
};

/// Kinds accepted by run_experiment.
const std::vector<std::string>& experiment_kinds();

/// Settings each kind was tuned with. Rejects unknown kinds.
ExperimentConfig default_config(std::string_view kind);

ojson to_json(const ExperimentConfig& config);
/// Fields missing from `j` take the defaults of its kind.
ExperimentConfig config_from_json(const ojson& j);

/// What one run produced, before anything is written to disk.
struct ExperimentOutput {
  /// Named loss curves; the first one is the run's metrics.csv.
  std::vector<std::pair<std::string, std::vector<double>>> curves;
  ojson statistics = ojson::object();
  std::vector<CheckResult> checks;
  std::vector<std::pair<std::string, Image>> images;
  std::optional<ParameterStore> checkpoint;
  std::optional<Dataset> dataset;
  bool failed = false;
  long failed_step = -1;
  std::string error;
};

/// generate -> train -> sample -> evaluate for `config.kind`. Divergence is
/// reported through `failed`, not thrown.
ExperimentOutput run_experiment(const ExperimentConfig& config);

struct PosteriorComparison {
  std::vector<double> distance; // per coordinate (continuous) or a single TV (discrete)
  std::vector<double> stderr_;  // bootstrap
};

/// W1 per coordinate between samples and the marginals of a Gaussian oracle, computed exactly.
PosteriorComparison compare_posteriors(const Eigen::MatrixXd& samples, const GaussianPosterior& oracle, Rng& rng,
                                       int resamples = 50);
/// W1 per coordinate between samples and oracle samples.
PosteriorComparison compare_posteriors(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& oracle_samples, Rng& rng,
                                       int resamples = 50);
/// TV between the empirical frequencies of `labels` and a probability vector.
PosteriorComparison compare_posteriors(std::span<const Index> labels, const Eigen::VectorXd& truth, Rng& rng,
                                       int resamples = 50);

/// Largest |forward(S, phi) - O| over the rows of a sample; 0 means bit-exact.
double structural_gap(const ForwardModel& model, const SampleResult& result, std::span<const Phi> phis);

} // namespace fmdiff
