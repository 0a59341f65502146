#pragma once

#include "fmdiff/denoiser.hpp"
#include "fmdiff/schedule.hpp"

#include <optional>
#include <stdexcept>
#include <vector>

namespace fmdiff {

/// Observations of one signal. `signal` is ground truth kept for evaluation;
/// training never reads it.
struct TrainingTuple {
  Eigen::VectorXd ctxt_obs;
  Phi ctxt_phi;
  Eigen::VectorXd trgt_obs;
  Phi trgt_phi;
  std::optional<Eigen::VectorXd> novel_obs;
  std::optional<Phi> novel_phi;
  Eigen::VectorXd signal;
};

using Dataset = std::vector<TrainingTuple>;

/// Stacked rows of several tuples.
struct Batch {
  ObsBatch ctxt;
  ObsBatch trgt;
  std::optional<ObsBatch> novel;

  Index size() const { return trgt.obs.numel() == 0 ? 0 : trgt.obs.dim(0); }
};

Batch make_batch(const Dataset& data, std::span<const Index> rows);
Batch make_batch(const Dataset& data);

/// Sum of squared errors per row, averaged over rows.
Tensor squared_error(const Tensor& prediction, const Tensor& target);

/// Squared first differences of the motion channel of warp signals, averaged over rows.
Tensor motion_smoothness(const WarpModel& model, const Tensor& signals);

struct Losses {
  Tensor trgt;
  Tensor novel;  // empty when lambda == 0 or no novel view
  Tensor smooth; // empty when the weight is 0
  Tensor total;
  Tensor signals;
};

/// Both losses share one denoiser output computed from q_sample(O_trgt, t, noise).
Losses diffusion_losses(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                        const VarianceSchedule& sched, double lambda, double smoothness = 0.0);

Tensor loss_trgt(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                 const VarianceSchedule& sched);
/// Rejects batches without novel observations.
Tensor loss_novel(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                  const VarianceSchedule& sched);

struct TrainConfig {
  long steps = 20000;
  Index batch_size = 64;
  double lambda = 1.0;
  double smoothness = 0.0;
  AdamConfig adam{};
  /// Learning rate decays linearly to adam.lr * final_lr_fraction at the last step.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> losses;
};

/// Raised when the loss stops being finite.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(long step, double loss);
  long step() const { return step_; }

private:
  long step_;
};

/// Adam on loss_trgt + lambda * loss_novel (+ smoothness), updating den.params() in place.
TrainResult train(Denoiser& den, const Dataset& data, const VarianceSchedule& sched, const TrainConfig& config);

/// Trains the context-only estimator with the same losses at zero noise.
TrainResult train_deterministic(Denoiser& den, const Dataset& data, const TrainConfig& config);

struct SamplerConfig {
  ReverseStep step = ReverseStep::renoise;
  std::uint64_t seed = 0;
  bool keep_trajectory = false;
};

struct SampleResult {
  Tensor signals;                  // [B, signal_size]
  Tensor observation;              // O_0 = forward(signals, phi_trgt)
  std::vector<Tensor> trajectory;  // O_T .. O_0 when requested
};

/// One reverse chain per row, each conditioned on its own context row(s).
SampleResult sample(const Denoiser& den, const VarianceSchedule& sched, std::span<const ObsBatch> ctxts,
                    std::span<const Phi> trgt_phis, const SamplerConfig& config);

/// Samples each phi in turn (applied to every row) and folds the finished
/// observation into the context set. Step 0 uses the config seed unchanged.
std::vector<SampleResult> sample_autoregressive(const Denoiser& den, const VarianceSchedule& sched, const ObsBatch& ctxt,
                                                std::span<const Phi> phi_list, const SamplerConfig& config);

} // namespace fmdiff
