#pragma once

#include "fmdiff/forward_models.hpp"
#include "fmdiff/nn.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace fmdiff {

/// A batch of observations with one phi per row.
struct ObsBatch {
  Tensor obs; // [B, observation size]
  std::vector<Phi> phis;
};

struct DenoiserConfig {
  std::vector<Index> hidden{128, 128, 128};
  int time_features = 16;
  /// Adds a context-only network (no noise, no t) predicting a signal estimate.
  bool with_estimator = false;
  /// Render the estimate at the target pose and feed it to the denoiser. Render model only.
  bool condition_on_estimate = false;
  /// Per-cell learned feature channels rendered alongside the estimate.
  Index feature_channels = 4;
  std::vector<Index> estimator_hidden{128, 128};
  /// Initial scale of the output layers relative to a unit-variance init.
  double output_scale = 0.1;
  std::uint64_t seed = 0;
};

/// Conditional denoiser mapping (contexts, noisy target, t, phis) to signals.
///
/// Several context sets are mean-pooled block-wise, which makes the input
/// invariant to their order. The raw network output goes through the forward
/// model's `assemble`, using the first context set.
class Denoiser {
public:
  Denoiser(std::shared_ptr<const ForwardModel> model, int T, Index ctxt_obs_size, Index trgt_obs_size,
           DenoiserConfig config = {});

  const ForwardModel& model() const { return *model_; }
  std::shared_ptr<const ForwardModel> model_ptr() const { return model_; }
  const DenoiserConfig& config() const { return config_; }
  int T() const { return T_; }
  Index ctxt_obs_size() const { return ctxt_obs_size_; }
  Index trgt_obs_size() const { return trgt_obs_size_; }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Signal estimate [B, signal_size]. Rejects t outside 1..T.
  Tensor denoise(ParamView p, std::span<const ObsBatch> ctxts, const Tensor& noisy, std::span<const Phi> trgt_phis,
                 std::span<const int> t) const;
  Tensor denoise(std::span<const ObsBatch> ctxts, const Tensor& noisy, std::span<const Phi> trgt_phis,
                 std::span<const int> t) const {
    return denoise(params_.values(), ctxts, noisy, trgt_phis, t);
  }

  struct Estimate {
    Tensor signals;  // assembled, [B, signal_size]
    Tensor features; // [B, cells * K], empty unless rendering with features
  };
  Estimate estimate(ParamView p, std::span<const ObsBatch> ctxts, std::span<const Phi> trgt_phis) const;

  struct DetRender {
    Tensor image;    // render of the estimate at the target pose
    Tensor features; // feature image composited with the same weights
  };
  DetRender det_render(ParamView p, std::span<const ObsBatch> ctxts, std::span<const Phi> trgt_phis) const;

  /// Zero the rendered feature channels before they reach the denoiser.
  bool ablate_features = false;

private:
  struct Pooled {
    Tensor obs;
    Tensor enc;
  };
  Pooled pool_contexts(std::span<const ObsBatch> ctxts, Index batch) const;
  Tensor encode_phis(std::span<const Phi> phis) const;
  Tensor assemble(const Tensor& raw, std::span<const ObsBatch> ctxts) const;
  const RenderModel* render_model() const;

  std::shared_ptr<const ForwardModel> model_;
  int T_;
  Index ctxt_obs_size_;
  Index trgt_obs_size_;
  DenoiserConfig config_;
  ParameterStore params_;
  Mlp net_;
  std::optional<Mlp> estimator_;
};

} // namespace fmdiff
