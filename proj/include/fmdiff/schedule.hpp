#pragma once

#include "fmdiff/tensor.hpp"

#include <string_view>

namespace fmdiff {

/// How the reverse process moves from step t to t-1 once the clean
/// observation estimate is known.
enum class ReverseStep {
  /// Re-noise the clean estimate to the forward marginal at t-1:
  /// x_{t-1} ~ N(C[t-1] * O_hat, beta_hat[t-1] I).
  renoise,
  /// DDPM posterior q(x_{t-1} | x_t, x_0 = O_hat).
  ddpm_posterior,
};

std::string_view to_string(ReverseStep step);
ReverseStep reverse_step_from_string(std::string_view name);

/// beta[s-1] holds beta_s for s = 1..T. The derived arrays have T+1 entries
/// indexed by step, with alpha_bar[0] = 1.
struct VarianceSchedule {
  int T = 0;
  Eigen::ArrayXd beta;
  Eigen::ArrayXd alpha_bar;
  Eigen::ArrayXd C;
  Eigen::ArrayXd beta_hat;

  double beta_at(int t) const { return beta[t - 1]; }
};

VarianceSchedule make_schedule(const Eigen::ArrayXd& betas);
VarianceSchedule make_linear_schedule(int T, double beta_start, double beta_end);

/// sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) noise, for 1 <= t <= T.
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const VarianceSchedule& sched);

/// C[t] O_hat + sqrt(beta_hat[t]) noise, for 0 <= t <= T-1. Returns O_hat itself at t = 0.
Tensor renoise(const Tensor& o_hat, int t, const Tensor& noise, const VarianceSchedule& sched);

/// Sample of q(x_{t-1} | x_t, x_0 = o_hat) for 1 <= t <= T. Returns o_hat itself at t = 1.
Tensor ddpm_posterior_step(const Tensor& o_hat, const Tensor& x_t, int t, const Tensor& noise,
                           const VarianceSchedule& sched);

/// One reverse transition t -> t-1 under the chosen convention.
Tensor reverse_step(ReverseStep kind, const Tensor& o_hat, const Tensor& x_t, int t, const Tensor& noise,
                    const VarianceSchedule& sched);

} // namespace fmdiff
