#include "fmdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fmdiff {

std::string_view to_string(ReverseStep step) {
  switch (step) {
  case ReverseStep::renoise: return "renoise";
  case ReverseStep::ddpm_posterior: return "ddpm-posterior";
  }
  return "unknown";
}

ReverseStep reverse_step_from_string(std::string_view name) {
  if (name == "renoise") return ReverseStep::renoise;
  if (name == "ddpm-posterior") return ReverseStep::ddpm_posterior;
  throw std::invalid_argument("unknown reverse step '" + std::string(name) + "'");
}

VarianceSchedule make_schedule(const Eigen::ArrayXd& betas) {
  if (betas.size() == 0) throw std::invalid_argument("schedule needs at least one step");
  if ((betas <= 0.0).any() || (betas >= 1.0).any()) throw std::invalid_argument("betas must lie in (0, 1)");
  VarianceSchedule s;
  s.T = static_cast<int>(betas.size());
  s.beta = betas;
  s.alpha_bar.resize(s.T + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= s.T; ++t) s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - betas[t - 1]);
  s.C = s.alpha_bar.sqrt();
  s.beta_hat = 1.0 - s.alpha_bar;
  return s;
}

VarianceSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T <= 0) throw std::invalid_argument("schedule step count must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("linear schedule needs 0 < beta_start <= beta_end < 1");
  }
  Eigen::ArrayXd betas(T);
  if (T == 1) {
    betas[0] = beta_start;
  } else {
    for (int i = 0; i < T; ++i) betas[i] = beta_start + (beta_end - beta_start) * i / (T - 1);
  }
  return make_schedule(betas);
}

namespace {
void check_step(int t, int lo, int hi, const char* what) {
  if (t < lo || t > hi) {
    throw std::out_of_range(std::string(what) + ": step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
  }
}
} // namespace

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const VarianceSchedule& sched) {
  check_step(t, 1, sched.T, "q_sample");
  if (x0.shape() != noise.shape()) throw ShapeError("q_sample: noise shape " + to_string(noise.shape()) + " vs " + to_string(x0.shape()));
  return std::sqrt(sched.alpha_bar[t]) * x0 + std::sqrt(1.0 - sched.alpha_bar[t]) * noise;
}

Tensor renoise(const Tensor& o_hat, int t, const Tensor& noise, const VarianceSchedule& sched) {
  check_step(t, 0, sched.T - 1, "renoise");
  if (o_hat.shape() != noise.shape()) throw ShapeError("renoise: noise shape " + to_string(noise.shape()) + " vs " + to_string(o_hat.shape()));
  if (t == 0) return o_hat;
  return sched.C[t] * o_hat + std::sqrt(sched.beta_hat[t]) * noise;
}

Tensor ddpm_posterior_step(const Tensor& o_hat, const Tensor& x_t, int t, const Tensor& noise,
                           const VarianceSchedule& sched) {
  check_step(t, 1, sched.T, "ddpm_posterior_step");
  if (t == 1) return o_hat;
  const double beta = sched.beta_at(t);
  const double ab = sched.alpha_bar[t];
  const double ab_prev = sched.alpha_bar[t - 1];
  const double c_clean = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double c_noisy = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
  const double var = (1.0 - ab_prev) / (1.0 - ab) * beta;
  return c_clean * o_hat + c_noisy * x_t + std::sqrt(var) * noise;
}

Tensor reverse_step(ReverseStep kind, const Tensor& o_hat, const Tensor& x_t, int t, const Tensor& noise,
                    const VarianceSchedule& sched) {
  switch (kind) {
  case ReverseStep::renoise: return renoise(o_hat, t - 1, noise, sched);
  case ReverseStep::ddpm_posterior: return ddpm_posterior_step(o_hat, x_t, t, noise, sched);
  }
  throw std::logic_error("unhandled reverse step");
}

} // namespace fmdiff
