#include "fmdiff/diffusion.hpp"

#include <cmath>

namespace fmdiff {

namespace {

ObsBatch stack(std::span<const Eigen::VectorXd* const> obs, std::vector<Phi> phis) {
  const Index b = static_cast<Index>(obs.size());
  const Index m = b == 0 ? 0 : obs[0]->size();
  Eigen::ArrayXd d(b * m);
  for (Index i = 0; i < b; ++i) {
    if (obs[i]->size() != m) throw ShapeError("observations in one batch differ in size");
    d.segment(i * m, m) = obs[i]->array();
  }
  return {Tensor({b, m}, std::move(d)), std::move(phis)};
}

std::vector<Index> all_rows(const Dataset& data) {
  std::vector<Index> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
  return rows;
}

} // namespace

Batch make_batch(const Dataset& data, std::span<const Index> rows) {
  std::vector<const Eigen::VectorXd*> c, t, n;
  std::vector<Phi> cp, tp, np;
  bool novel = !rows.empty();
  for (Index r : rows) {
    const TrainingTuple& tu = data.at(r);
    c.push_back(&tu.ctxt_obs);
    cp.push_back(tu.ctxt_phi);
    t.push_back(&tu.trgt_obs);
    tp.push_back(tu.trgt_phi);
    novel = novel && tu.novel_obs.has_value();
    if (novel) {
      n.push_back(&*tu.novel_obs);
      np.push_back(*tu.novel_phi);
    }
  }
  Batch b{stack(c, std::move(cp)), stack(t, std::move(tp)), std::nullopt};
  if (novel) b.novel = stack(n, std::move(np));
  return b;
}

Batch make_batch(const Dataset& data) {
  const auto rows = all_rows(data);
  return make_batch(data, rows);
}

Tensor squared_error(const Tensor& prediction, const Tensor& target) {
  if (prediction.rank() != 2 || prediction.shape() != target.shape()) {
    throw ShapeError("squared_error: " + to_string(prediction.shape()) + " vs " + to_string(target.shape()));
  }
  return scale(sum(square(sub(prediction, target))), 1.0 / static_cast<double>(prediction.dim(0)));
}

Tensor motion_smoothness(const WarpModel& model, const Tensor& signals) {
  const Index w = model.width();
  const Tensor motion = slice(signals, 1, 3 * w, 4 * w);
  const Tensor diff = sub(slice(motion, 1, 1, w), slice(motion, 1, 0, w - 1));
  return scale(sum(square(diff)), 1.0 / static_cast<double>(signals.dim(0)));
}

namespace {

Losses combine(const Denoiser& den, const Batch& batch, const Tensor& signals, double lambda, double smoothness) {
  Losses out;
  out.signals = signals;
  out.trgt = squared_error(den.model().apply(signals, batch.trgt.phis), batch.trgt.obs);
  out.total = out.trgt;
  if (lambda != 0.0) {
    if (!batch.novel) throw std::invalid_argument("novel loss requested but the batch has no novel observations");
    out.novel = squared_error(den.model().apply(signals, batch.novel->phis), batch.novel->obs);
    out.total = add(out.total, scale(out.novel, lambda));
  }
  if (smoothness != 0.0) {
    const auto* warp = dynamic_cast<const WarpModel*>(&den.model());
    if (!warp) throw std::invalid_argument("motion smoothness needs the warp model");
    out.smooth = motion_smoothness(*warp, signals);
    out.total = add(out.total, scale(out.smooth, smoothness));
  }
  return out;
}

} // namespace

Losses diffusion_losses(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                        const VarianceSchedule& sched, double lambda, double smoothness) {
  const Index b = batch.size();
  if (static_cast<Index>(t.size()) != b) throw std::invalid_argument("one timestep per batch row required");
  if (noise.shape() != batch.trgt.obs.shape()) throw ShapeError("noise " + to_string(noise.shape()) + " vs target " + to_string(batch.trgt.obs.shape()));
  // q_sample takes one t; rows with different t are noised row by row.
  Eigen::ArrayXd noisy(batch.trgt.obs.numel());
  const Index m = batch.trgt.obs.dim(1);
  for (Index i = 0; i < b; ++i) {
    if (t[i] < 1 || t[i] > sched.T) throw std::out_of_range("timestep " + std::to_string(t[i]) + " outside 1.." + std::to_string(sched.T));
    const double a = sched.alpha_bar[t[i]];
    noisy.segment(i * m, m) = std::sqrt(a) * batch.trgt.obs.data().segment(i * m, m) + std::sqrt(1.0 - a) * noise.data().segment(i * m, m);
  }
  const std::vector<ObsBatch> ctxts{batch.ctxt};
  const Tensor signals = den.denoise(p, ctxts, Tensor(batch.trgt.obs.shape(), std::move(noisy)), batch.trgt.phis, t);
  return combine(den, batch, signals, lambda, smoothness);
}

Tensor loss_trgt(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                 const VarianceSchedule& sched) {
  return diffusion_losses(den, p, batch, t, noise, sched, 0.0).trgt;
}

Tensor loss_novel(const Denoiser& den, ParamView p, const Batch& batch, std::span<const int> t, const Tensor& noise,
                  const VarianceSchedule& sched) {
  return diffusion_losses(den, p, batch, t, noise, sched, 1.0).novel;
}

TrainingDiverged::TrainingDiverged(long step, double loss)
    : std::runtime_error("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")"), step_(step) {}

namespace {

template <typename LossFn>
TrainResult optimize(Denoiser& den, const Dataset& data, const TrainConfig& config, LossFn&& loss_fn) {
  TrainResult result;
  if (config.steps <= 0) return result;
  if (data.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  Adam adam(den.params(), config.adam);
  const Rng root(config.seed);
  result.losses.reserve(static_cast<std::size_t>(config.steps));
  for (long step = 0; step < config.steps; ++step) {
    Rng rng = root.split(static_cast<std::uint64_t>(step));
    std::vector<Index> rows(config.batch_size);
    for (auto& r : rows) r = static_cast<Index>(rng.below(data.size()));
    const Batch batch = make_batch(data, rows);

    Tape tape;
    const auto leaves = den.params().bind(tape);
    const Tensor loss = loss_fn(leaves, batch, rng);
    const double value = loss.item();
    if (!std::isfinite(value)) throw TrainingDiverged(step, value);
    const Gradients grads = tape.backward(loss);
    std::vector<Tensor> g;
    g.reserve(leaves.size());
    if (config.final_lr_fraction != 1.0) {
      const double progress = config.steps > 1 ? static_cast<double>(step) / static_cast<double>(config.steps - 1) : 0.0;
      adam.set_lr(config.adam.lr * (1.0 - progress * (1.0 - config.final_lr_fraction)));
    }
    for (const auto& leaf : leaves) g.push_back(grads[leaf]);
    adam.step(den.params(), g);
    result.losses.push_back(value);
  }
  return result;
}

} // namespace

TrainResult train(Denoiser& den, const Dataset& data, const VarianceSchedule& sched, const TrainConfig& config) {
  if (sched.T != den.T()) throw std::invalid_argument("schedule and denoiser disagree on T");
  return optimize(den, data, config, [&](ParamView p, const Batch& batch, Rng& rng) {
    std::vector<int> t(batch.size());
    for (auto& s : t) s = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
    const Tensor noise(batch.trgt.obs.shape(), rng.normal_array(batch.trgt.obs.numel()));
    return diffusion_losses(den, p, batch, t, noise, sched, config.lambda, config.smoothness).total;
  });
}

TrainResult train_deterministic(Denoiser& den, const Dataset& data, const TrainConfig& config) {
  return optimize(den, data, config, [&](ParamView p, const Batch& batch, Rng&) {
    const std::vector<ObsBatch> ctxts{batch.ctxt};
    const Tensor signals = den.estimate(p, ctxts, batch.trgt.phis).signals;
    return combine(den, batch, signals, config.lambda, config.smoothness).total;
  });
}

SampleResult sample(const Denoiser& den, const VarianceSchedule& sched, std::span<const ObsBatch> ctxts,
                    std::span<const Phi> trgt_phis, const SamplerConfig& config) {
  if (sched.T != den.T()) throw std::invalid_argument("schedule and denoiser disagree on T");
  const Index b = static_cast<Index>(trgt_phis.size());
  const Index m = den.trgt_obs_size();
  const Rng root(config.seed);
  Rng init = root.split(0);
  Tensor x({b, m}, init.normal_array(b * m));

  SampleResult out;
  if (config.keep_trajectory) out.trajectory.push_back(x);
  for (int t = sched.T; t >= 1; --t) {
    const std::vector<int> ts(b, t);
    const Tensor s = den.denoise(ctxts, x, trgt_phis, ts);
    const Tensor o_hat = den.model().apply(s, trgt_phis);
    Rng step_rng = root.split(static_cast<std::uint64_t>(t));
    const Tensor noise({b, m}, step_rng.normal_array(b * m));
    x = reverse_step(config.step, o_hat, x, t, noise, sched);
    if (config.keep_trajectory) out.trajectory.push_back(x);
    if (t == 1) out.signals = s;
  }
  out.observation = x;
  return out;
}

std::vector<SampleResult> sample_autoregressive(const Denoiser& den, const VarianceSchedule& sched, const ObsBatch& ctxt,
                                                std::span<const Phi> phi_list, const SamplerConfig& config) {
  std::vector<SampleResult> out;
  std::vector<ObsBatch> ctxts{ctxt};
  const std::size_t b = ctxt.phis.size();
  for (std::size_t k = 0; k < phi_list.size(); ++k) {
    SamplerConfig step = config;
    if (k > 0) step.seed = Rng(config.seed).split(1000 + k)();
    const std::vector<Phi> phis(b, phi_list[k]);
    out.push_back(sample(den, sched, ctxts, phis, step));
    if (k + 1 < phi_list.size()) {
      if (den.trgt_obs_size() != den.ctxt_obs_size()) throw std::invalid_argument("autoregressive sampling needs equal context and target sizes");
      ctxts.push_back({out.back().observation, phis});
    }
  }
  return out;
}

} // namespace fmdiff
