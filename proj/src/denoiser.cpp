#include "fmdiff/denoiser.hpp"

#include <stdexcept>

namespace fmdiff {

Denoiser::Denoiser(std::shared_ptr<const ForwardModel> model, int T, Index ctxt_obs_size, Index trgt_obs_size,
                   DenoiserConfig config)
    : model_(std::move(model)), T_(T), ctxt_obs_size_(ctxt_obs_size), trgt_obs_size_(trgt_obs_size), config_(std::move(config)) {
  if (!model_) throw std::invalid_argument("denoiser needs a forward model");
  if (T_ < 1) throw std::invalid_argument("denoiser needs T >= 1");
  if (config_.condition_on_estimate) {
    if (!render_model()) throw std::invalid_argument("estimate conditioning requires the render model");
    config_.with_estimator = true;
  }
  Rng rng(config_.seed);
  const Index enc = model_->encoded_phi_size();
  const Index out = model_->predicted_size();

  Index in = ctxt_obs_size_ + trgt_obs_size_ + 2 * enc + config_.time_features;
  if (config_.condition_on_estimate) {
    in += trgt_obs_size_;
    if (config_.feature_channels > 0) in += render_model()->config().image_width * config_.feature_channels;
  }
  net_ = make_mlp(params_, "denoiser", in, config_.hidden, out, rng, config_.output_scale);

  if (config_.with_estimator) {
    Index est_out = out;
    if (render_model() && config_.feature_channels > 0) est_out += render_model()->cells() * config_.feature_channels;
    Rng est_rng = rng.split(1);
    estimator_ = make_mlp(params_, "estimator", ctxt_obs_size_ + 2 * enc, config_.estimator_hidden, est_out, est_rng, config_.output_scale);
  }
}

const RenderModel* Denoiser::render_model() const { return dynamic_cast<const RenderModel*>(model_.get()); }

Tensor Denoiser::encode_phis(std::span<const Phi> phis) const {
  const Index enc = model_->encoded_phi_size();
  Eigen::ArrayXd d(static_cast<Index>(phis.size()) * enc);
  for (std::size_t i = 0; i < phis.size(); ++i) d.segment(static_cast<Index>(i) * enc, enc) = model_->encode_phi(phis[i]).array();
  return Tensor({static_cast<Index>(phis.size()), enc}, std::move(d));
}

Denoiser::Pooled Denoiser::pool_contexts(std::span<const ObsBatch> ctxts, Index batch) const {
  if (ctxts.empty()) throw std::invalid_argument("denoiser needs at least one context set");
  Tensor obs, enc;
  for (const auto& c : ctxts) {
    if (c.obs.rank() != 2 || c.obs.dim(0) != batch || c.obs.dim(1) != ctxt_obs_size_ || static_cast<Index>(c.phis.size()) != batch) {
      throw ShapeError("context observations " + to_string(c.obs.shape()) + " with " + std::to_string(c.phis.size()) +
                       " phis, expected [" + std::to_string(batch) + ", " + std::to_string(ctxt_obs_size_) + "]");
    }
    const Tensor e = encode_phis(c.phis);
    const bool first = &c == &ctxts.front();
    obs = first ? c.obs : add(obs, c.obs);
    enc = first ? e : add(enc, e);
  }
  if (ctxts.size() > 1) {
    const double w = 1.0 / static_cast<double>(ctxts.size());
    obs = scale(obs, w);
    enc = scale(enc, w);
  }
  return {obs, enc};
}

Tensor Denoiser::assemble(const Tensor& raw, std::span<const ObsBatch> ctxts) const {
  return model_->assemble(raw, ctxts.front().obs, ctxts.front().phis);
}

Tensor Denoiser::denoise(ParamView p, std::span<const ObsBatch> ctxts, const Tensor& noisy, std::span<const Phi> trgt_phis,
                         std::span<const int> t) const {
  const Index batch = static_cast<Index>(trgt_phis.size());
  if (noisy.rank() != 2 || noisy.dim(0) != batch || noisy.dim(1) != trgt_obs_size_) {
    throw ShapeError("noisy target " + to_string(noisy.shape()) + ", expected [" + std::to_string(batch) + ", " +
                     std::to_string(trgt_obs_size_) + "]");
  }
  if (static_cast<Index>(t.size()) != batch) throw std::invalid_argument("one timestep per batch row required");
  for (int s : t) {
    if (s < 1 || s > T_) throw std::out_of_range("timestep " + std::to_string(s) + " outside 1.." + std::to_string(T_));
  }
  const Pooled ctx = pool_contexts(ctxts, batch);
  std::vector<Tensor> parts{ctx.obs};
  if (config_.condition_on_estimate) {
    const DetRender det = det_render(p, ctxts, trgt_phis);
    parts.push_back(det.image);
    if (det.features.numel() > 0) parts.push_back(ablate_features ? Tensor::zeros(det.features.shape()) : det.features);
  }
  parts.push_back(noisy);
  parts.push_back(ctx.enc);
  parts.push_back(encode_phis(trgt_phis));
  parts.push_back(time_features(t, T_, config_.time_features));
  return assemble(net_(p, concat(parts, 1)), ctxts);
}

Denoiser::Estimate Denoiser::estimate(ParamView p, std::span<const ObsBatch> ctxts, std::span<const Phi> trgt_phis) const {
  if (!estimator_) throw std::logic_error("denoiser was built without an estimator");
  const Index batch = static_cast<Index>(trgt_phis.size());
  const Pooled ctx = pool_contexts(ctxts, batch);
  const Tensor raw = (*estimator_)(p, concat({ctx.obs, ctx.enc, encode_phis(trgt_phis)}, 1));
  const Index out = model_->predicted_size();
  if (raw.dim(1) == out) return {assemble(raw, ctxts), Tensor()};
  return {assemble(slice(raw, 1, 0, out), ctxts), slice(raw, 1, out, raw.dim(1))};
}

Denoiser::DetRender Denoiser::det_render(ParamView p, std::span<const ObsBatch> ctxts, std::span<const Phi> trgt_phis) const {
  const RenderModel* rm = render_model();
  if (!rm) throw std::logic_error("deterministic render requires the render model");
  const Estimate est = estimate(p, ctxts, trgt_phis);
  if (est.features.numel() == 0) return {rm->apply(est.signals, trgt_phis), Tensor()};
  const auto out = rm->render_with_features(est.signals, est.features, trgt_phis);
  return {out.image, out.features};
}

} // namespace fmdiff
