#include "fmdiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fmdiff {

Index ParameterStore::add(std::string name, Tensor value) {
  if (value.on_tape()) throw std::invalid_argument("parameter '" + name + "' must not carry a tape handle");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return size() - 1;
}

Index ParameterStore::numel() const {
  Index n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

void ParameterStore::set(Index i, Tensor value) {
  if (value.shape() != values_.at(i).shape()) {
    throw ShapeError("parameter '" + names_[i] + "': " + to_string(value.shape()) + " vs " + to_string(values_[i].shape()));
  }
  values_[i] = value.detach();
}

Eigen::VectorXd ParameterStore::flatten() const {
  Eigen::VectorXd flat(numel());
  Index at = 0;
  for (const auto& v : values_) {
    flat.segment(at, v.numel()) = v.data().matrix();
    at += v.numel();
  }
  return flat;
}

void ParameterStore::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != numel()) throw ShapeError("parameter vector of " + std::to_string(flat.size()) + " for " + std::to_string(numel()) + " scalars");
  Index at = 0;
  for (auto& v : values_) {
    v = Tensor(v.shape(), flat.segment(at, v.numel()).array());
    at += v.numel();
  }
}

std::vector<Tensor> ParameterStore::bind(Tape& tape) const {
  std::vector<Tensor> leaves;
  leaves.reserve(values_.size());
  for (const auto& v : values_) leaves.push_back(tape.leaf(v));
  return leaves;
}

Tensor Mlp::operator()(ParamView params, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in) throw ShapeError("mlp input " + to_string(x.shape()) + ", expected [B, " + std::to_string(in) + "]");
  Tensor h = x;
  const std::size_t layers = param_ids.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, params[param_ids[2 * l]]), params[param_ids[2 * l + 1]]);
    if (l + 1 < layers) h = relu(h);
  }
  return h;
}

Mlp make_mlp(ParameterStore& store, const std::string& prefix, Index in, const std::vector<Index>& hidden, Index out,
             Rng& rng, double out_scale) {
  Mlp mlp;
  mlp.in = in;
  mlp.out = out;
  Index fan_in = in;
  std::vector<Index> widths = hidden;
  widths.push_back(out);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const bool last = l + 1 == widths.size();
    const double gain = (last ? out_scale : std::sqrt(2.0)) / std::sqrt(static_cast<double>(fan_in));
    const std::string tag = prefix + "." + std::to_string(l);
    mlp.param_ids.push_back(store.add(tag + ".weight", Tensor::matrix(rng.normal_matrix(fan_in, widths[l]) * gain)));
    mlp.param_ids.push_back(store.add(tag + ".bias", Tensor::zeros({1, widths[l]})));
    fan_in = widths[l];
  }
  return mlp;
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& v : store.values()) {
    m_.push_back(Eigen::ArrayXd::Zero(v.numel()));
    v_.push_back(Eigen::ArrayXd::Zero(v.numel()));
  }
}

void Adam::step(ParameterStore& store, const std::vector<Tensor>& grads) {
  if (grads.size() != m_.size()) throw std::invalid_argument("Adam: gradient count does not match parameter count");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Eigen::ArrayXd& g = grads[i].data();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.square();
    const Eigen::ArrayXd update = config_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + config_.eps);
    store.set(static_cast<Index>(i), Tensor(store[i].shape(), store[i].data() - update));
  }
}

Tensor time_features(std::span<const int> t, int T, int n) {
  if (n % 2 != 0) throw std::invalid_argument("time feature count must be even");
  const Index b = static_cast<Index>(t.size());
  Eigen::ArrayXd f(b * n);
  for (Index i = 0; i < b; ++i) {
    const double s = static_cast<double>(t[i]) / static_cast<double>(T);
    for (int k = 0; k < n / 2; ++k) {
      const double w = std::pow(2.0, k) * M_PI / 2.0;
      f[i * n + 2 * k] = std::sin(w * s);
      f[i * n + 2 * k + 1] = std::cos(w * s);
    }
  }
  return Tensor({b, n}, std::move(f));
}

} // namespace fmdiff
