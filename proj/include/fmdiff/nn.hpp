#pragma once

#include "fmdiff/rng.hpp"
#include "fmdiff/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace fmdiff {

/// Named, tapeless parameter tensors. Index order is registration order.
class ParameterStore {
public:
  Index add(std::string name, Tensor value);

  Index size() const { return static_cast<Index>(values_.size()); }
  /// Total scalar count.
  Index numel() const;

  const std::vector<Tensor>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  const Tensor& operator[](Index i) const { return values_.at(i); }
  void set(Index i, Tensor value);

  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  /// Leaves on `tape` with the current values, in registration order.
  std::vector<Tensor> bind(Tape& tape) const;

private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Parameters for one forward pass: either store values or their tape leaves.
using ParamView = std::span<const Tensor>;

/// Affine + ReLU stack; the last layer is affine only.
struct Mlp {
  std::vector<Index> param_ids; // weight, bias per layer
  Index in = 0;
  Index out = 0;

  Tensor operator()(ParamView params, const Tensor& x) const;
};

/// He-initialized hidden layers. The output layer is scaled by `out_scale`.
Mlp make_mlp(ParameterStore& store, const std::string& prefix, Index in, const std::vector<Index>& hidden, Index out,
             Rng& rng, double out_scale = 1.0);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  Adam(const ParameterStore& store, AdamConfig config = {});
  void step(ParameterStore& store, const std::vector<Tensor>& grads);
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }

private:
  AdamConfig config_;
  std::vector<Eigen::ArrayXd> m_, v_;
  long t_ = 0;
};

/// Sinusoidal features of t / T at geometrically spaced frequencies, [B, n].
Tensor time_features(std::span<const int> t, int T, int n);

} // namespace fmdiff
