#pragma once

#include "fmdiff/rng.hpp"
#include "fmdiff/tensor.hpp"

#include <Eigen/Dense>

#include <array>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fmdiff {

/// Raw forward-model parameters. Each model documents its own layout.
using Phi = Eigen::VectorXd;

/// Differentiable map from (signal, phi) to an observation, evaluated over a batch.
///
/// Signals are passed flattened as [B, signal_size()] and observations come
/// back as [B, observation_size(phi)]. All phis of one batch must produce the
/// same observation size. Implementations are immutable and reentrant.
class ForwardModel {
public:
  virtual ~ForwardModel() = default;

  virtual std::string name() const = 0;
  virtual Shape signal_shape() const = 0;
  Index signal_size() const { return numel_of(signal_shape()); }
  virtual Index observation_size(const Phi& phi) const = 0;

  virtual Index encoded_phi_size() const = 0;
  virtual Eigen::VectorXd encode_phi(const Phi& phi) const = 0;

  virtual Tensor apply(const Tensor& signals, std::span<const Phi> phis) const = 0;

  /// Width of the part of the signal a denoiser has to predict.
  virtual Index predicted_size() const { return signal_size(); }
  /// Builds full signals from a denoiser prediction and the context it saw.
  virtual Tensor assemble(const Tensor& predicted, const Tensor& ctxt_obs, std::span<const Phi> ctxt_phis) const;

protected:
  Index batch_observation_size(std::span<const Phi> phis) const;
  void check_signals(const Tensor& signals, std::span<const Phi> phis) const;
};

/// Rows of `x` ([n, c]) scaled by `w` ([n] or [n, 1]).
Tensor scale_rows(const Tensor& x, const Tensor& w);

// ---------------------------------------------------------------------------
// Volume rendering of a 2D scene into a 1D image

/// 1D orthographic camera over the 2D scene box [-1, 1]^2.
/// Rays travel along (cos angle, sin angle); `offset` shifts them sideways.
struct CameraPose {
  double angle = 0.0;
  double offset = 0.0;

  Phi to_phi() const;
  static CameraPose from_phi(const Phi& phi);
};

struct RenderConfig {
  Index grid_h = 4;
  Index grid_w = 4;
  Index image_width = 8;
  int n_samples = 16;
  /// Half-width of the image plane in scene units.
  double extent = 1.0;
};

/// Decoded view of one scene grid. Storage is raw (softplus density, sigmoid color).
struct ToyScene {
  Index h = 0;
  Index w = 0;
  Eigen::ArrayXd raw; // h * w * 4, row-major cells, channel 0 density

  static ToyScene from_decoded(Index h, Index w, const Eigen::ArrayXd& density, const Eigen::ArrayXXd& colors);
  double density(Index r, Index c) const;
  Eigen::Array3d color(Index r, Index c) const;
  Tensor as_batch() const { return Tensor({1, raw.size()}, raw); }
};

double inverse_softplus(double y);
double logit(double p);

/// Interpolation taps and step lengths for every sample of every ray of one pose.
struct RaySamples {
  Index pixels = 0;
  int n_samples = 0;
  std::vector<std::array<Index, 4>> cell;      // per sample: bilinear corner cells
  std::vector<std::array<double, 4>> weight;   // per sample: bilinear weights
  Eigen::ArrayXd delta;                        // per ray: segment length, 0 if the ray misses
};

class RenderModel final : public ForwardModel {
public:
  explicit RenderModel(RenderConfig config = {});

  std::string name() const override { return "render"; }
  Shape signal_shape() const override { return {config_.grid_h, config_.grid_w, 4}; }
  Index observation_size(const Phi&) const override { return config_.image_width * 3; }
  Index encoded_phi_size() const override { return 3; }
  Eigen::VectorXd encode_phi(const Phi& phi) const override;

  Tensor apply(const Tensor& signals, std::span<const Phi> phis) const override;

  struct Rendered {
    Tensor image;    // [B, image_width * 3]
    Tensor features; // [B, image_width * K]
  };
  /// Renders colors and per-cell features ([B, cells * K]) with the same compositing weights.
  Rendered render_with_features(const Tensor& signals, const Tensor& features, std::span<const Phi> phis) const;

  RaySamples trace(const CameraPose& pose) const;
  const RenderConfig& config() const { return config_; }
  Index cells() const { return config_.grid_h * config_.grid_w; }

private:
  // Returns [B * pixels, channels] composited values of per-cell attributes
  // `attrs` ([B * cells, channels]) with densities `sigma` ([B * cells, 1]).
  Tensor composite(const Tensor& sigma, const Tensor& attrs, std::span<const Phi> phis) const;
  RenderConfig config_;
};

/// Convenience: render one scene from one pose into a [image_width, 3] image.
Eigen::ArrayXXd render(const RenderModel& model, const ToyScene& scene, const CameraPose& pose);

// ---------------------------------------------------------------------------
// Point-splat warp of a 1D image by a motion field

/// Signal layout: width * 3 colors (pixel-major) followed by width motions.
struct MotionSignal {
  Eigen::ArrayXXd color;  // [width, 3]
  Eigen::ArrayXd motion;  // [width], pixels of displacement per unit phi

  Tensor as_batch() const;
};

struct SplatTap {
  Index dest;
  double weight;
};

/// Two-tap linear splat footprint of a source landing at continuous position `x`.
std::array<SplatTap, 2> splat_taps(double x);

class WarpModel final : public ForwardModel {
public:
  explicit WarpModel(Index width = 16) : width_(width) {}

  std::string name() const override { return "warp"; }
  Shape signal_shape() const override { return {width_, 4}; }
  Index observation_size(const Phi&) const override { return width_ * 3; }
  Index encoded_phi_size() const override { return 1; }
  Eigen::VectorXd encode_phi(const Phi& phi) const override { return phi.head(1); }

  Tensor apply(const Tensor& signals, std::span<const Phi> phis) const override;

  /// The denoiser predicts motion only; colors come from the context frame.
  Index predicted_size() const override { return width_; }
  Tensor assemble(const Tensor& predicted, const Tensor& ctxt_obs, std::span<const Phi> ctxt_phis) const override;

  Index width() const { return width_; }
  static constexpr double kEpsilon = 1e-8;

private:
  Index width_;
};

Eigen::ArrayXXd warp(const WarpModel& model, const MotionSignal& signal, double phi);

// ---------------------------------------------------------------------------
// Patch of a frozen random generator

/// Top-left corner and size of a patch, in pixels.
struct PatchCoords {
  Index row = 0;
  Index col = 0;
  Index height = 0;
  Index width = 0;

  Phi to_phi() const;
  static PatchCoords from_phi(const Phi& phi);
};

struct GeneratorConfig {
  Index latent_dim = 16;
  Index hidden = 32;
  Index image_h = 8;
  Index image_w = 8;
  std::uint64_t seed = 7;
};

/// Fixed two-layer network latent -> image, then a patch crop.
class GeneratorModel final : public ForwardModel {
public:
  explicit GeneratorModel(GeneratorConfig config = {});

  std::string name() const override { return "generator"; }
  Shape signal_shape() const override { return {config_.latent_dim}; }
  Index observation_size(const Phi& phi) const override;
  Index encoded_phi_size() const override { return 4; }
  Eigen::VectorXd encode_phi(const Phi& phi) const override;

  Tensor apply(const Tensor& signals, std::span<const Phi> phis) const override;
  /// Full generator output, [B, image_h * image_w * 3].
  Tensor generate(const Tensor& signals) const;

  PatchCoords full_image() const { return {0, 0, config_.image_h, config_.image_w}; }
  const GeneratorConfig& config() const { return config_; }

private:
  GeneratorConfig config_;
  Tensor w1_, b1_, w2_, b2_;
};

// ---------------------------------------------------------------------------
// Linear maps

/// A S + b for S of shape [d] or [B, d].
Tensor linear_map(const Tensor& s, const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// phi = [operator index]. Observations are A_phi S + b_phi.
class LinearModel final : public ForwardModel {
public:
  LinearModel(std::vector<Eigen::MatrixXd> operators, std::vector<Eigen::VectorXd> offsets = {},
              bool project_context = false);

  std::string name() const override { return "linear"; }
  Shape signal_shape() const override { return {dim_}; }
  Index observation_size(const Phi& phi) const override;
  Index encoded_phi_size() const override;
  Eigen::VectorXd encode_phi(const Phi& phi) const override;

  Tensor apply(const Tensor& signals, std::span<const Phi> phis) const override;
  /// With context projection on, predictions are projected onto {S : A_ctxt S + b_ctxt = O_ctxt}.
  Tensor assemble(const Tensor& predicted, const Tensor& ctxt_obs, std::span<const Phi> ctxt_phis) const override;

  const Eigen::MatrixXd& op(Index k) const { return ops_.at(k); }
  const Eigen::VectorXd& offset(Index k) const { return offsets_.at(k); }
  Index num_operators() const { return static_cast<Index>(ops_.size()); }
  static Phi pose(Index k) { return Phi::Constant(1, static_cast<double>(k)); }

private:
  Index index_of(const Phi& phi) const;
  std::vector<Eigen::MatrixXd> ops_;
  std::vector<Eigen::VectorXd> offsets_;
  bool project_context_;
  Index dim_;
};

} // namespace fmdiff
