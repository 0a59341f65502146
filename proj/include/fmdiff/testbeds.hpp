#pragma once

#include "fmdiff/diffusion.hpp"
#include "fmdiff/forward_models.hpp"
#include "fmdiff/rng.hpp"

#include <memory>
#include <vector>

namespace fmdiff {

/// A signal prior, a forward model and a finite pose list.
class World {
public:
  virtual ~World() = default;
  virtual std::shared_ptr<const ForwardModel> model() const = 0;
  virtual std::vector<Phi> poses() const = 0;
  virtual Eigen::VectorXd sample_signal(Rng& rng) const = 0;

  Eigen::VectorXd observe(const Eigen::VectorXd& signal, const Phi& phi) const;
};

/// Which pose indices each role may draw from; empty means any pose.
/// Roles are drawn in order context, target, novel, without replacement.
struct PoseRoles {
  std::vector<Index> ctxt;
  std::vector<Index> trgt;
  std::vector<Index> novel;
  bool with_novel = true;
};

/// Rejects worlds with fewer than 2 poses, or fewer than 3 when a novel view is requested.
Dataset generate_tuples(const World& world, Index n, std::uint64_t seed, const PoseRoles& roles = {});

// ---------------------------------------------------------------------------
// Linear-Gaussian world: S ~ N(m, Sigma), O = A_phi S.

class LinearGaussianWorld final : public World {
public:
  LinearGaussianWorld(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::vector<Eigen::MatrixXd> operators,
                      bool project_context = true);

  std::shared_ptr<const ForwardModel> model() const override { return model_; }
  std::vector<Phi> poses() const override;
  Eigen::VectorXd sample_signal(Rng& rng) const override;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& op(Index k) const { return model_->op(k); }
  Index dim() const { return mean_.size(); }

private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  std::shared_ptr<LinearModel> model_;
};

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Prior conditioned on A_phi S = O. Rejects rank-deficient operators.
GaussianPosterior analytic_posterior(const LinearGaussianWorld& world, const Eigen::VectorXd& o_ctxt, Index phi_ctxt);

// ---------------------------------------------------------------------------
// Discrete world: finitely many signals observed through linear slots.

class DiscreteWorld final : public World {
public:
  /// `signals` holds one signal per row. Rejects priors that do not sum to 1
  /// and signal sets whose total observation is not injective.
  DiscreteWorld(Eigen::MatrixXd signals, Eigen::VectorXd prior, std::vector<Eigen::MatrixXd> operators);

  std::shared_ptr<const ForwardModel> model() const override { return model_; }
  std::vector<Phi> poses() const override;
  Eigen::VectorXd sample_signal(Rng& rng) const override;

  Index num_signals() const { return signals_.rows(); }
  Index num_poses() const { return model_->num_operators(); }
  Eigen::VectorXd signal(Index k) const { return signals_.row(k).transpose(); }
  const Eigen::VectorXd& prior() const { return prior_; }
  /// O[k][p].
  const Eigen::VectorXd& observation(Index k, Index p) const { return table_.at(k).at(p); }
  /// Index of the nearest table signal.
  Index classify(const Eigen::VectorXd& s) const;

private:
  Eigen::MatrixXd signals_;
  Eigen::VectorXd prior_;
  std::shared_ptr<LinearModel> model_;
  std::vector<std::vector<Eigen::VectorXd>> table_;
};

/// Prior mass of signals whose observation at pose `p` equals `o`, renormalized.
Eigen::VectorXd true_discrete_posterior(const DiscreteWorld& world, const Eigen::VectorXd& o, Index p);

/// Four signals (+-1, +-1) with priors (0.4, 0.3, 0.2, 0.1); pose p reads coordinate p.
DiscreteWorld make_default_discrete_world();

// ---------------------------------------------------------------------------
// Render world: a 4x4 scene with an opaque front half of random green level
// and an opaque back half that is either red or blue.

class RenderWorld final : public World {
public:
  explicit RenderWorld(RenderConfig config = {});

  std::shared_ptr<const ForwardModel> model() const override { return model_; }
  /// Angles 0, pi/2, pi, 3pi/2. Pose 0 sees the front half, pose 2 the back.
  std::vector<Phi> poses() const override;
  Eigen::VectorXd sample_signal(Rng& rng) const override;

  ToyScene scene(double green, int back_mode) const;
  static Eigen::Array3d back_color(int mode);
  static PoseRoles roles() { return {{0}, {2}, {1, 3}, true}; }

  /// Opacity per unit length; high enough that the context view shows nothing of the back half.
  double density = 25.0;

private:
  std::shared_ptr<RenderModel> model_;
};

// ---------------------------------------------------------------------------
// Motion world: smooth random colors moving uniformly by +1 or -1 pixel per unit phi.

class MotionWorld final : public World {
public:
  explicit MotionWorld(Index width = 16);

  std::shared_ptr<const ForwardModel> model() const override { return model_; }
  /// phi = 0 (context), 1 (target), 0.5 (novel).
  std::vector<Phi> poses() const override;
  Eigen::VectorXd sample_signal(Rng& rng) const override;

  MotionSignal sample_motion_signal(Rng& rng) const;
  static PoseRoles roles() { return {{0}, {1}, {2}, true}; }
  static constexpr double kSpeed = 1.0;

private:
  std::shared_ptr<WarpModel> model_;
};

// ---------------------------------------------------------------------------
// Generator world: latent S ~ N(0, I); contexts are 3x3 patches, targets the full image.

class GeneratorWorld final : public World {
public:
  explicit GeneratorWorld(GeneratorConfig config = {}, Index patch = 3);

  std::shared_ptr<const ForwardModel> model() const override { return model_; }
  /// Every patch position in row-major order, then the full image.
  std::vector<Phi> poses() const override;
  Eigen::VectorXd sample_signal(Rng& rng) const override;

  PoseRoles roles() const;
  Index patch() const { return patch_; }

private:
  std::shared_ptr<GeneratorModel> model_;
  Index patch_;
};

} // namespace fmdiff
