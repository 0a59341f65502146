#include "fmdiff/testbeds.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fmdiff {

Eigen::VectorXd World::observe(const Eigen::VectorXd& signal, const Phi& phi) const {
  const std::vector<Phi> phis{phi};
  const Tensor o = model()->apply(Tensor({1, signal.size()}, signal.array()), phis);
  return o.data().matrix();
}

namespace {

Index draw(const std::vector<Index>& pool, Index n_poses, const std::vector<Index>& taken, Rng& rng, const char* role) {
  std::vector<Index> candidates;
  if (pool.empty()) {
    for (Index i = 0; i < n_poses; ++i) candidates.push_back(i);
  } else {
    candidates = pool;
  }
  std::erase_if(candidates, [&](Index i) { return std::find(taken.begin(), taken.end(), i) != taken.end(); });
  if (candidates.empty()) throw std::invalid_argument(std::string("no pose left for the ") + role + " role");
  for (Index i : candidates) {
    if (i < 0 || i >= n_poses) throw std::out_of_range(std::string("pose index out of range in the ") + role + " pool");
  }
  return candidates[rng.below(candidates.size())];
}

} // namespace

Dataset generate_tuples(const World& world, Index n, std::uint64_t seed, const PoseRoles& roles) {
  const auto poses = world.poses();
  const Index np = static_cast<Index>(poses.size());
  if (np < 2) throw std::invalid_argument("a world needs at least 2 poses");
  if (roles.with_novel && np < 3) throw std::invalid_argument("novel views need at least 3 poses");
  Dataset data;
  data.reserve(static_cast<std::size_t>(std::max<Index>(n, 0)));
  const Rng root(seed);
  for (Index i = 0; i < n; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    TrainingTuple tu;
    tu.signal = world.sample_signal(rng);
    std::vector<Index> taken;
    taken.push_back(draw(roles.ctxt, np, taken, rng, "context"));
    taken.push_back(draw(roles.trgt, np, taken, rng, "target"));
    tu.ctxt_phi = poses[taken[0]];
    tu.trgt_phi = poses[taken[1]];
    tu.ctxt_obs = world.observe(tu.signal, tu.ctxt_phi);
    tu.trgt_obs = world.observe(tu.signal, tu.trgt_phi);
    if (roles.with_novel) {
      const Index k = draw(roles.novel, np, taken, rng, "novel");
      tu.novel_phi = poses[k];
      tu.novel_obs = world.observe(tu.signal, *tu.novel_phi);
    }
    data.push_back(std::move(tu));
  }
  return data;
}

// ---------------------------------------------------------------------------

LinearGaussianWorld::LinearGaussianWorld(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::vector<Eigen::MatrixXd> operators,
                                         bool project_context)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) throw ShapeError("prior covariance does not match the mean");
  if (!cov_.isApprox(cov_.transpose(), 1e-12)) throw std::invalid_argument("prior covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("prior covariance is not positive definite");
  chol_ = llt.matrixL();
  model_ = std::make_shared<LinearModel>(std::move(operators), std::vector<Eigen::VectorXd>{}, project_context);
  if (model_->signal_size() != mean_.size()) throw ShapeError("operators do not match the signal dimension");
}

std::vector<Phi> LinearGaussianWorld::poses() const {
  std::vector<Phi> out;
  for (Index k = 0; k < model_->num_operators(); ++k) out.push_back(LinearModel::pose(k));
  return out;
}

Eigen::VectorXd LinearGaussianWorld::sample_signal(Rng& rng) const {
  return mean_ + chol_ * rng.normal_array(dim()).matrix();
}

GaussianPosterior analytic_posterior(const LinearGaussianWorld& world, const Eigen::VectorXd& o_ctxt, Index phi_ctxt) {
  const Eigen::MatrixXd& a = world.op(phi_ctxt);
  if (o_ctxt.size() != a.rows()) throw ShapeError("context observation size does not match the operator");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rank() < a.rows()) throw std::invalid_argument("observation operator is rank deficient");
  const Eigen::MatrixXd sa = world.cov() * a.transpose();
  const Eigen::LLT<Eigen::MatrixXd> gram(a * sa);
  const Eigen::MatrixXd gain = gram.solve(sa.transpose()).transpose();
  GaussianPosterior post;
  post.mean = world.mean() + gain * (o_ctxt - a * world.mean());
  post.cov = world.cov() - gain * sa.transpose();
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  return post;
}

// ---------------------------------------------------------------------------

DiscreteWorld::DiscreteWorld(Eigen::MatrixXd signals, Eigen::VectorXd prior, std::vector<Eigen::MatrixXd> operators)
    : signals_(std::move(signals)), prior_(std::move(prior)) {
  if (prior_.size() != signals_.rows()) throw ShapeError("one prior weight per signal required");
  if ((prior_.array() < 0).any() || std::abs(prior_.sum() - 1.0) > 1e-12) throw std::invalid_argument("prior must be a probability vector");
  model_ = std::make_shared<LinearModel>(std::move(operators), std::vector<Eigen::VectorXd>{}, true);
  if (model_->signal_size() != signals_.cols()) throw ShapeError("operators do not match the signal dimension");
  for (Index k = 0; k < num_signals(); ++k) {
    std::vector<Eigen::VectorXd> row;
    for (Index p = 0; p < num_poses(); ++p) row.push_back(observe(signal(k), LinearModel::pose(p)));
    table_.push_back(std::move(row));
  }
  for (Index i = 0; i < num_signals(); ++i) {
    for (Index j = i + 1; j < num_signals(); ++j) {
      bool same = true;
      for (Index p = 0; p < num_poses() && same; ++p) same = table_[i][p] == table_[j][p];
      if (same) throw std::invalid_argument("signals " + std::to_string(i) + " and " + std::to_string(j) + " share every observation");
    }
  }
}

std::vector<Phi> DiscreteWorld::poses() const {
  std::vector<Phi> out;
  for (Index k = 0; k < num_poses(); ++k) out.push_back(LinearModel::pose(k));
  return out;
}

Eigen::VectorXd DiscreteWorld::sample_signal(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Index k = 0; k < num_signals(); ++k) {
    acc += prior_[k];
    if (u < acc) return signal(k);
  }
  return signal(num_signals() - 1);
}

Index DiscreteWorld::classify(const Eigen::VectorXd& s) const {
  Index best = 0;
  (signals_.rowwise() - s.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return best;
}

Eigen::VectorXd true_discrete_posterior(const DiscreteWorld& world, const Eigen::VectorXd& o, Index p) {
  if (p < 0 || p >= world.num_poses()) throw std::out_of_range("pose index out of range");
  Eigen::VectorXd post = Eigen::VectorXd::Zero(world.num_signals());
  for (Index k = 0; k < world.num_signals(); ++k) {
    const Eigen::VectorXd& ok = world.observation(k, p);
    if (ok.size() == o.size() && (ok - o).cwiseAbs().maxCoeff() <= 1e-9) post[k] = world.prior()[k];
  }
  if (post.sum() <= 0.0) throw std::invalid_argument("observation does not occur at this pose");
  return post / post.sum();
}

DiscreteWorld make_default_discrete_world() {
  Eigen::MatrixXd s(4, 2);
  s << 1, 1, -1, 1, 1, -1, -1, -1;
  Eigen::Vector4d prior(0.4, 0.3, 0.2, 0.1);
  Eigen::MatrixXd e0(1, 2), e1(1, 2);
  e0 << 1, 0;
  e1 << 0, 1;
  return DiscreteWorld(s, prior, {e0, e1});
}

// ---------------------------------------------------------------------------

RenderWorld::RenderWorld(RenderConfig config) : model_(std::make_shared<RenderModel>(config)) {
  if (config.grid_w % 2 != 0) throw std::invalid_argument("render world needs an even grid width");
}

std::vector<Phi> RenderWorld::poses() const {
  std::vector<Phi> out;
  for (int k = 0; k < 4; ++k) out.push_back(CameraPose{k * M_PI / 2.0, 0.0}.to_phi());
  return out;
}

Eigen::Array3d RenderWorld::back_color(int mode) {
  return mode == 0 ? Eigen::Array3d(0.9, 0.1, 0.1) : Eigen::Array3d(0.1, 0.1, 0.9);
}

ToyScene RenderWorld::scene(double green, int back_mode) const {
  const Index h = model_->config().grid_h, w = model_->config().grid_w;
  Eigen::ArrayXd dens = Eigen::ArrayXd::Constant(h * w, density);
  Eigen::ArrayXXd colors(h * w, 3);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      // Rays of pose 0 travel towards +x, so columns with x < 0 are in front.
      colors.row(r * w + c) = c < w / 2 ? Eigen::Array3d(0.1, green, 0.1).transpose() : back_color(back_mode).transpose();
    }
  }
  return ToyScene::from_decoded(h, w, dens, colors);
}

Eigen::VectorXd RenderWorld::sample_signal(Rng& rng) const {
  const double green = 0.2 + 0.7 * rng.uniform();
  const int mode = static_cast<int>(rng.below(2));
  return scene(green, mode).raw.matrix();
}

// ---------------------------------------------------------------------------

MotionWorld::MotionWorld(Index width) : model_(std::make_shared<WarpModel>(width)) {
  if (width < 4) throw std::invalid_argument("motion world needs width >= 4");
}

std::vector<Phi> MotionWorld::poses() const {
  return {Phi::Constant(1, 0.0), Phi::Constant(1, 1.0), Phi::Constant(1, 0.5)};
}

MotionSignal MotionWorld::sample_motion_signal(Rng& rng) const {
  const Index w = model_->width();
  MotionSignal s{Eigen::ArrayXXd(w, 3), Eigen::ArrayXd(w)};
  for (int c = 0; c < 3; ++c) {
    const double a1 = 0.1 + 0.2 * rng.uniform();
    const double p1 = 2.0 * M_PI * rng.uniform();
    for (Index u = 0; u < w; ++u) {
      const double x = static_cast<double>(u) / static_cast<double>(w);
      // Black border: pixels that become uncovered at the edges then match their background.
      const double e = u < 1 || u > w - 2 ? 0.0 : std::pow(std::sin(M_PI * static_cast<double>(u - 1) / static_cast<double>(w - 3)), 2);
      s.color(u, c) = e * (0.5 + a1 * std::sin(2.0 * M_PI * x + p1));
    }
  }
  s.motion.setConstant(rng.below(2) == 0 ? kSpeed : -kSpeed);
  return s;
}

Eigen::VectorXd MotionWorld::sample_signal(Rng& rng) const {
  return sample_motion_signal(rng).as_batch().data().matrix();
}

// ---------------------------------------------------------------------------

GeneratorWorld::GeneratorWorld(GeneratorConfig config, Index patch)
    : model_(std::make_shared<GeneratorModel>(config)), patch_(patch) {
  if (patch < 1 || patch > config.image_h || patch > config.image_w) throw std::invalid_argument("patch does not fit the image");
}

std::vector<Phi> GeneratorWorld::poses() const {
  const auto& cfg = model_->config();
  std::vector<Phi> out;
  for (Index r = 0; r + patch_ <= cfg.image_h; ++r)
    for (Index c = 0; c + patch_ <= cfg.image_w; ++c) out.push_back(PatchCoords{r, c, patch_, patch_}.to_phi());
  out.push_back(model_->full_image().to_phi());
  return out;
}

Eigen::VectorXd GeneratorWorld::sample_signal(Rng& rng) const {
  return rng.normal_array(model_->config().latent_dim).matrix();
}

PoseRoles GeneratorWorld::roles() const {
  const Index n = static_cast<Index>(poses().size());
  PoseRoles r;
  for (Index i = 0; i + 1 < n; ++i) r.ctxt.push_back(i);
  r.trgt = {n - 1};
  r.with_novel = false;
  return r;
}

} // namespace fmdiff
