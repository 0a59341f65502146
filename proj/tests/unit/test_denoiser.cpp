#include "fmdiff/denoiser.hpp"
#include "fmdiff/diffusion.hpp"
#include "fmdiff/testbeds.hpp"

#include <doctest.h>

#include <cmath>

using namespace fmdiff;

namespace {

struct Fixture {
  std::shared_ptr<const ForwardModel> model;
  std::unique_ptr<Denoiser> den;
  ObsBatch ctxt;
  Tensor noisy;
  Tensor clean;
  std::vector<Phi> trgt_phis;
  std::vector<int> t;
};

Fixture make_fixture(const World& world, const PoseRoles& roles, DenoiserConfig cfg, Index batch, std::uint64_t seed) {
  const Dataset data = generate_tuples(world, batch, seed, roles);
  const Batch b = make_batch(data);
  Fixture f;
  f.model = world.model();
  f.den = std::make_unique<Denoiser>(f.model, 64, b.ctxt.obs.dim(1), b.trgt.obs.dim(1), cfg);
  f.ctxt = b.ctxt;
  Rng rng(seed + 100);
  f.noisy = Tensor(b.trgt.obs.shape(), rng.normal_array(b.trgt.obs.numel()));
  f.clean = b.trgt.obs;
  f.trgt_phis = b.trgt.phis;
  for (Index i = 0; i < batch; ++i) f.t.push_back(1 + static_cast<int>(rng.below(64)));
  return f;
}

DenoiserConfig small(std::uint64_t seed = 3) {
  DenoiserConfig c;
  c.hidden = {24, 24};
  c.estimator_hidden = {16};
  c.output_scale = 1.0;
  c.seed = seed;
  return c;
}

std::vector<Fixture> all_models() {
  std::vector<Fixture> out;
  const GeneratorWorld gen;
  out.push_back(make_fixture(RenderWorld(), RenderWorld::roles(), small(), 3, 1));
  out.push_back(make_fixture(MotionWorld(), MotionWorld::roles(), small(), 3, 2));
  out.push_back(make_fixture(gen, gen.roles(), small(), 3, 3));
  return out;
}

} // namespace

TEST_CASE("denoise output has the signal shape for every forward model") {
  for (const Fixture& f : all_models()) {
    CAPTURE(f.model->name());
    const std::vector<ObsBatch> ctxts{f.ctxt};
    const Tensor s = f.den->denoise(ctxts, f.noisy, f.trgt_phis, f.t);
    CHECK(s.shape() == Shape{3, f.model->signal_size()});
  }
}

TEST_CASE("denoise is a pure function of parameters and inputs") {
  for (const Fixture& f : all_models()) {
    const std::vector<ObsBatch> ctxts{f.ctxt};
    const Tensor a = f.den->denoise(ctxts, f.noisy, f.trgt_phis, f.t);
    const Tensor b = f.den->denoise(ctxts, f.noisy, f.trgt_phis, f.t);
    CHECK((a.data() == b.data()).all());
    // A second net built from the same seed is the same function.
    const Denoiser twin(f.model, 64, f.den->ctxt_obs_size(), f.den->trgt_obs_size(), f.den->config());
    CHECK((twin.denoise(ctxts, f.noisy, f.trgt_phis, f.t).data() == a.data()).all());
  }
}

TEST_CASE("denoise rejects timesteps outside the schedule") {
  Fixture f = make_fixture(MotionWorld(), MotionWorld::roles(), small(), 2, 5);
  const std::vector<ObsBatch> ctxts{f.ctxt};
  for (int bad : {0, 65}) {
    const std::vector<int> t{bad, 3};
    CHECK_THROWS_AS(f.den->denoise(ctxts, f.noisy, f.trgt_phis, t), std::out_of_range);
  }
}

TEST_CASE("parameter gradient of the re-rendering loss matches central differences") {
  for (Fixture& f : all_models()) {
    CAPTURE(f.model->name());
    const std::vector<ObsBatch> ctxts{f.ctxt};
    auto loss_at = [&](const ParameterStore& store) {
      const Tensor s = f.den->denoise(store.values(), ctxts, f.noisy, f.trgt_phis, f.t);
      return squared_error(f.model->apply(s, f.trgt_phis), f.clean).item();
    };

    Tape tape;
    const auto leaves = f.den->params().bind(tape);
    const Tensor s = f.den->denoise(leaves, ctxts, f.noisy, f.trgt_phis, f.t);
    const Gradients g = tape.backward(squared_error(f.model->apply(s, f.trgt_phis), f.clean));

    Rng rng(77);
    const double h = 1e-5;
    for (int k = 0; k < 5; ++k) {
      const Index pi = static_cast<Index>(rng.below(static_cast<std::uint64_t>(f.den->params().size())));
      const Tensor value = f.den->params()[pi];
      const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(value.numel())));
      ParameterStore plus = f.den->params(), minus = f.den->params();
      Eigen::ArrayXd dp = value.data(), dm = value.data();
      dp[j] += h;
      dm[j] -= h;
      plus.set(pi, Tensor(value.shape(), dp));
      minus.set(pi, Tensor(value.shape(), dm));
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
      const double rev = g[leaves[pi]][j];
      CAPTURE(f.den->params().names()[pi]);
      CHECK(std::abs(rev - fd) <= std::max(1e-8, 1e-4 * std::max(std::abs(rev), std::abs(fd))));
    }
  }
}

TEST_CASE("estimate-conditioned denoiser") {
  DenoiserConfig cfg = small();
  cfg.condition_on_estimate = true;
  Fixture f = make_fixture(RenderWorld(), RenderWorld::roles(), cfg, 2, 8);
  const std::vector<ObsBatch> ctxts{f.ctxt};
  const auto& rm = dynamic_cast<const RenderModel&>(*f.model);

  SUBCASE("zero-noise limit is well formed") {
    const std::vector<int> t{1, 1};
    const Tensor s = f.den->denoise(ctxts, f.clean, f.trgt_phis, t);
    CHECK(s.shape() == Shape{2, f.model->signal_size()});
    CHECK(s.data().allFinite());
  }
  SUBCASE("feature ablation keeps the output well formed") {
    f.den->ablate_features = true;
    const Tensor s = f.den->denoise(ctxts, f.noisy, f.trgt_phis, f.t);
    CHECK(s.shape() == Shape{2, f.model->signal_size()});
    CHECK(s.data().allFinite());
  }
  SUBCASE("deterministic render equals a direct render of the estimate") {
    const auto est = f.den->estimate(f.den->params().values(), ctxts, f.trgt_phis);
    const auto det = f.den->det_render(f.den->params().values(), ctxts, f.trgt_phis);
    CHECK((det.image.data() == rm.apply(est.signals, f.trgt_phis).data()).all());
    CHECK(det.features.shape() == Shape{2, rm.config().image_width * cfg.feature_channels});
  }
}

TEST_CASE("estimate conditioning needs the render model") {
  DenoiserConfig cfg = small();
  cfg.condition_on_estimate = true;
  CHECK_THROWS(Denoiser(std::make_shared<WarpModel>(), 64, 48, 48, cfg));
}

TEST_CASE("context pooling is order invariant") {
  Fixture f = make_fixture(RenderWorld(), RenderWorld::roles(), small(), 2, 9);
  Rng rng(10);
  ObsBatch other{Tensor(f.ctxt.obs.shape(), rng.uniform() + rng.normal_array(f.ctxt.obs.numel()) * 0.1),
                 std::vector<Phi>(2, CameraPose{M_PI / 2, 0}.to_phi())};
  const std::vector<ObsBatch> ab{f.ctxt, other}, ba{other, f.ctxt};
  const Tensor x = f.den->denoise(ab, f.noisy, f.trgt_phis, f.t);
  const Tensor y = f.den->denoise(ba, f.noisy, f.trgt_phis, f.t);
  CHECK(((x.data() - y.data()).abs() < 1e-12).all());
}

TEST_CASE("small context perturbations move the output a little") {
  Fixture f = make_fixture(MotionWorld(), MotionWorld::roles(), small(), 2, 11);
  const std::vector<ObsBatch> ctxts{f.ctxt};
  const Tensor base = f.den->denoise(ctxts, f.noisy, f.trgt_phis, f.t);
  Rng rng(12);
  const Eigen::ArrayXd dir = rng.normal_array(f.ctxt.obs.numel());
  double prev_ratio = 0.0;
  for (double eps : {1e-3, 1e-4, 1e-5}) {
    const ObsBatch moved{Tensor(f.ctxt.obs.shape(), f.ctxt.obs.data() + eps * dir), f.ctxt.phis};
    const std::vector<ObsBatch> mc{moved};
    const double change = (f.den->denoise(mc, f.noisy, f.trgt_phis, f.t).data() - base.data()).abs().maxCoeff();
    const double ratio = change / eps;
    CHECK(std::isfinite(ratio));
    CHECK(ratio < 1e3);
    if (prev_ratio > 0.0) CHECK(ratio == doctest::Approx(prev_ratio).epsilon(0.2));
    prev_ratio = ratio;
  }
}

TEST_CASE("time features") {
  const std::vector<int> t{1, 32, 64};
  const Tensor f = time_features(t, 64, 8);
  CHECK(f.shape() == Shape{3, 8});
  CHECK((f.data().abs() <= 1.0).all());
  CHECK_FALSE(f.as_matrix().row(0) == f.as_matrix().row(2));
}
