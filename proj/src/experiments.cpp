#include "fmdiff/experiments.hpp"

#include "fmdiff/stats.hpp"
#include "fmdiff/testbeds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fmdiff {

namespace {

// Stream ids under the root seed.
enum Stream : std::uint64_t { kData = 1, kModel, kTrain, kSample, kEval, kBaselineModel, kBaselineTrain, kBootstrap };

std::uint64_t derive(std::uint64_t seed, Stream s) { return Rng(seed).split(s)(); }

TrainConfig train_config(const ExperimentConfig& c, const OptimConfig& o, Stream s) {
  TrainConfig t;
  t.steps = o.steps;
  t.batch_size = o.batch_size;
  t.adam = o.adam;
  t.final_lr_fraction = o.final_lr_fraction;
  t.lambda = c.lambda;
  t.smoothness = c.smoothness;
  t.seed = derive(c.seed, s);
  return t;
}

DenoiserConfig model_config(const ExperimentConfig& c, Stream s) {
  DenoiserConfig m = c.model;
  m.seed = derive(c.seed, s);
  return m;
}

SamplerConfig sampler_config(const ExperimentConfig& c, std::uint64_t salt = 0) {
  SamplerConfig s;
  s.step = c.schedule.reverse_step;
  s.seed = Rng(derive(c.seed, kSample)).split(salt)();
  return s;
}

/// `n` copies of one observation.
ObsBatch repeated(const Eigen::VectorXd& obs, const Phi& phi, Index n) {
  Eigen::ArrayXd d(n * obs.size());
  for (Index i = 0; i < n; ++i) d.segment(i * obs.size(), obs.size()) = obs.array();
  return {Tensor({n, obs.size()}, std::move(d)), std::vector<Phi>(n, phi)};
}

CheckResult check(std::string name, double statistic, double threshold, bool pass, double se = 0.0) {
  return {std::move(name), statistic, se, threshold, pass};
}

void add_curve(ExperimentOutput& out, std::string name, const TrainResult& r) { out.curves.emplace_back(std::move(name), r.losses); }

Eigen::MatrixXd rows_of(const Tensor& t) { return t.to_matrix(); }

// Mean color over the pixels of each row of [B, width * 3] images.
Eigen::MatrixXd mean_colors(const Tensor& images, Index width) {
  const auto m = images.as_matrix();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), 3);
  for (Index p = 0; p < width; ++p) out += m.middleCols(p * 3, 3);
  return out / static_cast<double>(width);
}

// ---------------------------------------------------------------------------

LinearGaussianWorld linear_gaussian_world() {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  Eigen::MatrixXd a0(1, 2), a1(1, 2), a2(1, 2);
  a0 << 1.0, 0.0;
  a1 << 0.0, 1.0;
  a2 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return LinearGaussianWorld(Eigen::VectorXd::Zero(2), cov, {a0, a1, a2});
}

void run_linear_gaussian(const ExperimentConfig& c, ExperimentOutput& out) {
  const LinearGaussianWorld world = linear_gaussian_world();
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), PoseRoles{{0}, {1}, {2}, true});
  const VarianceSchedule sched = c.schedule.make();
  Denoiser den(world.model(), sched.T, 1, 1, model_config(c, kModel));
  add_curve(out, "loss", train(den, data, sched, train_config(c, c.train, kTrain)));
  out.checkpoint = den.params();
  if (c.write_dataset) out.dataset = data;

  const Index n = c.eval_samples;
  const std::vector<double> contexts{-1.0, 0.3, 1.2};
  const ReverseStep other = c.schedule.reverse_step == ReverseStep::renoise ? ReverseStep::ddpm_posterior : ReverseStep::renoise;
  ojson per_context = ojson::array();
  Rng boot(derive(c.seed, kBootstrap));
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    const Eigen::VectorXd o = Eigen::VectorXd::Constant(1, contexts[k]);
    const GaussianPosterior post = analytic_posterior(world, o, 0);
    const std::vector<ObsBatch> ctx{repeated(o, LinearModel::pose(0), n)};
    const std::vector<Phi> trgt(n, LinearModel::pose(1));

    const SampleResult s = sample(den, sched, ctx, trgt, sampler_config(c, k));
    const PosteriorComparison cmp = compare_posteriors(rows_of(s.signals), post, boot);
    SamplerConfig alt = sampler_config(c, k);
    alt.step = other;
    const PosteriorComparison cmp_alt = compare_posteriors(rows_of(sample(den, sched, ctx, trgt, alt).signals), post, boot);

    per_context.push_back({{"context", contexts[k]},
                           {"posterior_mean", std::vector<double>(post.mean.data(), post.mean.data() + 2)},
                           {"posterior_var", {post.cov(0, 0), post.cov(1, 1)}},
                           {"w1", cmp.distance},
                           {"w1_stderr", cmp.stderr_},
                           {"w1_" + std::string(to_string(other)), cmp_alt.distance},
                           {"structural_gap", structural_gap(*world.model(), s, trgt)}});
    for (std::size_t d = 0; d < cmp.distance.size(); ++d)
      out.checks.push_back(check("w1_context" + std::to_string(k) + "_coord" + std::to_string(d), cmp.distance[d], 0.1,
                                 cmp.distance[d] < 0.1, cmp.stderr_[d]));
  }
  out.statistics["reverse_step"] = to_string(c.schedule.reverse_step);
  out.statistics["contexts"] = per_context;
}

// ---------------------------------------------------------------------------

void run_discrete(const ExperimentConfig& c, ExperimentOutput& out) {
  const DiscreteWorld world = make_default_discrete_world();
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), PoseRoles{{}, {}, {}, false});
  const VarianceSchedule sched = c.schedule.make();
  Denoiser den(world.model(), sched.T, 1, 1, model_config(c, kModel));
  add_curve(out, "loss", train(den, data, sched, train_config(c, c.train, kTrain)));
  out.checkpoint = den.params();
  if (c.write_dataset) out.dataset = data;

  const Index n = c.eval_samples;
  Rng boot(derive(c.seed, kBootstrap));
  ojson cases = ojson::array();
  std::uint64_t salt = 0;
  for (Index p = 0; p < 2; ++p)
    for (double value : {1.0, -1.0}) {
      const Eigen::VectorXd o = Eigen::VectorXd::Constant(1, value);
      const Eigen::VectorXd truth = true_discrete_posterior(world, o, p);
      const std::vector<ObsBatch> ctx{repeated(o, LinearModel::pose(p), n)};
      const std::vector<Phi> trgt(n, LinearModel::pose(1 - p));
      const SampleResult s = sample(den, sched, ctx, trgt, sampler_config(c, salt++));
      std::vector<Index> labels(n);
      for (Index i = 0; i < n; ++i) labels[i] = world.classify(s.signals.as_matrix().row(i).transpose());
      const PosteriorComparison cmp = compare_posteriors(labels, truth, boot);
      Eigen::VectorXd freq = Eigen::VectorXd::Zero(truth.size());
      for (Index l : labels) freq[l] += 1.0 / static_cast<double>(n);
      cases.push_back({{"context_pose", p},
                       {"context_obs", value},
                       {"truth", std::vector<double>(truth.data(), truth.data() + truth.size())},
                       {"frequencies", std::vector<double>(freq.data(), freq.data() + freq.size())},
                       {"tv", cmp.distance[0]},
                       {"tv_stderr", cmp.stderr_[0]}});
      // The acceptance case: pose 0 reads +1, shared by signals 0 and 2.
      if (p == 0 && value == 1.0)
        out.checks.push_back(check("tv_pose0_obs+1", cmp.distance[0], 0.1, cmp.distance[0] < 0.1, cmp.stderr_[0]));
    }
  out.statistics["reverse_step"] = to_string(c.schedule.reverse_step);
  out.statistics["cases"] = cases;
}

// ---------------------------------------------------------------------------

void run_novel_loss(const ExperimentConfig& c, ExperimentOutput& out) {
  Eigen::MatrixXd cov(3, 3);
  cov << 1.0, 0.3, 0.8, 0.3, 1.0, 0.8, 0.8, 0.8, 1.0;
  std::vector<Eigen::MatrixXd> ops;
  for (Index k = 0; k < 3; ++k) ops.push_back(Eigen::MatrixXd::Identity(3, 3).row(k));
  const LinearGaussianWorld world(Eigen::VectorXd::Zero(3), cov, ops);
  const PoseRoles roles{{0}, {1}, {2}, true};
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), roles);
  const Dataset val = generate_tuples(world, c.eval_samples, derive(c.seed, kEval), roles);
  const VarianceSchedule sched = c.schedule.make();
  if (c.write_dataset) out.dataset = data;

  // Fixed validation noise levels and noise.
  const Batch vb = make_batch(val);
  Rng vr(derive(c.seed, kEval) + 1);
  std::vector<int> t(val.size());
  for (int& v : t) v = 1 + static_cast<int>(vr.below(sched.T));
  const Tensor noise({vb.size(), 1}, vr.normal_array(vb.size()));

  auto run = [&](double lambda, const std::string& name) {
    ExperimentConfig cc = c;
    cc.lambda = lambda;
    Denoiser den(world.model(), sched.T, 1, 1, model_config(c, kModel));
    add_curve(out, name, train(den, data, sched, train_config(cc, c.train, kTrain)));
    const double err = loss_novel(den, den.params().values(), vb, t, noise, sched).item();
    return std::make_pair(err, den.params());
  };
  const auto [with_novel, params] = run(c.lambda, "loss");
  const auto [without_novel, unused] = run(0.0, "loss_lambda0");
  (void)unused;
  out.checkpoint = params;
  const double ratio = without_novel / with_novel;
  out.statistics["lambda"] = c.lambda;
  out.statistics["validation_novel_error"] = with_novel;
  out.statistics["validation_novel_error_lambda0"] = without_novel;
  out.statistics["ratio"] = ratio;
  out.checks.push_back(check("novel_error_ratio", ratio, 2.0, ratio >= 2.0));
}

// ---------------------------------------------------------------------------

void run_toy_render(const ExperimentConfig& c, ExperimentOutput& out) {
  const RenderWorld world;
  const auto model = std::dynamic_pointer_cast<const RenderModel>(world.model());
  const Index width = model->config().image_width;
  const Index obs = width * 3;
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), RenderWorld::roles());
  const VarianceSchedule sched = c.schedule.make();
  if (c.write_dataset) out.dataset = data;

  Denoiser den(world.model(), sched.T, obs, obs, model_config(c, kModel));
  add_curve(out, "loss", train(den, data, sched, train_config(c, c.train, kTrain)));
  out.checkpoint = den.params();

  DenoiserConfig bc = model_config(c, kBaselineModel);
  bc.with_estimator = true;
  bc.condition_on_estimate = false;
  Denoiser base(world.model(), sched.T, obs, obs, bc);
  add_curve(out, "baseline_loss", train_deterministic(base, data, train_config(c, c.baseline, kBaselineTrain)));

  // One fixed context: the front half at green 0.5. Its back half is red or blue.
  const auto poses = world.poses();
  const Eigen::VectorXd truth0 = world.scene(0.5, 0).raw.matrix(), truth1 = world.scene(0.5, 1).raw.matrix();
  const Eigen::VectorXd ctx_obs = world.observe(truth0, poses[0]);
  const Eigen::RowVector3d mode0 = mean_colors(Tensor({1, obs}, world.observe(truth0, poses[2]).array()), width).row(0);
  const Eigen::RowVector3d mode1 = mean_colors(Tensor({1, obs}, world.observe(truth1, poses[2]).array()), width).row(0);
  const Eigen::RowVector3d average = 0.5 * (mode0 + mode1);

  const Index n = c.eval_samples;
  const std::vector<ObsBatch> ctx{repeated(ctx_obs, poses[0], n)};
  const std::vector<Phi> trgt(n, poses[2]);
  const SampleResult s = sample(den, sched, ctx, trgt, sampler_config(c));
  const Eigen::MatrixXd colors = mean_colors(s.observation, width);
  Index n0 = 0, n1 = 0, near = 0;
  for (Index i = 0; i < n; ++i) {
    const double d0 = (colors.row(i) - mode0).norm(), d1 = (colors.row(i) - mode1).norm();
    (d0 < d1 ? n0 : n1) += 1;
    if (std::min(d0, d1) <= 0.15) ++near;
  }
  const double f0 = static_cast<double>(n0) / n, f1 = static_cast<double>(n1) / n, f_near = static_cast<double>(near) / n;

  const Tensor det = model->apply(base.estimate(base.params().values(), ctx, trgt).signals, trgt);
  const Eigen::RowVector3d det_color = mean_colors(slice(det, 0, 0, 1), width).row(0);
  const double det_gap = (det_color - average).norm();
  const double gap = structural_gap(*model, s, trgt);

  // Autoregressive: back view, then a side view conditioned on both.
  const Index n_ar = std::min<Index>(n, 20);
  const std::vector<Phi> ar_poses{poses[2], poses[1]};
  const auto chain = sample_autoregressive(den, sched, repeated(ctx_obs, poses[0], n_ar), ar_poses, sampler_config(c, 1));
  const std::vector<Phi> side(n_ar, poses[1]);
  const double cross = (model->apply(chain[0].signals, side).data() - chain[1].observation.data()).abs().mean();

  out.statistics["mode_colors"] = {std::vector<double>{mode0[0], mode0[1], mode0[2]}, std::vector<double>{mode1[0], mode1[1], mode1[2]}};
  out.statistics["mode_frequencies"] = {f0, f1};
  out.statistics["fraction_near_mode"] = f_near;
  out.statistics["deterministic_color"] = std::vector<double>{det_color[0], det_color[1], det_color[2]};
  out.statistics["deterministic_gap_to_average"] = det_gap;
  out.statistics["structural_gap"] = gap;
  out.statistics["autoregressive_cross_render_mae"] = cross;
  out.checks.push_back(check("mode0_frequency", f0, 0.3, f0 >= 0.3 && f0 <= 0.7));
  out.checks.push_back(check("mode1_frequency", f1, 0.3, f1 >= 0.3 && f1 <= 0.7));
  out.checks.push_back(check("samples_near_a_mode", f_near, 0.9, f_near >= 0.9));
  out.checks.push_back(check("deterministic_near_average", det_gap, 0.15, det_gap <= 0.15));
  out.checks.push_back(check("structural_gap", gap, 0.0, gap == 0.0));

  out.images.emplace_back("context_scene.ppm", scene_image(world.scene(0.5, 0)));
  out.images.emplace_back("context_view.ppm", strip_image(ctx_obs.transpose(), width));
  const Index shown = std::min<Index>(n, 16);
  out.images.emplace_back("sampled_back_views.ppm", strip_image(s.observation.as_matrix().topRows(shown), width));
  out.images.emplace_back("deterministic_back_view.ppm", strip_image(det.as_matrix().topRows(1), width));
  for (Index i = 0; i < std::min<Index>(n, 4); ++i) {
    const Eigen::ArrayXd raw = s.signals.as_matrix().row(i).transpose().array();
    out.images.emplace_back("sampled_scene_" + std::to_string(i) + ".ppm",
                            scene_image(ToyScene{model->config().grid_h, model->config().grid_w, raw}));
  }
}

// ---------------------------------------------------------------------------

void run_motion(const ExperimentConfig& c, ExperimentOutput& out) {
  const MotionWorld world;
  const auto model = std::dynamic_pointer_cast<const WarpModel>(world.model());
  const Index w = model->width();
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), MotionWorld::roles());
  const VarianceSchedule sched = c.schedule.make();
  if (c.write_dataset) out.dataset = data;

  Denoiser den(world.model(), sched.T, w * 3, w * 3, model_config(c, kModel));
  add_curve(out, "loss", train(den, data, sched, train_config(c, c.train, kTrain)));
  out.checkpoint = den.params();

  DenoiserConfig bc = model_config(c, kBaselineModel);
  bc.with_estimator = true;
  Denoiser base(world.model(), sched.T, w * 3, w * 3, bc);
  add_curve(out, "baseline_loss", train_deterministic(base, data, train_config(c, c.baseline, kBaselineTrain)));

  const Dataset test = generate_tuples(world, c.eval_samples, derive(c.seed, kEval), MotionWorld::roles());
  const Batch tb = make_batch(test);
  const Index n = tb.size();
  const std::vector<ObsBatch> ctx{tb.ctxt};

  // Zero motion must reproduce the colors exactly at every pose.
  double identity_gap = 0.0;
  {
    Eigen::MatrixXd sig = tb.ctxt.obs.to_matrix();
    sig.conservativeResize(Eigen::NoChange, w * 4);
    sig.rightCols(w).setZero();
    const Tensor zero_motion = Tensor::matrix(sig);
    for (const Phi& phi : world.poses()) {
      const std::vector<Phi> phis(n, phi);
      identity_gap = std::max(identity_gap, (model->apply(zero_motion, phis).data() - tb.ctxt.obs.data()).abs().maxCoeff());
    }
  }

  const Eigen::MatrixXd det = base.estimate(base.params().values(), ctx, tb.trgt.phis).signals.to_matrix();
  const Eigen::RowVectorXd profile = det.rightCols(w).cwiseAbs().colwise().mean();
  const double det_max = profile.maxCoeff();

  const SampleResult s = sample(den, sched, ctx, tb.trgt.phis, sampler_config(c));
  const Eigen::VectorXd mean_motion = s.signals.to_matrix().rightCols(w).rowwise().mean();
  Index near = 0, pos = 0, neg = 0;
  for (Index i = 0; i < n; ++i) {
    const double m = mean_motion[i];
    if (std::min(std::abs(m - MotionWorld::kSpeed), std::abs(m + MotionWorld::kSpeed)) <= 0.2) {
      ++near;
      (m > 0 ? pos : neg) += 1;
    }
  }
  const double f_near = static_cast<double>(near) / n, f_pos = static_cast<double>(pos) / n, f_neg = static_cast<double>(neg) / n;
  const double gap = structural_gap(*model, s, tb.trgt.phis);

  out.statistics["zero_motion_identity_gap"] = identity_gap;
  out.statistics["deterministic_motion_profile"] = std::vector<double>(profile.data(), profile.data() + profile.size());
  out.statistics["deterministic_max_pixel_motion"] = det_max;
  out.statistics["fraction_near_mode"] = f_near;
  out.statistics["mode_frequencies"] = {f_pos, f_neg};
  out.statistics["structural_gap"] = gap;
  out.checks.push_back(check("zero_motion_identity", identity_gap, 0.0, identity_gap == 0.0));
  out.checks.push_back(check("deterministic_collapse", det_max, 0.1, det_max < 0.1));
  out.checks.push_back(check("samples_near_a_mode", f_near, 0.8, f_near >= 0.8));
  out.checks.push_back(check("both_modes_present", std::min(f_pos, f_neg), 0.2, std::min(f_pos, f_neg) >= 0.2));
  out.checks.push_back(check("structural_gap", gap, 0.0, gap == 0.0));

  const Index shown = std::min<Index>(n, 16);
  out.images.emplace_back("context_frames.ppm", strip_image(tb.ctxt.obs.as_matrix().topRows(shown), w));
  out.images.emplace_back("true_target_frames.ppm", strip_image(tb.trgt.obs.as_matrix().topRows(shown), w));
  out.images.emplace_back("sampled_target_frames.ppm", strip_image(s.observation.as_matrix().topRows(shown), w));
}

// ---------------------------------------------------------------------------

void run_generator(const ExperimentConfig& c, ExperimentOutput& out) {
  const GeneratorWorld world;
  const auto model = std::dynamic_pointer_cast<const GeneratorModel>(world.model());
  const auto& gc = model->config();
  const Index patch = world.patch() * world.patch() * 3, full = gc.image_h * gc.image_w * 3;
  const Dataset data = generate_tuples(world, c.tuples, derive(c.seed, kData), world.roles());
  const VarianceSchedule sched = c.schedule.make();
  if (c.write_dataset) out.dataset = data;

  Denoiser den(world.model(), sched.T, patch, full, model_config(c, kModel));
  add_curve(out, "loss", train(den, data, sched, train_config(c, c.train, kTrain)));
  out.checkpoint = den.params();

  const Dataset test = generate_tuples(world, c.eval_samples, derive(c.seed, kEval), world.roles());
  const Batch tb = make_batch(test);
  const std::vector<ObsBatch> ctx{tb.ctxt};
  const SampleResult s = sample(den, sched, ctx, tb.trgt.phis, sampler_config(c));

  // How well samples reproduce their context patch, against the mean image as a reference.
  const Tensor seen = model->apply(s.signals, tb.ctxt.phis);
  const double ctx_err = (seen.data() - tb.ctxt.obs.data()).abs().mean();
  const Tensor mean_latent = Tensor::zeros({tb.size(), model->signal_size()});
  const double ctx_err_prior = (model->apply(mean_latent, tb.ctxt.phis).data() - tb.ctxt.obs.data()).abs().mean();
  const double full_err = (s.observation.data() - tb.trgt.obs.data()).abs().mean();
  const double gap = structural_gap(*model, s, tb.trgt.phis);

  out.statistics["context_patch_mae"] = ctx_err;
  out.statistics["context_patch_mae_zero_latent"] = ctx_err_prior;
  out.statistics["full_image_mae"] = full_err;
  out.statistics["structural_gap"] = gap;
  out.checks.push_back(check("structural_gap", gap, 0.0, gap == 0.0));

  auto image_of = [&](const Eigen::RowVectorXd& row) {
    Image img{gc.image_w, gc.image_h, 3, row.transpose().array()};
    Image big{gc.image_w * 8, gc.image_h * 8, 3, Eigen::ArrayXd(gc.image_w * gc.image_h * 64 * 3)};
    for (Index r = 0; r < big.height; ++r)
      for (Index col = 0; col < big.width; ++col)
        for (int k = 0; k < 3; ++k) big.values[(r * big.width + col) * 3 + k] = img.at(r / 8, col / 8, k);
    return big;
  };
  for (Index i = 0; i < std::min<Index>(tb.size(), 4); ++i) {
    out.images.emplace_back("true_image_" + std::to_string(i) + ".ppm", image_of(tb.trgt.obs.as_matrix().row(i)));
    out.images.emplace_back("sampled_image_" + std::to_string(i) + ".ppm", image_of(s.observation.as_matrix().row(i)));
  }
}

// ---------------------------------------------------------------------------

void run_measures(const ExperimentConfig& c, ExperimentOutput& out) {
  MeasureSuiteConfig mc;
  mc.seed = c.seed;
  mc.n_samples = c.eval_samples;
  mc.n_mc = c.eval_samples;
  out.checks = run_measure_suite(mc);
  out.curves.emplace_back("loss", std::vector<double>{});
}

} // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"linear-gaussian", "discrete-prop1", "novel-loss",     "toy-render",
                                              "motion-warp",     "generator-inversion", "measure-suite"};
  return kinds;
}

ExperimentConfig default_config(std::string_view kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.out_dir = "runs/" + std::string(kind);
  c.baseline.steps = 0;
  if (kind == "linear-gaussian") {
    c.schedule.reverse_step = ReverseStep::ddpm_posterior;
    c.train.steps = 20000;
    c.eval_samples = 2000;
  } else if (kind == "discrete-prop1") {
    c.train.steps = 10000;
    c.lambda = 0.0;
    c.eval_samples = 5000;
  } else if (kind == "novel-loss") {
    c.train.steps = 5000;
    c.eval_samples = 2000;
  } else if (kind == "toy-render") {
    c.model.condition_on_estimate = true;
    c.baseline.steps = 5000;
  } else if (kind == "motion-warp") {
    c.smoothness = 1.0;
    c.tuples = 200000;
    c.baseline.steps = 5000;
    c.baseline.batch_size = 256;
    c.baseline.final_lr_fraction = 0.01;
  } else if (kind == "generator-inversion") {
    c.train.steps = 3000;
    c.lambda = 0.0;
    c.eval_samples = 100;
  } else if (kind == "measure-suite") {
    c.train.steps = 0;
    c.tuples = 0;
    c.eval_samples = 100000;
  } else {
    throw std::invalid_argument("unknown experiment kind '" + std::string(kind) + "'");
  }
  return c;
}

namespace {

ojson optim_json(const OptimConfig& o) {
  return {{"steps", o.steps},       {"batch_size", o.batch_size}, {"lr", o.adam.lr},
          {"beta1", o.adam.beta1},  {"beta2", o.adam.beta2},      {"eps", o.adam.eps},
          {"final_lr_fraction", o.final_lr_fraction}};
}

void optim_from(const ojson& j, OptimConfig& o) {
  o.steps = j.value("steps", o.steps);
  o.batch_size = j.value("batch_size", o.batch_size);
  o.adam.lr = j.value("lr", o.adam.lr);
  o.adam.beta1 = j.value("beta1", o.adam.beta1);
  o.adam.beta2 = j.value("beta2", o.adam.beta2);
  o.adam.eps = j.value("eps", o.adam.eps);
  o.final_lr_fraction = j.value("final_lr_fraction", o.final_lr_fraction);
}

} // namespace

ojson to_json(const ExperimentConfig& c) {
  const DenoiserConfig& m = c.model;
  return {{"kind", c.kind},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"schedule",
           {{"T", c.schedule.T}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end},
            {"reverse_step", to_string(c.schedule.reverse_step)}}},
          {"model",
           {{"hidden", m.hidden},
            {"time_features", m.time_features},
            {"with_estimator", m.with_estimator},
            {"condition_on_estimate", m.condition_on_estimate},
            {"feature_channels", m.feature_channels},
            {"estimator_hidden", m.estimator_hidden},
            {"output_scale", m.output_scale}}},
          {"train", optim_json(c.train)},
          {"baseline", optim_json(c.baseline)},
          {"lambda", c.lambda},
          {"smoothness", c.smoothness},
          {"tuples", c.tuples},
          {"eval_samples", c.eval_samples},
          {"write_dataset", c.write_dataset}};
}

ExperimentConfig config_from_json(const ojson& j) {
  if (!j.is_object() || !j.contains("kind")) throw std::invalid_argument("experiment config needs a 'kind'");
  ExperimentConfig c = default_config(j.at("kind").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.T = s.value("T", c.schedule.T);
    c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
    c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
    if (s.contains("reverse_step")) c.schedule.reverse_step = reverse_step_from_string(s.at("reverse_step").get<std::string>());
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.hidden = m.value("hidden", c.model.hidden);
    c.model.time_features = m.value("time_features", c.model.time_features);
    c.model.with_estimator = m.value("with_estimator", c.model.with_estimator);
    c.model.condition_on_estimate = m.value("condition_on_estimate", c.model.condition_on_estimate);
    c.model.feature_channels = m.value("feature_channels", c.model.feature_channels);
    c.model.estimator_hidden = m.value("estimator_hidden", c.model.estimator_hidden);
    c.model.output_scale = m.value("output_scale", c.model.output_scale);
  }
  if (j.contains("train")) optim_from(j.at("train"), c.train);
  if (j.contains("baseline")) optim_from(j.at("baseline"), c.baseline);
  c.lambda = j.value("lambda", c.lambda);
  c.smoothness = j.value("smoothness", c.smoothness);
  c.tuples = j.value("tuples", c.tuples);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  c.write_dataset = j.value("write_dataset", c.write_dataset);
  if (c.eval_samples < 1 && c.kind != "measure-suite") throw std::invalid_argument("eval_samples must be positive");
  return c;
}

PosteriorComparison compare_posteriors(const Eigen::MatrixXd& samples, const GaussianPosterior& oracle, Rng& rng, int resamples) {
  if (samples.rows() == 0) throw std::invalid_argument("compare_posteriors: no samples");
  if (samples.cols() != oracle.mean.size())
    throw std::invalid_argument("compare_posteriors: samples have dimension " + std::to_string(samples.cols()) + ", oracle " +
                                std::to_string(oracle.mean.size()));
  PosteriorComparison out;
  for (Index d = 0; d < samples.cols(); ++d) {
    const double mu = oracle.mean[d], sd = std::sqrt(std::max(oracle.cov(d, d), 0.0));
    // A coordinate pinned by the observation is a point mass.
    auto w1 = [mu, sd](std::span<const double> x) {
      if (sd < 1e-9) {
        double s = 0.0;
        for (double v : x) s += std::abs(v - mu);
        return s / static_cast<double>(x.size());
      }
      return wasserstein1_to_normal(x, mu, sd);
    };
    std::vector<double> col(samples.col(d).data(), samples.col(d).data() + samples.rows());
    out.distance.push_back(w1(col));
    out.stderr_.push_back(bootstrap_stderr(col, w1, resamples, rng));
  }
  return out;
}

PosteriorComparison compare_posteriors(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& oracle_samples, Rng& rng,
                                       int resamples) {
  if (samples.rows() == 0 || oracle_samples.rows() == 0) throw std::invalid_argument("compare_posteriors: no samples");
  if (samples.cols() != oracle_samples.cols())
    throw std::invalid_argument("compare_posteriors: samples have dimension " + std::to_string(samples.cols()) + ", oracle " +
                                std::to_string(oracle_samples.cols()));
  PosteriorComparison out;
  for (Index d = 0; d < samples.cols(); ++d) {
    const std::vector<double> a(samples.col(d).data(), samples.col(d).data() + samples.rows());
    const std::vector<double> b(oracle_samples.col(d).data(), oracle_samples.col(d).data() + oracle_samples.rows());
    out.distance.push_back(wasserstein1(a, b));
    out.stderr_.push_back(bootstrap_stderr(a, [&b](std::span<const double> x) { return wasserstein1(x, b); }, resamples, rng));
  }
  return out;
}

PosteriorComparison compare_posteriors(std::span<const Index> labels, const Eigen::VectorXd& truth, Rng& rng, int resamples) {
  if (labels.empty()) throw std::invalid_argument("compare_posteriors: no samples");
  auto tv = [&truth](std::span<const double> x) {
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(truth.size());
    for (double l : x) freq[static_cast<Index>(l)] += 1.0 / static_cast<double>(x.size());
    return total_variation(freq, truth);
  };
  std::vector<double> as_real;
  for (Index l : labels) {
    if (l < 0 || l >= truth.size()) throw std::invalid_argument("compare_posteriors: label outside the oracle's support");
    as_real.push_back(static_cast<double>(l));
  }
  PosteriorComparison out;
  out.distance.push_back(tv(as_real));
  out.stderr_.push_back(bootstrap_stderr(as_real, tv, resamples, rng));
  return out;
}

double structural_gap(const ForwardModel& model, const SampleResult& result, std::span<const Phi> phis) {
  return (model.apply(result.signals, phis).data() - result.observation.data()).abs().maxCoeff();
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  ExperimentOutput out;
  try {
    if (config.kind == "linear-gaussian") run_linear_gaussian(config, out);
    else if (config.kind == "discrete-prop1") run_discrete(config, out);
    else if (config.kind == "novel-loss") run_novel_loss(config, out);
    else if (config.kind == "toy-render") run_toy_render(config, out);
    else if (config.kind == "motion-warp") run_motion(config, out);
    else if (config.kind == "generator-inversion") run_generator(config, out);
    else if (config.kind == "measure-suite") run_measures(config, out);
    else throw std::invalid_argument("unknown experiment kind '" + config.kind + "'");
  } catch (const TrainingDiverged& e) {
    out.failed = true;
    out.failed_step = e.step();
    out.error = e.what();
  }
  return out;
}

} // namespace fmdiff
