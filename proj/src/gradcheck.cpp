#include "fmdiff/gradcheck.hpp"

#include "fmdiff/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace fmdiff {

void GradCheckResult::merge(const GradCheckResult& other) {
  points += other.points;
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
  max_abs_error = std::max(max_abs_error, other.max_abs_error);
  pass = pass && other.pass;
}

namespace {

double projected(const TapedFn& f, const std::vector<Tensor>& inputs, const Eigen::ArrayXd& r) {
  return (f(inputs).data() * r).sum();
}

} // namespace

GradCheckResult check_gradient(const std::string& name, const TapedFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                               const GradCheckOptions& options) {
  const Tensor probe = f(inputs);
  const Index n_out = probe.numel();

  std::vector<Eigen::ArrayXd> projections{rng.normal_array(n_out)};
  if (options.all_outputs)
    for (Index k = 0; k < n_out; ++k) projections.push_back(Eigen::VectorXd::Unit(n_out, k).array());

  GradCheckResult res{name, 1};
  auto compare = [&](double g, double fd) {
    const double abs_err = std::abs(g - fd);
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    const double scale = std::max(std::abs(g), std::abs(fd));
    const double rel = scale > 0.0 ? abs_err / scale : 0.0;
    // Elements this small pass on the absolute bound and would only add noise to the reported figure.
    if (scale * options.rel_tol > options.abs_tol) res.max_rel_error = std::max(res.max_rel_error, std::isfinite(rel) ? rel : 1.0);
    if (!(abs_err <= options.abs_tol) && !(rel < options.rel_tol)) {
      res.pass = false;
      res.max_rel_error = std::max(res.max_rel_error, std::isfinite(rel) ? rel : 1.0);
    }
  };

  for (const Eigen::ArrayXd& r : projections) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x));
    const Tensor out = f(leaves);
    const Gradients grads = tape.backward(sum(mul(out, Tensor(out.shape(), r))));

    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Eigen::ArrayXd g = grads[leaves[i]].data();
      for (Index j = 0; j < inputs[i].numel(); ++j) {
        std::vector<Tensor> plus = inputs, minus = inputs;
        Eigen::ArrayXd dp = inputs[i].data(), dm = inputs[i].data();
        dp[j] += options.h;
        dm[j] -= options.h;
        plus[i] = Tensor(inputs[i].shape(), std::move(dp));
        minus[i] = Tensor(inputs[i].shape(), std::move(dm));
        const double fd = (projected(f, plus, r) - projected(f, minus, r)) / (2.0 * options.h);
        compare(g[j], fd);
      }
    }
  }
  return res;
}

namespace {

struct Case {
  std::string name;
  TapedFn f;
  std::function<std::vector<Tensor>(Rng&)> inputs;
};

Tensor normal(Rng& rng, Shape shape) {
  const Index n = numel_of(shape);
  return Tensor(std::move(shape), rng.normal_array(n));
}

Tensor positive(Rng& rng, Shape shape) {
  Eigen::ArrayXd d(numel_of(shape));
  for (auto& v : d) v = 0.5 + 1.5 * rng.uniform();
  return Tensor(std::move(shape), std::move(d));
}

std::vector<Case> op_cases() {
  static const std::vector<Index> gather_idx{2, 0, 2, 1};
  static const std::vector<Index> scatter_idx{0, 2, 0, 1};
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& rng) { return std::vector<Tensor>{normal(rng, a), normal(rng, b)}; };
  };
  auto one = [](Shape a) { return [a](Rng& rng) { return std::vector<Tensor>{normal(rng, a)}; }; };
  auto one_pos = [](Shape a) { return [a](Rng& rng) { return std::vector<Tensor>{positive(rng, a)}; }; };
  using S = std::span<const Tensor>;
  return {
      {"add", [](S x) { return add(x[0], x[1]); }, two({3, 4}, {3, 4})},
      {"add_broadcast", [](S x) { return add(x[0], x[1]); }, two({4, 3}, {3})},
      {"sub", [](S x) { return sub(x[0], x[1]); }, two({3, 4}, {1, 4})},
      {"mul", [](S x) { return mul(x[0], x[1]); }, two({2, 3, 2}, {1, 3, 2})},
      {"div", [](S x) { return div(x[0], x[1]); },
       [](Rng& rng) { return std::vector<Tensor>{normal(rng, {3, 4}), positive(rng, {3, 4})}; }},
      {"scale", [](S x) { return scale(x[0], -1.7); }, one({5})},
      {"shift", [](S x) { return shift(x[0], 0.3); }, one({5})},
      {"neg", [](S x) { return neg(x[0]); }, one({5})},
      {"matmul", [](S x) { return matmul(x[0], x[1]); }, two({3, 4}, {4, 2})},
      {"transpose", [](S x) { return transpose(x[0]); }, one({3, 4})},
      {"reshape", [](S x) { return reshape(x[0], {3, 4}); }, one({2, 6})},
      {"concat", [](S x) { return concat({x[0], x[1]}, 1); }, two({2, 3}, {2, 2})},
      {"slice", [](S x) { return slice(x[0], 1, 1, 4); }, one({3, 5})},
      {"sum", [](S x) { return sum(x[0]); }, one({3, 4})},
      {"sum_axis0", [](S x) { return sum(x[0], 0); }, one({3, 4})},
      {"sum_axis1", [](S x) { return sum(x[0], 1); }, one({3, 4})},
      {"mean", [](S x) { return mean(x[0]); }, one({3, 4})},
      {"cumsum", [](S x) { return cumsum(x[0]); }, one({3, 5})},
      {"exp", [](S x) { return exp(x[0]); }, one({6})},
      {"log", [](S x) { return log(x[0]); }, one_pos({6})},
      {"sqrt", [](S x) { return sqrt(x[0]); }, one_pos({6})},
      {"square", [](S x) { return square(x[0]); }, one({6})},
      {"relu", [](S x) { return relu(x[0]); }, one({6})},
      {"sigmoid", [](S x) { return sigmoid(x[0]); }, one({6})},
      {"softplus", [](S x) { return softplus(x[0]); }, one({6})},
      {"tanh", [](S x) { return tanh(x[0]); }, one({6})},
      {"gather", [](S x) { return gather(x[0], gather_idx); }, one({3, 2})},
      {"scatter_add", [](S x) { return scatter_add(x[0], scatter_idx, x[1]); }, two({3, 2}, {4, 2})},
  };
}

std::vector<GradCheckResult> run_cases(const std::vector<Case>& cases, std::uint64_t seed, int points,
                                       const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  const Rng root(seed);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckResult total{cases[c].name, 0};
    for (int p = 0; p < points; ++p) {
      Rng rng = root.split(c).split(static_cast<std::uint64_t>(p));
      const auto inputs = cases[c].inputs(rng);
      total.merge(check_gradient(cases[c].name, cases[c].f, inputs, rng, options));
    }
    out.push_back(total);
  }
  return out;
}

} // namespace

std::vector<GradCheckResult> op_gradient_suite(std::uint64_t seed, int points, double rel_tol) {
  GradCheckOptions opt;
  opt.rel_tol = rel_tol;
  return run_cases(op_cases(), seed, points, opt);
}

std::vector<GradCheckResult> model_gradient_suite(std::uint64_t seed, int points, double rel_tol) {
  using S = std::span<const Tensor>;
  constexpr Index B = 2;
  auto render = std::make_shared<RenderModel>();
  auto warp = std::make_shared<WarpModel>();
  auto gen = std::make_shared<GeneratorModel>();
  Rng op_rng = Rng(seed).split(1000);
  auto lin = std::make_shared<LinearModel>(std::vector<Eigen::MatrixXd>{op_rng.normal_matrix(2, 4), op_rng.normal_matrix(2, 4)},
                                           std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)});

  // Phis are redrawn per point; the closures read them through shared state.
  auto phis = std::make_shared<std::vector<Phi>>();
  auto with_phis = [phis](std::shared_ptr<const ForwardModel> m) {
    return [m, phis](S x) { return m->apply(x[0], *phis); };
  };

  std::vector<Case> cases{
      {"render", with_phis(render),
       [=](Rng& rng) {
         phis->clear();
         for (Index b = 0; b < B; ++b)
           phis->push_back(CameraPose{2.0 * M_PI * rng.uniform(), 0.4 * (rng.uniform() - 0.5)}.to_phi());
         return std::vector<Tensor>{normal(rng, {B, render->signal_size()})};
       }},
      {"warp", with_phis(warp),
       [=](Rng& rng) {
         phis->clear();
         for (Index b = 0; b < B; ++b) phis->push_back(Phi::Constant(1, rng.uniform()));
         const Index w = warp->width();
         Eigen::ArrayXd d(B * w * 4);
         for (Index b = 0; b < B; ++b) {
           for (Index k = 0; k < w * 3; ++k) d[b * w * 4 + k] = rng.uniform();
           for (Index k = 0; k < w; ++k) d[b * w * 4 + w * 3 + k] = 1.5 * rng.normal();
         }
         return std::vector<Tensor>{Tensor({B, w * 4}, std::move(d))};
       }},
      {"generator", with_phis(gen),
       [=](Rng& rng) {
         phis->clear();
         const auto& c = gen->config();
         for (Index b = 0; b < B; ++b)
           phis->push_back(PatchCoords{static_cast<Index>(rng.below(c.image_h - 2)), static_cast<Index>(rng.below(c.image_w - 2)), 3, 3}
                               .to_phi());
         return std::vector<Tensor>{normal(rng, {B, gen->signal_size()})};
       }},
      {"linear", with_phis(lin),
       [=](Rng& rng) {
         phis->clear();
         for (Index b = 0; b < B; ++b) phis->push_back(LinearModel::pose(static_cast<Index>(rng.below(2))));
         return std::vector<Tensor>{normal(rng, {B, lin->signal_size()})};
       }},
  };
  GradCheckOptions opt;
  opt.rel_tol = rel_tol;
  opt.all_outputs = true;
  return run_cases(cases, seed, points, opt);
}

} // namespace fmdiff
