#include "fmdiff/measures.hpp"

#include "fmdiff/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fmdiff {

namespace {

// Welford running mean; exact for constant input.
struct Running {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double stderr_() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

} // namespace

EmpiricalMeasure::EmpiricalMeasure(Eigen::MatrixXd samples, std::optional<Eigen::VectorXd> weights)
    : samples_(std::move(samples)), weights_(std::move(weights)) {
  if (!weights_) return;
  if (weights_->size() != samples_.rows())
    throw std::invalid_argument("EmpiricalMeasure: " + std::to_string(weights_->size()) + " weights for " +
                                std::to_string(samples_.rows()) + " samples");
  if ((weights_->array() < 0.0).any()) throw std::invalid_argument("EmpiricalMeasure: negative weight");
  if (std::abs(weights_->sum() - 1.0) > 1e-12) throw std::invalid_argument("EmpiricalMeasure: weights do not sum to 1");
  cumulative_.resize(weights_->size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights_->size(); ++i) cumulative_[i] = acc += (*weights_)[i];
}

Eigen::VectorXd EmpiricalMeasure::weights() const {
  if (weights_) return *weights_;
  return Eigen::VectorXd::Constant(size(), 1.0 / static_cast<double>(size()));
}

double EmpiricalMeasure::weight(Eigen::Index i) const {
  return weights_ ? (*weights_)[i] : 1.0 / static_cast<double>(size());
}

std::vector<double> EmpiricalMeasure::coordinate(Eigen::Index c) const {
  std::vector<double> out(samples_.rows());
  for (Eigen::Index i = 0; i < samples_.rows(); ++i) out[i] = samples_(i, c);
  return out;
}

Eigen::Index EmpiricalMeasure::draw(Rng& rng) const {
  if (empty()) throw std::invalid_argument("cannot draw from an empty measure");
  if (!weights_) return static_cast<Eigen::Index>(rng.below(size()));
  const double u = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<Eigen::Index>(it - cumulative_.begin(), size() - 1);
}

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const PointMap& f) {
  if (mu.empty()) return EmpiricalMeasure(Eigen::MatrixXd(0, 0), mu.explicit_weights());
  Eigen::VectorXd first = f(mu.samples().row(0).transpose());
  Eigen::MatrixXd out(mu.size(), first.size());
  out.row(0) = first.transpose();
  for (Eigen::Index i = 1; i < mu.size(); ++i) {
    Eigen::VectorXd y = f(mu.samples().row(i).transpose());
    if (y.size() != first.size()) throw std::invalid_argument("pushforward: map changes output dimension between samples");
    out.row(i) = y.transpose();
  }
  return EmpiricalMeasure(std::move(out), mu.explicit_weights());
}

DensityFn standard_normal_density(Eigen::Index dim) {
  const double z = std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(dim));
  return {[dim, z](const Eigen::VectorXd& x) -> std::optional<double> {
            if (x.size() != dim) throw std::invalid_argument("density: dimension mismatch");
            return std::exp(-0.5 * x.squaredNorm()) / z;
          },
          1.0};
}

DensityFn uniform_density(double lo, double hi, Eigen::Index dim) {
  if (!(hi > lo)) throw std::invalid_argument("uniform_density needs lo < hi");
  const double value = std::pow(1.0 / (hi - lo), static_cast<double>(dim));
  return {[=](const Eigen::VectorXd& x) -> std::optional<double> {
            if (x.size() != dim) throw std::invalid_argument("density: dimension mismatch");
            return ((x.array() >= lo) && (x.array() <= hi)).all() ? value : 0.0;
          },
          1.0};
}

DensityFn change_of_variables_density(DensityFn p, PointMap f_inv, std::function<double(const Eigen::VectorXd&)> jac_det_f_inv) {
  return {[p = std::move(p), f_inv = std::move(f_inv),
           jac = std::move(jac_det_f_inv)](const Eigen::VectorXd& y) -> std::optional<double> {
            const double j = jac(y);
            if (!std::isfinite(j)) return std::nullopt;
            const auto base = p(f_inv(y));
            if (!base) return std::nullopt;
            return *base * std::abs(j);
          },
          p.normalizer};
}

double integrate_density_1d(const DensityFn& p, std::span<const double> grid) {
  if (grid.size() < 2) throw std::invalid_argument("integration grid needs two nodes");
  double total = 0.0;
  double prev = p(grid[0]).value_or(0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] >= grid[i - 1])) throw std::invalid_argument("integration grid must be sorted");
    const double cur = p(grid[i]).value_or(0.0);
    total += 0.5 * (prev + cur) * (grid[i] - grid[i - 1]);
    prev = cur;
  }
  return total;
}

std::vector<double> uniform_grid(double lo, double hi, Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("grid needs at least one interval");
  std::vector<double> g(n + 1);
  for (Eigen::Index i = 0; i <= n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  g.back() = hi;
  return g;
}

std::vector<double> power_grid(double half_width, Eigen::Index n, double power) {
  std::vector<double> g = uniform_grid(-1.0, 1.0, n);
  for (double& s : g) s = half_width * std::copysign(std::pow(std::abs(s), power), s);
  return g;
}

LeftInverseReport verify_left_inverse(const EmpiricalMeasure& mu, const PointMap& f, const PointMap& f_left_inv,
                                      double tolerance) {
  if (mu.empty()) throw std::invalid_argument("verify_left_inverse: empty measure");
  const EmpiricalMeasure back = pushforward(pushforward(mu, f), f_left_inv);
  if (back.dim() != mu.dim())
    throw std::invalid_argument("verify_left_inverse: round trip maps dimension " + std::to_string(mu.dim()) + " to " +
                                std::to_string(back.dim()));
  LeftInverseReport r;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double err = (back.samples().row(i) - mu.samples().row(i)).cwiseAbs().maxCoeff();
    if (!(err <= r.max_error) || r.worst_index < 0) {
      r.max_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
      r.worst_index = i;
    }
  }
  r.ok = r.max_error <= tolerance;
  r.distance = two_sample_distance(back, mu, TwoSampleKind::wasserstein1_1d);
  return r;
}

double SliceIdentityResult::combined_stderr() const { return std::hypot(lhs_stderr, rhs_stderr); }

double SliceIdentityResult::z() const {
  const double diff = std::abs(lhs - rhs);
  const double se = combined_stderr();
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / se;
}

namespace {

void check_slice_inputs(const EmpiricalMeasure& mu_t, const TotalGrid& grid) {
  if (mu_t.empty()) throw std::invalid_argument("slice identity: empty measure");
  if (grid.size() <= 0) throw std::invalid_argument("slice identity: empty grid");
  if (mu_t.dim() != grid.size())
    throw std::invalid_argument("slice identity: total observations have " + std::to_string(mu_t.dim()) +
                                " entries, grid needs " + std::to_string(grid.size()));
}

} // namespace

SliceIdentityResult slice_identity_check(const SliceFn& g, const EmpiricalMeasure& mu_t, const TotalGrid& grid,
                                         Eigen::Index n_mc, Rng& rng) {
  if (n_mc <= 0) throw std::invalid_argument("slice identity: n_mc must be positive");
  check_slice_inputs(mu_t, grid);
  Rng lhs_rng = rng.split(0), rhs_rng = rng.split(1);
  rng = rng.split(2);

  Running lhs, rhs;
  Eigen::VectorXd total;
  for (Eigen::Index i = 0; i < n_mc; ++i) {
    total = mu_t.samples().row(mu_t.draw(lhs_rng)).transpose();
    const auto x = static_cast<Eigen::Index>(lhs_rng.below(grid.width));
    const auto y = static_cast<Eigen::Index>(lhs_rng.below(grid.height));
    const auto phi = static_cast<Eigen::Index>(lhs_rng.below(grid.poses));
    lhs.add(g(x, y, phi, total));
  }
  for (Eigen::Index i = 0; i < n_mc; ++i) {
    total = mu_t.samples().row(mu_t.draw(rhs_rng)).transpose();
    const auto phi = static_cast<Eigen::Index>(rhs_rng.below(grid.poses));
    Running slice;
    for (Eigen::Index y = 0; y < grid.height; ++y)
      for (Eigen::Index x = 0; x < grid.width; ++x) slice.add(g(x, y, phi, total));
    rhs.add(slice.mean);
  }
  return {lhs.mean, lhs.stderr_(), rhs.mean, rhs.stderr_()};
}

double slice_identity_exact(const SliceFn& g, const EmpiricalMeasure& mu_t, const TotalGrid& grid) {
  check_slice_inputs(mu_t, grid);
  double total_mean = 0.0;
  for (Eigen::Index i = 0; i < mu_t.size(); ++i) {
    const Eigen::VectorXd total = mu_t.samples().row(i).transpose();
    Running r;
    for (Eigen::Index phi = 0; phi < grid.poses; ++phi)
      for (Eigen::Index y = 0; y < grid.height; ++y)
        for (Eigen::Index x = 0; x < grid.width; ++x) r.add(g(x, y, phi, total));
    total_mean += mu_t.weight(i) * r.mean;
  }
  return total_mean;
}

std::string_view to_string(TwoSampleKind kind) {
  switch (kind) {
  case TwoSampleKind::energy: return "energy";
  case TwoSampleKind::ks_per_coordinate: return "ks_per_coordinate";
  case TwoSampleKind::wasserstein1_1d: return "wasserstein1_1d";
  }
  return "?";
}

TwoSampleKind two_sample_kind_from_string(std::string_view name) {
  for (auto k : {TwoSampleKind::energy, TwoSampleKind::ks_per_coordinate, TwoSampleKind::wasserstein1_1d})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown two-sample distance '" + std::string(name) + "'");
}

double two_sample_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, TwoSampleKind kind) {
  if (a.empty() || b.empty()) throw std::invalid_argument("two_sample_distance: empty measure");
  if (a.dim() != b.dim())
    throw std::invalid_argument("two_sample_distance: dimensions " + std::to_string(a.dim()) + " and " +
                                std::to_string(b.dim()));
  if (kind == TwoSampleKind::energy) {
    if (a.dim() == 1 && !a.explicit_weights() && !b.explicit_weights()) {
      const auto xa = a.coordinate(0), xb = b.coordinate(0);
      return energy_distance_1d(xa, xb);
    }
    return energy_distance(a.samples(), b.samples(), a.weights(), b.weights());
  }
  const Eigen::VectorXd wa = a.weights(), wb = b.weights();
  const std::span<const double> sa(wa.data(), wa.size()), sb(wb.data(), wb.size());
  double worst = 0.0;
  for (Eigen::Index c = 0; c < a.dim(); ++c) {
    const auto xa = a.coordinate(c), xb = b.coordinate(c);
    const double d = kind == TwoSampleKind::ks_per_coordinate ? ks_statistic(xa, xb, sa, sb) : wasserstein1(xa, xb, sa, sb);
    worst = std::max(worst, d);
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

CheckResult check(std::string name, double statistic, double threshold, bool pass, double se = 0.0) {
  return {std::move(name), statistic, se, threshold, pass};
}

// Smooth random fields on the grid, each a sinusoid of random frequency and phase.
EmpiricalMeasure random_totals(const TotalGrid& grid, Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd t(n, grid.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    const double d = 2.0 * std::numbers::pi * rng.uniform();
    for (Eigen::Index phi = 0; phi < grid.poses; ++phi)
      for (Eigen::Index y = 0; y < grid.height; ++y)
        for (Eigen::Index x = 0; x < grid.width; ++x)
          t(i, grid.index(x, y, phi)) = std::sin(a * x + b * y + c * phi + d);
  }
  return EmpiricalMeasure(std::move(t));
}

// 3x3 box blur of one pose slice at (x, y), clamped at the border.
double blurred(const TotalGrid& grid, const Eigen::VectorXd& t, Eigen::Index x, Eigen::Index y, Eigen::Index phi) {
  double s = 0.0;
  int n = 0;
  for (Eigen::Index dy = -1; dy <= 1; ++dy)
    for (Eigen::Index dx = -1; dx <= 1; ++dx) {
      const Eigen::Index xx = x + dx, yy = y + dy;
      if (xx < 0 || yy < 0 || xx >= grid.width || yy >= grid.height) continue;
      s += t[grid.index(xx, yy, phi)];
      ++n;
    }
  return s / n;
}

} // namespace

std::vector<CheckResult> run_measure_suite(const MeasureSuiteConfig& config) {
  std::vector<CheckResult> out;
  const Rng root(config.seed);
  const Eigen::Index n = config.n_samples;

  // Delta-supported embedding x -> (x, 0).
  Rng r0 = root.split(0);
  EmpiricalMeasure normal(r0.normal_matrix(n, 1));
  const PointMap embed = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(2);
    y << x[0], 0.0;
    return y;
  };
  const PointMap project = [](const Eigen::VectorXd& y) { return vec1(y[0]); };
  const EmpiricalMeasure embedded = pushforward(normal, embed);
  const double off_line = embedded.samples().col(1).cwiseAbs().maxCoeff();
  out.push_back(check("embedding_concentration", off_line, 0.0, off_line == 0.0));

  const LeftInverseReport embed_back = verify_left_inverse(normal, embed, project);
  out.push_back(check("left_inverse_embedding", embed_back.max_error, 0.0, embed_back.ok && embed_back.distance == 0.0));
  const LeftInverseReport identity_back = verify_left_inverse(normal, [](const Eigen::VectorXd& x) { return x; },
                                                              [](const Eigen::VectorXd& x) { return x; });
  out.push_back(check("left_inverse_identity", identity_back.max_error, 0.0, identity_back.ok && identity_back.distance == 0.0));

  // Cube map on uniform[-1, 1].
  Rng r1 = root.split(1);
  Eigen::MatrixXd u(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) u(i, 0) = 2.0 * r1.uniform() - 1.0;
  const EmpiricalMeasure uniform(std::move(u));
  const PointMap cube = [](const Eigen::VectorXd& x) { return vec1(x[0] * x[0] * x[0]); };
  const PointMap cbrt = [](const Eigen::VectorXd& y) { return vec1(std::cbrt(y[0])); };
  const LeftInverseReport cube_back = verify_left_inverse(uniform, cube, cbrt, 1e-12);
  out.push_back(check("left_inverse_cube", cube_back.max_error, 1e-12, cube_back.ok));

  {
    // 20 equal bins on [-1, 1]; the two bins touching the singularity at 0 are
    // left out and the rest tested conditionally on landing outside them.
    const int bins = 20;
    const EmpiricalMeasure cubed = pushforward(uniform, cube);
    std::vector<double> counts(bins, 0.0), expected(bins, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int b = std::clamp(static_cast<int>(std::floor((cubed.samples()(i, 0) + 1.0) / 2.0 * bins)), 0, bins - 1);
      counts[b] += 1.0;
    }
    std::array<bool, 20> use{};
    double used_count = 0.0, used_mass = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double lo = -1.0 + 2.0 * b / bins, hi = -1.0 + 2.0 * (b + 1) / bins;
      expected[b] = 0.5 * (std::cbrt(hi) - std::cbrt(lo)); // exact mass of the bin
      use[b] = b != bins / 2 - 1 && b != bins / 2;
      if (use[b]) {
        used_count += counts[b];
        used_mass += expected[b];
      }
    }
    for (double& e : expected) e *= used_count / used_mass;
    const ChiSquareResult chi = chi_square_gof(counts, expected, use, config.alpha);
    out.push_back(check("cube_pushforward_chi_square", chi.statistic, chi.critical, chi.pass));
  }

  // Change of variables.
  const DensityFn doubled = change_of_variables_density(standard_normal_density(), [](const Eigen::VectorXd& y) {
    return Eigen::VectorXd(0.5 * y);
  }, [](const Eigen::VectorXd&) { return 0.5; });
  double pointwise = 0.0;
  for (double y : uniform_grid(-10.0, 10.0, 2000)) {
    const double exact = std::exp(-y * y / 8.0) / std::sqrt(8.0 * std::numbers::pi);
    pointwise = std::max(pointwise, std::abs(*doubled(y) - exact));
  }
  out.push_back(check("change_of_variables_scaling_pointwise", pointwise, 1e-12, pointwise <= 1e-12));
  const auto wide = uniform_grid(-40.0, 40.0, 80000);
  const double doubled_mass = integrate_density_1d(doubled, wide);
  out.push_back(check("change_of_variables_scaling_integral", std::abs(doubled_mass - 1.0), 1e-3,
                      std::abs(doubled_mass - 1.0) <= 1e-3));

  const DensityFn cube_density = change_of_variables_density(uniform_density(-1.0, 1.0), cbrt, [](const Eigen::VectorXd& y) {
    return 1.0 / (3.0 * std::pow(std::cbrt(std::abs(y[0])), 2.0));
  });
  const double blowup = *cube_density(0.001) / *cube_density(0.5);
  out.push_back(check("change_of_variables_cube_blowup", blowup, 10.0, blowup > 10.0));
  const double cube_mass = integrate_density_1d(cube_density, power_grid(1.0, 20000, 3.0));
  out.push_back(check("change_of_variables_cube_integral", std::abs(cube_mass - 1.0), 1e-3, std::abs(cube_mass - 1.0) <= 1e-3));

  // Functoriality on samples.
  const PointMap shift_scale = [](const Eigen::VectorXd& y) { return Eigen::VectorXd(2.0 * y.array() + 1.0); };
  const EmpiricalMeasure twice = pushforward(pushforward(uniform, cube), shift_scale);
  const EmpiricalMeasure once = pushforward(uniform, [&](const Eigen::VectorXd& x) { return shift_scale(cube(x)); });
  const double functor_gap = (twice.samples() - once.samples()).cwiseAbs().maxCoeff();
  out.push_back(check("pushforward_functorial", functor_gap, 0.0, functor_gap == 0.0));

  // Slice identity.
  const TotalGrid grid{8, 8, 4};
  Rng r2 = root.split(2);
  const EmpiricalMeasure totals = random_totals(grid, 256, r2);
  {
    Rng rc = root.split(3);
    const auto res = slice_identity_check([](Eigen::Index, Eigen::Index, Eigen::Index, const Eigen::VectorXd&) { return 0.7; },
                                          totals, grid, 1000, rc);
    out.push_back(check("slice_identity_constant", std::abs(res.lhs - res.rhs), 0.0,
                        res.lhs == 0.7 && res.rhs == 0.7 && res.combined_stderr() == 0.0));
  }
  {
    const SliceFn err = [&grid](Eigen::Index x, Eigen::Index y, Eigen::Index phi, const Eigen::VectorXd& t) {
      const double d = blurred(grid, t, x, y, phi) - t[grid.index(x, y, phi)];
      return d * d;
    };
    Rng rs = root.split(4);
    const auto res = slice_identity_check(err, totals, grid, config.n_mc, rs);
    out.push_back(check("slice_identity_denoising_error", std::abs(res.lhs - res.rhs), 3.0 * res.combined_stderr(),
                        res.z() < 3.0, res.combined_stderr()));
  }
  {
    const SliceFn by_pose = [](Eigen::Index, Eigen::Index, Eigen::Index phi, const Eigen::VectorXd&) {
      return static_cast<double>(phi * phi);
    };
    Rng rp = root.split(5);
    const auto res = slice_identity_check(by_pose, totals, grid, config.n_mc, rp);
    const double exact = slice_identity_exact(by_pose, totals, grid);
    out.push_back(check("slice_identity_pose_only", std::abs(res.lhs - exact), 3.0 * res.lhs_stderr,
                        std::abs(res.lhs - exact) < 3.0 * res.lhs_stderr, res.lhs_stderr));
  }

  // Two-sample sanity: two independent unit normals are not told apart.
  {
    Rng ra = root.split(6), rb = root.split(7), rperm = root.split(8);
    const Eigen::Index m = std::min<Eigen::Index>(n, 10000);
    std::vector<double> a(m), b(m);
    for (auto& v : a) v = ra.normal();
    for (auto& v : b) v = rb.normal();
    const PermutationTest t = energy_permutation_test_1d(a, b, 200, config.alpha, rperm);
    out.push_back(check("energy_same_distribution", t.statistic, t.threshold, !t.reject));
  }
  return out;
}

} // namespace fmdiff
