#include "fmdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fmdiff {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile needs p in (0, 1)");
  // Bisection to bracket, then Newton on the cdf.
  double lo = -40.0, hi = 40.0, x = 0.0;
  for (int i = 0; i < 200; ++i) {
    x = 0.5 * (lo + hi);
    (normal_cdf(x) < p ? lo : hi) = x;
    if (hi - lo < 1e-6) break;
  }
  for (int i = 0; i < 5; ++i) {
    const double d = normal_pdf(x);
    if (d <= 0.0) break;
    x -= (normal_cdf(x) - p) / d;
  }
  return x;
}

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::domain_error("regularized_gamma_p needs a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefix);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefix) * h;
}

double chi_square_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0) || dof <= 0.0) throw std::domain_error("chi_square_quantile needs p in (0, 1), dof > 0");
  double lo = 0.0, hi = dof + 10.0 * std::sqrt(2.0 * dof) + 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (regularized_gamma_p(0.5 * dof, 0.5 * mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct Weighted {
  std::vector<double> x;
  std::vector<double> w;
};

Weighted sorted_weighted(std::span<const double> x, std::span<const double> w) {
  if (x.empty()) throw std::invalid_argument("empty sample");
  if (!w.empty() && w.size() != x.size()) throw std::invalid_argument("one weight per sample required");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  Weighted out;
  double total = 0.0;
  for (std::size_t i : order) {
    out.x.push_back(x[i]);
    out.w.push_back(w.empty() ? 1.0 : w[i]);
    total += out.w.back();
  }
  if (!(total > 0.0)) throw std::invalid_argument("weights sum to zero");
  for (double& v : out.w) v /= total;
  return out;
}

// Walks the merged support of two empirical CDFs, calling f(x_left, x_right, Fa, Fb)
// on every interval where both CDFs are constant.
template <typename F>
void sweep(const Weighted& a, const Weighted& b, F&& f) {
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0;
  double prev = std::min(a.x.front(), b.x.front());
  while (i < a.x.size() || j < b.x.size()) {
    const double next = j >= b.x.size() || (i < a.x.size() && a.x[i] <= b.x[j]) ? a.x[i] : b.x[j];
    f(prev, next, fa, fb);
    while (i < a.x.size() && a.x[i] == next) fa += a.w[i++];
    while (j < b.x.size() && b.x[j] == next) fb += b.w[j++];
    prev = next;
  }
}

} // namespace

double wasserstein1(std::span<const double> a, std::span<const double> b, std::span<const double> wa,
                    std::span<const double> wb) {
  const Weighted sa = sorted_weighted(a, wa), sb = sorted_weighted(b, wb);
  double total = 0.0;
  sweep(sa, sb, [&](double l, double r, double fa, double fb) { total += std::abs(fa - fb) * (r - l); });
  return total;
}

double wasserstein1_to_normal(std::span<const double> samples, double mean, double sd) {
  if (samples.empty()) throw std::invalid_argument("empty sample");
  if (!(sd > 0.0)) throw std::invalid_argument("normal scale must be positive");
  std::vector<double> z(samples.begin(), samples.end());
  for (double& v : z) v = (v - mean) / sd;
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  // G(x) = integral of Phi from -inf to x.
  auto G = [](double x) { return x * normal_cdf(x) + normal_pdf(x); };
  // Integral of |c - Phi| over [l, r].
  auto piece = [&](double l, double r, double c) {
    auto signed_int = [&](double lo, double hi) { return c * (hi - lo) - (G(hi) - G(lo)); };
    if (c <= 0.0) return G(r) - G(l);
    if (c >= 1.0) return (r - l) - (G(r) - G(l));
    const double q = std::clamp(normal_quantile(c), l, r);
    return std::abs(signed_int(l, q)) + std::abs(signed_int(q, r));
  };
  double total = G(z.front());                                                    // (-inf, z_1]: F_n = 0
  total += normal_pdf(z.back()) - z.back() * (1.0 - normal_cdf(z.back()));         // [z_n, inf): F_n = 1
  for (std::size_t i = 0; i + 1 < z.size(); ++i) total += piece(z[i], z[i + 1], static_cast<double>(i + 1) / n);
  return sd * total;
}

double ks_statistic(std::span<const double> a, std::span<const double> b, std::span<const double> wa,
                    std::span<const double> wb) {
  const Weighted sa = sorted_weighted(a, wa), sb = sorted_weighted(b, wb);
  double best = 0.0;
  sweep(sa, sb, [&](double, double, double fa, double fb) { best = std::max(best, std::abs(fa - fb)); });
  return best;
}

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& wa,
                       const Eigen::VectorXd& wb) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("empty measure");
  if (a.cols() != b.cols()) throw std::invalid_argument("measures differ in dimension");
  const Eigen::VectorXd pa = wa.size() ? Eigen::VectorXd(wa / wa.sum()) : Eigen::VectorXd::Constant(a.rows(), 1.0 / a.rows());
  const Eigen::VectorXd pb = wb.size() ? Eigen::VectorXd(wb / wb.sum()) : Eigen::VectorXd::Constant(b.rows(), 1.0 / b.rows());
  auto mean_dist = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& px, const Eigen::MatrixXd& y, const Eigen::VectorXd& py) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) s += px[i] * ((y.rowwise() - x.row(i)).rowwise().norm().dot(py));
    return s;
  };
  return 2.0 * mean_dist(a, pa, b, pb) - mean_dist(a, pa, a, pa) - mean_dist(b, pb, b, pb);
}

namespace {

// Sum over pairs i < j of |z_i - z_j| for sorted z restricted to label `which`.
double pair_sum_sorted(const std::vector<double>& z, const std::vector<char>& label, char which) {
  double prefix = 0.0, sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (label[i] != which) continue;
    sum += count * z[i] - prefix;
    prefix += z[i];
    count += 1.0;
  }
  return sum;
}

double energy_from_labels(const std::vector<double>& z, const std::vector<char>& label, double total_pairs, double n, double m) {
  const double saa = pair_sum_sorted(z, label, 0);
  const double sbb = pair_sum_sorted(z, label, 1);
  const double sab = total_pairs - saa - sbb;
  return 2.0 * sab / (n * m) - 2.0 * saa / (n * n) - 2.0 * sbb / (m * m);
}

} // namespace

double energy_distance_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty measure");
  std::vector<std::pair<double, char>> pooled;
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> z;
  std::vector<char> label;
  for (const auto& [v, l] : pooled) {
    z.push_back(v);
    label.push_back(l);
  }
  std::vector<char> all(z.size(), 0);
  const double total = pair_sum_sorted(z, all, 0);
  return energy_from_labels(z, label, total, static_cast<double>(a.size()), static_cast<double>(b.size()));
}

PermutationTest energy_permutation_test_1d(std::span<const double> a, std::span<const double> b, int permutations,
                                           double alpha, Rng& rng) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty measure");
  if (permutations < 1) throw std::invalid_argument("need at least one permutation");
  std::vector<std::pair<double, char>> pooled;
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> z;
  std::vector<char> label;
  for (const auto& [v, l] : pooled) {
    z.push_back(v);
    label.push_back(l);
  }
  std::vector<char> all(z.size(), 0);
  const double total = pair_sum_sorted(z, all, 0);
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());

  PermutationTest out;
  out.statistic = energy_from_labels(z, label, total, n, m);
  std::vector<double> perm(permutations);
  std::vector<char> shuffled = label;
  int at_least = 0;
  for (int p = 0; p < permutations; ++p) {
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    perm[p] = energy_from_labels(z, shuffled, total, n, m);
    if (perm[p] >= out.statistic) ++at_least;
  }
  std::sort(perm.begin(), perm.end());
  const auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * permutations)) - 1;
  out.threshold = perm[std::min(k, perm.size() - 1)];
  out.p_value = (1.0 + at_least) / (1.0 + permutations);
  out.reject = out.p_value <= alpha;
  return out;
}

ChiSquareResult chi_square_gof(std::span<const double> counts, std::span<const double> expected, std::span<const bool> use,
                               double alpha) {
  if (counts.size() != expected.size() || counts.size() != use.size()) throw std::invalid_argument("chi-square: bin count mismatch");
  ChiSquareResult r;
  int bins = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!use[i]) continue;
    if (!(expected[i] > 0.0)) throw std::invalid_argument("chi-square: empty expected bin");
    r.statistic += (counts[i] - expected[i]) * (counts[i] - expected[i]) / expected[i];
    ++bins;
  }
  if (bins < 2) throw std::invalid_argument("chi-square needs at least two bins");
  r.dof = bins - 1;
  r.critical = chi_square_quantile(1.0 - alpha, r.dof);
  r.pass = r.statistic <= r.critical;
  return r;
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

MeanStderr mean_stderr(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("empty sample");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= std::max(n - 1.0, 1.0);
  return {mean, std::sqrt(var / n)};
}

} // namespace fmdiff
