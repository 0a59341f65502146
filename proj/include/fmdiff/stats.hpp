#pragma once

#include "fmdiff/rng.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace fmdiff {

double normal_cdf(double x);
double normal_pdf(double x);
/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
/// Quantile of the chi-square distribution with `dof` degrees of freedom.
double chi_square_quantile(double p, double dof);

/// W1 between two weighted 1D samples. Empty weights mean uniform.
double wasserstein1(std::span<const double> a, std::span<const double> b, std::span<const double> wa = {},
                    std::span<const double> wb = {});
/// Exact W1 between the empirical distribution of `samples` and N(mean, sd^2).
double wasserstein1_to_normal(std::span<const double> samples, double mean, double sd);

/// Largest gap between the two (weighted) empirical CDFs.
double ks_statistic(std::span<const double> a, std::span<const double> b, std::span<const double> wa = {},
                    std::span<const double> wb = {});

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between row samples, O(N M).
double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& wa = {},
                       const Eigen::VectorXd& wb = {});
/// Unweighted 1D energy distance in O((N + M) log(N + M)).
double energy_distance_1d(std::span<const double> a, std::span<const double> b);

struct PermutationTest {
  double statistic = 0.0;
  double threshold = 0.0; // (1 - alpha) quantile of the permutation distribution
  double p_value = 1.0;
  bool reject = false;
};

/// 1D energy-distance permutation test; each permutation costs O(N + M).
PermutationTest energy_permutation_test_1d(std::span<const double> a, std::span<const double> b, int permutations,
                                           double alpha, Rng& rng);

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double critical = 0.0;
  bool pass = false;
};

/// Goodness of fit of `counts` to `expected` (same total). Bins with `use[i]`
/// false are skipped; dof is the number of used bins minus one.
ChiSquareResult chi_square_gof(std::span<const double> counts, std::span<const double> expected, std::span<const bool> use,
                               double alpha);

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Standard error of `stat` over `resamples` bootstrap draws of `x`.
template <typename Stat>
double bootstrap_stderr(std::span<const double> x, Stat&& stat, int resamples, Rng& rng) {
  std::vector<double> draws(resamples), buf(x.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& v : buf) v = x[rng.below(x.size())];
    draws[r] = stat(std::span<const double>(buf));
  }
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= resamples;
  double var = 0.0;
  for (double d : draws) var += (d - mean) * (d - mean);
  return std::sqrt(var / std::max(resamples - 1, 1));
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanStderr mean_stderr(std::span<const double> x);

} // namespace fmdiff
