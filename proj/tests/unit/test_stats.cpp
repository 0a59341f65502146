#include "fmdiff/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fmdiff;

TEST_CASE("normal distribution functions") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2 * M_PI)).epsilon(1e-15));
  for (double p : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("chi-square quantiles against tables") {
  CHECK(chi_square_quantile(0.99, 17) == doctest::Approx(33.409).epsilon(1e-4));
  CHECK(chi_square_quantile(0.95, 1) == doctest::Approx(3.841).epsilon(1e-3));
  CHECK(chi_square_quantile(0.99, 18) == doctest::Approx(34.805).epsilon(1e-4));
  // P(a, x) for a = 1 is 1 - exp(-x).
  for (double x : {0.1, 1.0, 7.5}) CHECK(regularized_gamma_p(1.0, x) == doctest::Approx(1 - std::exp(-x)).epsilon(1e-13));
}

TEST_CASE("wasserstein1 of shifted samples is the shift") {
  std::vector<double> a{0.1, -0.5, 2.0, 0.7}, b = a;
  for (auto& v : b) v += 1.25;
  CHECK(wasserstein1(a, b) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(wasserstein1(a, a) == 0.0);
}

TEST_CASE("wasserstein1 with weights matches an expanded sample") {
  const std::vector<double> a{0.0, 1.0}, wa{0.25, 0.75};
  const std::vector<double> expanded{0.0, 1.0, 1.0, 1.0};
  const std::vector<double> b{0.2, 0.4, 3.0};
  CHECK(wasserstein1(a, b, wa) == doctest::Approx(wasserstein1(expanded, b)).epsilon(1e-14));
}

TEST_CASE("wasserstein1 to a normal") {
  Rng rng(1);
  std::vector<double> x(20000);
  for (auto& v : x) v = 1.0 + 2.0 * rng.normal();
  CHECK(wasserstein1_to_normal(x, 1.0, 2.0) < 0.05);
  CHECK(wasserstein1_to_normal(x, 2.0, 2.0) == doctest::Approx(1.0).epsilon(0.05));
  // A point mass at the mean is E|Z| sd away.
  const std::vector<double> point(10, 0.0);
  CHECK(wasserstein1_to_normal(point, 0.0, 1.0) == doctest::Approx(std::sqrt(2 / M_PI)).epsilon(1e-9));
}

TEST_CASE("ks statistic") {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c{1, 2, 3, 4};
  CHECK(ks_statistic(a, b) == 1.0);
  CHECK(ks_statistic(a, c) == 0.0);
  const std::vector<double> d{1, 2, 7, 8};
  CHECK(ks_statistic(a, d) == 0.5);
}

TEST_CASE("energy distance fast path agrees with the quadratic form") {
  Rng rng(2);
  std::vector<double> a(300), b(200);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = 0.5 + rng.normal();
  const Eigen::MatrixXd ma = Eigen::Map<const Eigen::VectorXd>(a.data(), 300);
  const Eigen::MatrixXd mb = Eigen::Map<const Eigen::VectorXd>(b.data(), 200);
  CHECK(energy_distance_1d(a, b) == doctest::Approx(energy_distance(ma, mb)).epsilon(1e-10));
  CHECK(energy_distance(ma, ma) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("energy permutation test") {
  Rng rng(3);
  std::vector<double> a(10000), b(10000), c(10000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  for (auto& v : c) v = 0.1 + rng.normal();
  CHECK_FALSE(energy_permutation_test_1d(a, b, 200, 0.01, rng).reject);
  CHECK(energy_permutation_test_1d(a, c, 200, 0.01, rng).reject);
}

TEST_CASE("permutation test has the right size") {
  // Under the null the rejection rate should sit near alpha.
  Rng rng(4);
  int rejections = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    std::vector<double> a(200), b(200);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    rejections += energy_permutation_test_1d(a, b, 100, 0.05, rng).reject;
  }
  CHECK(rejections < 25);
}

TEST_CASE("chi-square goodness of fit") {
  const std::vector<double> counts{25, 25, 25, 25}, expected{25, 25, 25, 25};
  bool use[4] = {true, true, true, true};
  const ChiSquareResult r = chi_square_gof(counts, expected, use, 0.01);
  CHECK(r.statistic == 0.0);
  CHECK(r.dof == 3);
  CHECK(r.pass);
  const std::vector<double> skewed{70, 10, 10, 10};
  CHECK_FALSE(chi_square_gof(skewed, expected, use, 0.01).pass);
  bool some[4] = {false, true, true, true};
  const ChiSquareResult s = chi_square_gof(skewed, expected, some, 0.01);
  CHECK(s.dof == 2);
}

TEST_CASE("bootstrap stderr of the mean is close to sd / sqrt(n)") {
  Rng rng(5);
  std::vector<double> x(2000);
  for (auto& v : x) v = rng.normal();
  const double se = bootstrap_stderr(
      x, [](std::span<const double> s) { return std::accumulate(s.begin(), s.end(), 0.0) / s.size(); }, 400, rng);
  CHECK(se == doctest::Approx(1 / std::sqrt(2000.0)).epsilon(0.15));
  const MeanStderr m = mean_stderr(x);
  CHECK(m.stderr_ == doctest::Approx(1 / std::sqrt(2000.0)).epsilon(0.1));
}

TEST_CASE("total variation") {
  CHECK(total_variation(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1, 0)) == doctest::Approx(0.5));
  CHECK(total_variation(Eigen::Vector3d(0.2, 0.3, 0.5), Eigen::Vector3d(0.2, 0.3, 0.5)) == 0.0);
}

TEST_CASE("rng") {
  Rng a(1), b(1);
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
  CHECK(Rng(1).split(3)() == Rng(1).split(3)());
  CHECK(Rng(1).split(3)() != Rng(1).split(4)());
  Rng r(6);
  const Eigen::ArrayXd z = r.normal_array(100000);
  CHECK(std::abs(z.mean()) < 0.01);
  CHECK(std::abs((z - z.mean()).square().mean() - 1.0) < 0.02);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 4 * std::sqrt(10000.0 * 6 / 7));
}
