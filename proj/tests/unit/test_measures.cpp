#include "fmdiff/measures.hpp"
#include "fmdiff/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace fmdiff;
using Eigen::Index;

namespace {

EmpiricalMeasure normal_samples(Index n, Index d, Rng& rng, double shift = 0.0) {
  return EmpiricalMeasure(rng.normal_matrix(n, d).array() + shift);
}

EmpiricalMeasure random_totals(Index n, const TotalGrid& grid, Rng& rng) {
  Eigen::MatrixXd t(n, grid.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < grid.size(); ++j) t(i, j) = rng.uniform();
  return EmpiricalMeasure(t);
}

Eigen::VectorXd cube_root(const Eigen::VectorXd& y) {
  return y.unaryExpr([](double v) { return std::cbrt(v); });
}

} // namespace

TEST_CASE("empirical measure weights") {
  Eigen::MatrixXd s(3, 1);
  s << 1, 2, 3;
  CHECK(EmpiricalMeasure(s).weights().isApproxToConstant(1.0 / 3));
  CHECK_NOTHROW(EmpiricalMeasure(s, Eigen::Vector3d(0.2, 0.3, 0.5)));
  CHECK_THROWS(EmpiricalMeasure(s, Eigen::Vector3d(0.2, 0.3, 0.6)));
  CHECK_THROWS(EmpiricalMeasure(s, Eigen::Vector3d(-0.1, 0.6, 0.5)));
  CHECK_THROWS(EmpiricalMeasure(s, Eigen::Vector2d(0.5, 0.5)));

  Rng rng(1);
  const EmpiricalMeasure w(s, Eigen::Vector3d(0.0, 0.0, 1.0));
  for (int i = 0; i < 20; ++i) CHECK(w.draw(rng) == 2);
}

TEST_CASE("pushforward") {
  Rng rng(2);
  const EmpiricalMeasure mu = normal_samples(1000, 1, rng);

  SUBCASE("identity leaves the measure unchanged") {
    const auto same = pushforward(mu, [](const Eigen::VectorXd& x) { return x; });
    CHECK(same.samples() == mu.samples());
  }
  SUBCASE("embedding concentrates on a line") {
    const auto emb = pushforward(mu, [](const Eigen::VectorXd& x) { return Eigen::Vector2d(x[0], 0.0).eval(); });
    CHECK(emb.dim() == 2);
    CHECK((emb.samples().col(1).array() == 0.0).all());
    CHECK(emb.samples().col(0) == mu.samples().col(0));
  }
  SUBCASE("weights carry over") {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(1000, 0.5 / 999);
    w[0] = 0.5;
    const EmpiricalMeasure weighted(mu.samples(), w);
    const auto out = pushforward(weighted, [](const Eigen::VectorXd& x) { return (2 * x).eval(); });
    CHECK(*out.explicit_weights() == w);
  }
  SUBCASE("functorial") {
    const PointMap f = [](const Eigen::VectorXd& x) { return Eigen::Vector2d(x[0], x[0] * x[0]).eval(); };
    const PointMap g = [](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, std::sin(y[0]) + y[1]); };
    const auto two = pushforward(pushforward(mu, f), g);
    const auto one = pushforward(mu, [&](const Eigen::VectorXd& x) { return g(f(x)); });
    CHECK(two.samples() == one.samples());
  }
}

TEST_CASE("cube pushforward of a uniform matches its density histogram") {
  Rng rng(3);
  const Index n = 100000;
  std::vector<double> counts(20, 0.0), expected(20, 0.0);
  for (Index i = 0; i < n; ++i) {
    const double y = std::pow(2 * rng.uniform() - 1, 3);
    counts[std::min<Index>(19, static_cast<Index>((y + 1) * 10))] += 1;
  }
  // Bin mass from the CDF of y = x^3: F(y) = (1 + cbrt(y)) / 2.
  bool use[20];
  double used_mass = 0.0, used_count = 0.0;
  for (int b = 0; b < 20; ++b) {
    const double lo = -1 + 0.1 * b, hi = lo + 0.1;
    expected[b] = (std::cbrt(hi) - std::cbrt(lo)) / 2;
    use[b] = b != 9 && b != 10;
    if (use[b]) {
      used_mass += expected[b];
      used_count += counts[b];
    }
  }
  for (auto& e : expected) e *= used_count / used_mass;
  const ChiSquareResult r = chi_square_gof(counts, expected, use, 0.01);
  CHECK(r.dof == 17);
  CHECK(r.pass);
}

TEST_CASE("change of variables") {
  const DensityFn p = standard_normal_density();

  SUBCASE("doubling gives N(0, 4)") {
    const DensityFn q = change_of_variables_density(
        p, [](const Eigen::VectorXd& y) { return (y / 2).eval(); }, [](const Eigen::VectorXd&) { return 0.5; });
    for (double y : {-5.0, -1.3, 0.0, 0.2, 3.7}) {
      const double want = std::exp(-y * y / 8) / std::sqrt(8 * M_PI);
      CHECK(std::abs(*q(y) - want) < 1e-12);
    }
    CHECK(integrate_density_1d(q, uniform_grid(-40, 40, 80000)) == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("identity leaves the density unchanged") {
    const DensityFn q = change_of_variables_density(
        p, [](const Eigen::VectorXd& y) { return y; }, [](const Eigen::VectorXd&) { return 1.0; });
    for (double y : {-2.0, 0.0, 1.5}) CHECK(*q(y) == *p(y));
  }
  SUBCASE("cube blows up near zero and still integrates to one") {
    const DensityFn q = change_of_variables_density(
        uniform_density(-1, 1), cube_root,
        [](const Eigen::VectorXd& y) { return 1.0 / (3.0 * std::pow(std::abs(y[0]), 2.0 / 3.0)); });
    CHECK(*q(0.001) > 10 * *q(0.5));
    CHECK_FALSE(q(0.0).has_value());
    CHECK(integrate_density_1d(q, power_grid(1.0, 20000, 3)) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("left inverses recover the measure") {
  Rng rng(4);
  const EmpiricalMeasure mu = normal_samples(5000, 1, rng);

  const auto emb = verify_left_inverse(
      mu, [](const Eigen::VectorXd& x) { return Eigen::Vector2d(x[0], 0).eval(); },
      [](const Eigen::VectorXd& y) { return y.head(1).eval(); });
  CHECK(emb.ok);
  CHECK(emb.max_error == 0.0);
  CHECK(emb.distance == 0.0);

  const auto id = verify_left_inverse(
      mu, [](const Eigen::VectorXd& x) { return x; }, [](const Eigen::VectorXd& x) { return x; });
  CHECK(id.ok);
  CHECK(id.distance == 0.0);

  const auto cube = verify_left_inverse(
      mu, [](const Eigen::VectorXd& x) { return x.array().cube().matrix().eval(); },
      cube_root, 1e-12);
  CHECK(cube.ok);
  CHECK(cube.max_error <= 1e-12);

  const auto bad = verify_left_inverse(
      mu, [](const Eigen::VectorXd& x) { return x; }, [](const Eigen::VectorXd& x) { return x.cwiseAbs().eval(); });
  CHECK_FALSE(bad.ok);
  REQUIRE(bad.worst_index >= 0);
  CHECK(bad.max_error == doctest::Approx(2 * std::abs(mu.samples()(bad.worst_index, 0))));
}

TEST_CASE("slice identity") {
  const TotalGrid grid{4, 4, 3};
  Rng rng(5);
  const EmpiricalMeasure totals = random_totals(64, grid, rng);

  SUBCASE("constant g is exact") {
    Rng r(1);
    const auto res = slice_identity_check([](Index, Index, Index, const Eigen::VectorXd&) { return 0.7; }, totals, grid, 1000, r);
    CHECK(res.lhs == 0.7);
    CHECK(res.rhs == 0.7);
  }
  SUBCASE("local squared error agrees within three standard errors") {
    const SliceFn err = [&](Index x, Index y, Index phi, const Eigen::VectorXd& t) {
      const double truth = std::sin(0.9 * x + 0.4 * y + phi);
      const double d = t[grid.index(x, y, phi)] - truth;
      return d * d;
    };
    Rng r(2);
    const auto res = slice_identity_check(err, totals, grid, 100000, r);
    CHECK(res.z() < 3.0);
    CHECK(std::abs(res.lhs - slice_identity_exact(err, totals, grid)) < 3 * res.lhs_stderr);
  }
  SUBCASE("pose-only g matches enumeration") {
    const SliceFn g = [](Index, Index, Index phi, const Eigen::VectorXd&) { return static_cast<double>(phi * phi); };
    Rng r(3);
    const auto res = slice_identity_check(g, totals, grid, 100000, r);
    CHECK(slice_identity_exact(g, totals, grid) == doctest::Approx(5.0 / 3));
    CHECK(std::abs(res.lhs - 5.0 / 3) < 3 * res.lhs_stderr);
  }
  SUBCASE("standard error shrinks like one over root n") {
    const SliceFn g = [&](Index x, Index y, Index phi, const Eigen::VectorXd& t) { return t[grid.index(x, y, phi)]; };
    Rng a(4), b(4);
    const auto small = slice_identity_check(g, totals, grid, 10000, a);
    const auto large = slice_identity_check(g, totals, grid, 40000, b);
    const double ratio = small.lhs_stderr / large.lhs_stderr;
    CHECK(ratio > 2 * 0.7);
    CHECK(ratio < 2 * 1.3);
    const double rhs_ratio = small.rhs_stderr / large.rhs_stderr;
    CHECK(rhs_ratio > 2 * 0.7);
    CHECK(rhs_ratio < 2 * 1.3);
  }
  SUBCASE("zero draws are rejected") {
    Rng r(5);
    CHECK_THROWS(slice_identity_check([](Index, Index, Index, const Eigen::VectorXd&) { return 1.0; }, totals, grid, 0, r));
  }
}

TEST_CASE("two-sample distances") {
  Rng rng(6);
  const EmpiricalMeasure a = normal_samples(10000, 1, rng);
  for (TwoSampleKind k : {TwoSampleKind::energy, TwoSampleKind::ks_per_coordinate, TwoSampleKind::wasserstein1_1d}) {
    CHECK(two_sample_distance(a, a, k) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(two_sample_kind_from_string(to_string(k)) == k);
  }
  const EmpiricalMeasure b = normal_samples(10000, 1, rng);
  const EmpiricalMeasure shifted = normal_samples(10000, 1, rng, 1.0);
  CHECK(std::abs(two_sample_distance(a, shifted, TwoSampleKind::wasserstein1_1d) - 1.0) < 0.05);

  const auto va = a.coordinate(0), vb = b.coordinate(0);
  const PermutationTest t = energy_permutation_test_1d(va, vb, 200, 0.01, rng);
  CHECK(two_sample_distance(a, b, TwoSampleKind::energy) == doctest::Approx(t.statistic).epsilon(1e-9));
  CHECK(t.statistic < t.threshold);

  const EmpiricalMeasure empty(Eigen::MatrixXd(0, 1));
  CHECK_THROWS(two_sample_distance(a, empty, TwoSampleKind::energy));
  const EmpiricalMeasure wide = normal_samples(10, 2, rng);
  CHECK_THROWS(two_sample_distance(a, wide, TwoSampleKind::energy));
}

TEST_CASE("multivariate energy distance is zero only for equal samples") {
  Rng rng(7);
  const EmpiricalMeasure a = normal_samples(400, 3, rng), b = normal_samples(400, 3, rng, 0.5);
  CHECK(two_sample_distance(a, a, TwoSampleKind::energy) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(two_sample_distance(a, b, TwoSampleKind::energy) > 0.1);
}

TEST_CASE("measure suite passes") {
  MeasureSuiteConfig cfg;
  cfg.seed = 1;
  const auto checks = run_measure_suite(cfg);
  CHECK(checks.size() >= 10);
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CAPTURE(c.statistic);
    CAPTURE(c.threshold);
    CHECK(c.pass);
  }
}
