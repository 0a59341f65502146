#include "fmdiff/serialize.hpp"
#include "fmdiff/stats.hpp"
#include "fmdiff/testbeds.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace fmdiff;

namespace {

LinearGaussianWorld world2(double rho) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  return LinearGaussianWorld(Eigen::VectorXd::Zero(2), cov, {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1), Eigen::RowVector2d(1, 1)});
}

} // namespace

TEST_CASE("analytic posterior with independent coordinates") {
  const GaussianPosterior p = analytic_posterior(world2(0.0), Eigen::VectorXd::Constant(1, 0.7), 0);
  CHECK(p.mean[0] == doctest::Approx(0.7));
  CHECK(std::abs(p.mean[1]) < 1e-15);
  CHECK(std::abs(p.cov(0, 0)) < 1e-15);
  CHECK(std::abs(p.cov(0, 1)) < 1e-15);
  CHECK(p.cov(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("analytic posterior with correlated prior") {
  const GaussianPosterior p = analytic_posterior(world2(0.8), Eigen::VectorXd::Constant(1, 1.0), 0);
  CHECK(p.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p.mean[1] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(p.cov(1, 1) == doctest::Approx(0.36).epsilon(1e-14));
}

TEST_CASE("analytic posterior observes its context exactly") {
  const auto w = world2(0.5);
  const GaussianPosterior p = analytic_posterior(w, Eigen::VectorXd::Zero(1), 2);
  CHECK(std::abs((w.op(2) * p.mean)(0)) < 1e-15);
  const GaussianPosterior q = analytic_posterior(w, Eigen::VectorXd::Constant(1, 0.3), 0);
  CHECK(q.mean[0] == 0.3);
}

TEST_CASE("analytic posterior rejects rank-deficient operators") {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  const LinearGaussianWorld w(Eigen::VectorXd::Zero(2), cov, {Eigen::RowVector2d(0, 0), Eigen::RowVector2d(1, 0)}, false);
  CHECK_THROWS(analytic_posterior(w, Eigen::VectorXd::Zero(1), 0));
}

TEST_CASE("analytic posterior agrees with rejection sampling") {
  const auto w = world2(0.8);
  const double obs = 1.0, band = 1e-3;
  const GaussianPosterior p = analytic_posterior(w, Eigen::VectorXd::Constant(1, obs), 0);
  Rng rng(31);
  std::vector<double> c0, c1;
  while (c0.size() < 10000) {
    const Eigen::VectorXd s = w.sample_signal(rng);
    if (std::abs(s[0] - obs) > band) continue;
    c0.push_back(s[0]);
    c1.push_back(s[1]);
  }
  CHECK(wasserstein1_to_normal(c1, p.mean[1], std::sqrt(p.cov(1, 1))) < 0.05);
  // The observed coordinate is a point mass, up to the band.
  double w0 = 0.0;
  for (double v : c0) w0 += std::abs(v - p.mean[0]);
  CHECK(w0 / c0.size() < 0.05);
}

TEST_CASE("priors must be positive definite") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS(LinearGaussianWorld(Eigen::VectorXd::Zero(2), bad, {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)}));
}

TEST_CASE("generate_tuples") {
  const auto w = world2(0.3);
  CHECK(generate_tuples(w, 0, 1).empty());

  const Dataset d = generate_tuples(w, 200, 2);
  for (const auto& tu : d) {
    CHECK(tu.ctxt_obs == w.observe(tu.signal, tu.ctxt_phi));
    CHECK(tu.trgt_obs == w.observe(tu.signal, tu.trgt_phi));
    REQUIRE(tu.novel_obs.has_value());
    CHECK(*tu.novel_obs == w.observe(tu.signal, *tu.novel_phi));
    CHECK(tu.ctxt_phi != tu.trgt_phi);
    CHECK(*tu.novel_phi != tu.trgt_phi);
    CHECK(*tu.novel_phi != tu.ctxt_phi);
  }

  const LinearGaussianWorld two(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2),
                                {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)});
  CHECK_THROWS(generate_tuples(two, 5, 1));
  CHECK(generate_tuples(two, 5, 1, PoseRoles{{}, {}, {}, false}).size() == 5);
}

TEST_CASE("generate_tuples is seeded") {
  const auto w = world2(0.3);
  const Dataset a = generate_tuples(w, 20, 9), b = generate_tuples(w, 20, 9), c = generate_tuples(w, 20, 10);
  for (int i = 0; i < 20; ++i) CHECK(a[i].signal == b[i].signal);
  CHECK_FALSE(a[0].signal == c[0].signal);
}

TEST_CASE("pose marginals are uniform within multinomial bounds") {
  const auto w = world2(0.3);
  const Index n = 10000;
  const Dataset d = generate_tuples(w, n, 3);
  Eigen::Array3d ctxt = Eigen::Array3d::Zero(), trgt = Eigen::Array3d::Zero();
  for (const auto& tu : d) {
    ctxt[static_cast<Index>(tu.ctxt_phi[0])] += 1;
    trgt[static_cast<Index>(tu.trgt_phi[0])] += 1;
  }
  const double p = 1.0 / 3, sd = std::sqrt(n * p * (1 - p));
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(ctxt[k] - n * p) < 3 * sd);
    CHECK(std::abs(trgt[k] - n * p) < 3 * sd);
  }
}

TEST_CASE("true discrete posterior") {
  SUBCASE("unique observation gives a point mass") {
    Eigen::MatrixXd s(3, 2);
    s << 0, 0, 1, 0, 2, 1;
    const DiscreteWorld w(s, Eigen::Vector3d(0.2, 0.5, 0.3), {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)});
    const Eigen::VectorXd p = true_discrete_posterior(w, Eigen::VectorXd::Constant(1, 2.0), 0);
    CHECK(p == Eigen::Vector3d(0, 0, 1));
  }
  SUBCASE("shared observation with equal priors splits evenly") {
    Eigen::MatrixXd s(3, 2);
    s << 0, 0, 0, 1, 2, 1;
    const DiscreteWorld w(s, Eigen::Vector3d(0.3, 0.3, 0.4), {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)});
    const Eigen::VectorXd p = true_discrete_posterior(w, Eigen::VectorXd::Zero(1), 0);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
    CHECK(p[2] == 0.0);
  }
  SUBCASE("four signals, first and third share the context view") {
    const DiscreteWorld w = make_default_discrete_world();
    REQUIRE(w.num_signals() == 4);
    REQUIRE(w.num_poses() == 2);
    Index shared_pose = -1;
    for (Index p = 0; p < 2 && shared_pose < 0; ++p)
      if (w.observation(0, p) == w.observation(2, p) && w.observation(0, p) != w.observation(1, p) &&
          w.observation(0, p) != w.observation(3, p))
        shared_pose = p;
    REQUIRE(shared_pose >= 0);
    const Eigen::VectorXd p = true_discrete_posterior(w, w.observation(0, shared_pose), shared_pose);
    const Eigen::Vector4d want(0.4 / 0.6, 0.0, 0.2 / 0.6, 0.0);
    CHECK((p - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("unknown observation is rejected") {
    CHECK_THROWS(true_discrete_posterior(make_default_discrete_world(), Eigen::VectorXd::Constant(1, 0.25), 0));
  }
}

TEST_CASE("discrete worlds must be identifiable from their total observation") {
  Eigen::MatrixXd s(2, 2);
  s << 1, 0, 1, 0;
  CHECK_THROWS(DiscreteWorld(s, Eigen::Vector2d(0.5, 0.5), {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)}));
  Eigen::MatrixXd t(2, 2);
  t << 1, 0, 1, 1;
  CHECK_THROWS(DiscreteWorld(t, Eigen::Vector2d(0.5, 0.6), {Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 1)}));
}

TEST_CASE("discrete world priors are sampled faithfully") {
  const DiscreteWorld w = make_default_discrete_world();
  Rng rng(8);
  Eigen::Vector4d counts = Eigen::Vector4d::Zero();
  const int n = 20000;
  for (int i = 0; i < n; ++i) counts[w.classify(w.sample_signal(rng))] += 1;
  for (int k = 0; k < 4; ++k) {
    const double p = w.prior()[k];
    CHECK(std::abs(counts[k] - n * p) < 4 * std::sqrt(n * p * (1 - p)));
  }
}

TEST_CASE("render world hides the back half from the context view") {
  const RenderWorld w;
  const auto& model = dynamic_cast<const RenderModel&>(*w.model());
  const auto poses = w.poses();
  const ToyScene red = w.scene(0.5, 0), blue = w.scene(0.5, 1);
  const auto a = render(model, red, CameraPose::from_phi(poses[0]));
  const auto b = render(model, blue, CameraPose::from_phi(poses[0]));
  CHECK((a - b).abs().maxCoeff() < 1e-3);
  const auto c = render(model, red, CameraPose::from_phi(poses[2]));
  const auto d = render(model, blue, CameraPose::from_phi(poses[2]));
  CHECK((c - d).abs().maxCoeff() > 0.5);
}

TEST_CASE("motion world moves by one pixel either way") {
  const MotionWorld w;
  Rng rng(2);
  int plus = 0;
  for (int i = 0; i < 200; ++i) {
    const MotionSignal s = w.sample_motion_signal(rng);
    CHECK(((s.motion.abs() - MotionWorld::kSpeed).abs() < 1e-15).all());
    CHECK((s.motion == s.motion[0]).all());
    plus += s.motion[0] > 0;
  }
  CHECK(plus > 60);
  CHECK(plus < 140);
}

TEST_CASE("datasets round-trip through the binary format") {
  const Dataset d = generate_tuples(world2(0.3), 50, 4);
  const auto path = std::filesystem::temp_directory_path() / "fmdiff_dataset_test.bin";
  write_dataset(path, d, 4);
  const LoadedDataset back = read_dataset(path);
  std::filesystem::remove(path);
  CHECK(back.seed == 4);
  REQUIRE(back.data.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.data[i].signal == d[i].signal);
    CHECK(back.data[i].ctxt_obs == d[i].ctxt_obs);
    CHECK(back.data[i].trgt_phi == d[i].trgt_phi);
    CHECK(*back.data[i].novel_obs == *d[i].novel_obs);
  }
}
