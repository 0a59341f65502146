#include "fmdiff/forward_models.hpp"
#include "fmdiff/gradcheck.hpp"
#include "fmdiff/tensor.hpp"

#include <doctest.h>

#include <cmath>

using namespace fmdiff;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

} // namespace

TEST_CASE("add is componentwise") {
  CHECK(values(add(Tensor::vector({1, 2}), Tensor::vector({3, 4}))) == std::vector<double>{4, 6});
}

TEST_CASE("broadcast only over leading unit axes") {
  const Tensor a = Tensor::full({2, 3}, 1.0);
  const Tensor row = Tensor::vector({1, 2, 3});
  CHECK(values(add(a, row)) == std::vector<double>{2, 3, 4, 2, 3, 4});
  CHECK(values(add(a, Tensor({1, 3}, row.data()))) == std::vector<double>{2, 3, 4, 2, 3, 4});
  CHECK_THROWS_AS(add(a, Tensor::vector({1, 2})), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor({2, 1}, Eigen::ArrayXd::Ones(2))), ShapeError);
}

TEST_CASE("shape errors name both shapes") {
  try {
    (void)matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected a ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(to_string(Shape{2, 3})) != std::string::npos);
    CHECK(msg.find(to_string(Shape{2, 3}), msg.find(to_string(Shape{2, 3})) + 1) != std::string::npos);
  }
}

TEST_CASE("matmul by the identity returns the operand") {
  Rng rng(3);
  for (Index k : {1, 2, 5}) {
    const Tensor a = Tensor::matrix(rng.normal_matrix(3, k));
    const Tensor out = matmul(Tensor::matrix(Eigen::MatrixXd::Identity(3, 3)), a);
    CHECK(out.shape() == a.shape());
    CHECK((out.data() == a.data()).all());
  }
}

TEST_CASE("scatter_add accumulates duplicate indices") {
  const std::vector<Index> idx{1, 1};
  const Tensor out = scatter_add(Tensor::zeros({3}), idx, Tensor::vector({2, 5}));
  CHECK(values(out) == std::vector<double>{0, 7, 0});
}

TEST_CASE("scatter_add then gather at distinct indices round-trips") {
  Rng rng(11);
  const std::vector<Index> idx{4, 0, 2};
  const Tensor v = Tensor({3, 2}, rng.normal_array(6));
  const Tensor back = gather(scatter_add(Tensor::zeros({5, 2}), idx, v), idx);
  CHECK((back.data() == v.data()).all());
}

TEST_CASE("concat and slice invert each other") {
  Rng rng(5);
  const Tensor a({2, 3}, rng.normal_array(6)), b({2, 2}, rng.normal_array(4));
  const Tensor c = concat({a, b}, 1);
  CHECK(c.shape() == Shape{2, 5});
  CHECK((slice(c, 1, 0, 3).data() == a.data()).all());
  CHECK((slice(c, 1, 3, 5).data() == b.data()).all());
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vector({1, 2, 3}));
  const Gradients g = tape.backward(sum(mul(x, x)));
  CHECK(values(g[x]) == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward of sum(exp(x)) at 0 is 1") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vector({0}));
  CHECK(tape.backward(sum(exp(x)))[x].item() == 1.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS(tape.backward(mul(x, x)));
}

TEST_CASE("unreachable leaves get zero gradient") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vector({1, 2}));
  const Tensor y = tape.leaf(Tensor::vector({3, 4, 5}));
  const Gradients g = tape.backward(sum(x));
  CHECK(g[y].shape() == y.shape());
  CHECK((g[y].data() == 0.0).all());
}

TEST_CASE("tapeless tensors stay off the tape") {
  const Tensor a = Tensor::vector({1, 2});
  const Tensor b = exp(add(a, a));
  CHECK_FALSE(b.on_tape());
  Tape tape;
  const Tensor x = tape.leaf(a);
  CHECK(add(x, a).on_tape());
  CHECK_FALSE(add(x, a).detach().on_tape());
}

TEST_CASE("tape nodes are recorded parents first") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vector({1, 2}));
  const Tensor y = exp(x);
  const Tensor z = add(y, x);
  CHECK(x.node() < y.node());
  CHECK(y.node() < z.node());
  CHECK(tape.size() == 3);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x0({3, 4}, rng.normal_array(12));
    const Tensor w0({4, 2}, rng.normal_array(8));
    const double a = rng.normal(), b = rng.normal();
    auto grads = [&](double ca, double cb) {
      Tape tape;
      const Tensor x = tape.leaf(x0), w = tape.leaf(w0);
      const Tensor l1 = sum(sigmoid(matmul(x, w)));
      const Tensor l2 = mean(square(x));
      const Gradients g = tape.backward(add(scale(l1, ca), scale(l2, cb)));
      return std::pair{g[x].data(), g[w].data()};
    };
    const auto [gx, gw] = grads(a, b);
    const auto [gx1, gw1] = grads(1, 0);
    const auto [gx2, gw2] = grads(0, 1);
    CHECK(((gx - (a * gx1 + b * gx2)).abs() <= 1e-12).all());
    CHECK(((gw - (a * gw1 + b * gw2)).abs() <= 1e-12).all());
  }
}

TEST_CASE("every primitive op matches central differences at 10 points") {
  for (const auto& r : op_gradient_suite(0)) {
    CAPTURE(r.name);
    CAPTURE(r.max_rel_error);
    CHECK(r.points == 10);
    CHECK(r.pass);
  }
}

TEST_CASE("gradient of a rendered 4-cell scene matches central differences") {
  RenderConfig cfg;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.image_width = 4;
  auto model = std::make_shared<RenderModel>(cfg);
  const std::vector<Phi> phis{CameraPose{0.3, 0.1}.to_phi()};
  Rng rng(8);
  const Tensor scene({1, model->signal_size()}, rng.normal_array(model->signal_size()));
  const TapedFn f = [&](std::span<const Tensor> x) { return sum(model->apply(x[0], phis)); };
  const GradCheckResult r = check_gradient("render_sum", f, {scene}, rng);
  CAPTURE(r.max_rel_error);
  CHECK(r.pass);
}
