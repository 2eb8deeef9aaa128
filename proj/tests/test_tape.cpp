#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rwta/gradcheck.hpp"
#include "rwta/tape.hpp"

using namespace rwta;

TEST_CASE("hand-checked gradients of a small arithmetic graph") {
  // loss = sum((a+b) * (a-b)) = sum(a^2 - b^2); d/da = 2a, d/db = -2b.
  Tensor4<double> av({1, 1, 1, 3}, {1, -2, 3});
  Tensor4<double> bv({1, 1, 1, 3}, {0.5, 4, -1});
  Tape<double> tape;
  auto a = tape.leaf(av), b = tape.leaf(bv);
  auto loss = tape.sum_all(tape.mul(tape.add(a, b), tape.sub(a, b)));
  CHECK(tape.scalar_value(loss) == doctest::Approx((1 - 0.25) + (4 - 16) + (9 - 1)));
  auto g = tape.backward(loss);
  CHECK(allclose(g.at(a), scale(av, 2.0), 1e-12));
  CHECK(allclose(g.at(b), scale(bv, -2.0), 1e-12));
}

TEST_CASE("relu takes the zero branch of the subgradient at 0") {
  Tensor4<double> xv({1, 1, 1, 4}, {-1.0, 0.0, 2.0, -0.0});
  Tape<double> tape;
  auto x = tape.leaf(xv);
  auto loss = tape.sum_all(tape.relu(x));
  auto g = tape.backward(loss);
  CHECK(g.at(x).data == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("scale and sub propagate signed factors") {
  Tensor4<double> xv({1, 1, 2, 1}, {3, -4});
  Tape<double> tape;
  auto x = tape.leaf(xv);
  auto y = tape.scale(tape.sub(tape.scale(x, 3.0), x), -0.5);  // y = -x
  auto g = tape.backward(tape.sum_all(y));
  CHECK(g.at(x).data == std::vector<double>{-1, -1});
}

TEST_CASE("a leaf used twice accumulates both adjoints") {
  Tensor4<double> xv({1, 1, 1, 2}, {3, -5});
  Tape<double> tape;
  auto x = tape.leaf(xv);
  auto loss = tape.sum_all(tape.mul(x, x));
  auto g = tape.backward(loss);
  CHECK(allclose(g.at(x), scale(xv, 2.0), 1e-12));
}

TEST_CASE("spatial_mean averages planes and spreads gradient evenly") {
  Tensor4<double> xv({2, 2, 2, 2});
  for (size_t i = 0; i < xv.data.size(); ++i) xv.data[i] = double(i);
  Tape<double> tape;
  auto x = tape.leaf(xv);
  auto m = tape.spatial_mean(x);
  REQUIRE(tape.value(m).shape == Shape4{2, 2, 1, 1});
  CHECK(tape.value(m).at(0, 0, 0, 0) == doctest::Approx((0 + 1 + 2 + 3) / 4.0));
  CHECK(tape.value(m).at(1, 1, 0, 0) == doctest::Approx((12 + 13 + 14 + 15) / 4.0));
  auto g = tape.backward(tape.sum_all(m));
  for (double v : g.at(x).data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("softmax cross-entropy value and gradient") {
  // Two samples, three classes.
  Tensor4<double> logits({2, 3, 1, 1}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  std::vector<int> labels{1, 2};
  Tape<double> tape;
  auto z = tape.leaf(logits);
  auto loss = tape.softmax_xent(z, labels);

  auto softmax3 = [](double a, double b, double c, int i) {
    double m = std::max({a, b, c});
    double ea = std::exp(a - m), eb = std::exp(b - m), ec = std::exp(c - m);
    double den = ea + eb + ec;
    return (i == 0 ? ea : i == 1 ? eb : ec) / den;
  };
  const double expect =
      (-std::log(softmax3(1, 2, 0.5, 1)) + -std::log(softmax3(-1, 0, 3, 2))) / 2;
  CHECK(tape.scalar_value(loss) == doctest::Approx(expect).epsilon(1e-12));

  auto g = tape.backward(loss);
  for (int k = 0; k < 3; ++k) {
    const double p0 = softmax3(1, 2, 0.5, k);
    const double p1 = softmax3(-1, 0, 3, k);
    CHECK(g.at(z).at(0, k, 0, 0) == doctest::Approx((p0 - (k == 1)) / 2).epsilon(1e-10));
    CHECK(g.at(z).at(1, k, 0, 0) == doctest::Approx((p1 - (k == 2)) / 2).epsilon(1e-10));
  }

  // Shifting all logits of a sample must not change the loss.
  Tensor4<double> shifted = logits;
  for (int k = 0; k < 3; ++k) shifted.at(0, k, 0, 0) += 100.0;
  Tape<double> tape2;
  auto loss2 = tape2.softmax_xent(tape2.leaf(shifted), labels);
  CHECK(tape2.scalar_value(loss2) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("softmax_xent rejects bad labels and counts") {
  Tensor4<double> logits({2, 3, 1, 1});
  Tape<double> tape;
  auto z = tape.leaf(logits);
  CHECK_THROWS_AS(tape.softmax_xent(z, {0}), ContractError);
  CHECK_THROWS_AS(tape.softmax_xent(z, {0, 3}), DataError);
  CHECK_THROWS_AS(tape.softmax_xent(z, {-1, 0}), DataError);
}

TEST_CASE("wta node: mask rule routes, literal rule sparsifies the gradient") {
  Tensor4<double> xv({1, 2, 2, 2}, {5, 1, 2, 0, 1, 7, 3, 2});
  Tensor4<double> uv({1, 2, 2, 2}, {10, 20, 30, 40, 80, 70, 60, 50});

  Tape<double> tm;
  auto xm = tm.leaf(xv);
  auto wm = tm.wta(xm, WtaRule::Mask);
  auto lm = tm.sum_all(tm.mul(wm, tm.leaf(uv)));
  auto gm = tm.backward(lm);
  CHECK(gm.at(xm).data == std::vector<double>{10, 0, 0, 0, 0, 70, 0, 0});
  CHECK(tm.wta_mask(wm).data == std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0});
  CHECK_THROWS_AS(tm.wta_mask(xm), ContractError);

  Tape<double> tl;
  auto xl = tl.leaf(xv);
  auto ll = tl.sum_all(tl.mul(tl.wta(xl, WtaRule::Literal), tl.leaf(uv)));
  auto gl = tl.backward(ll);
  // Literal: WTA applied to the incoming gradient, keeping its own argmax.
  // Upstream grad of the wta node is u (masked positions included), so the
  // kept entries are u's per-plane maxima: 40 and 80.
  CHECK(gl.at(xl).data == std::vector<double>{0, 0, 0, 40, 80, 0, 0, 0});
}

TEST_CASE("finite differences confirm a conv + relu + wta + decode chain") {
  SeededRng rng(404);
  auto x0 = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
  auto k0 = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
  auto b0 = oracle::random_tensor<double>({1, 3, 1, 1}, rng);
  auto d0 = oracle::random_tensor<double>({2, 3, 3, 3}, rng);
  std::vector<Tensor4<double>*> params{&x0, &k0, &b0, &d0};

  GraphBuilder<double> build = [&](Tape<double>& t, std::vector<NodeId>& ids) {
    auto x = t.leaf(x0), k = t.leaf(k0), b = t.leaf(b0), d = t.leaf(d0);
    ids = {x, k, b, d};
    auto code = t.wta(t.relu(t.conv2d(x, k, b, Padding::Same)), WtaRule::Mask);
    auto recon = t.conv2d(code, d, NodeId{}, Padding::Same);
    auto err = t.sub(recon, x);
    return t.scale(t.sum_all(t.mul(err, err)), 0.02);
  };
  SeededRng pick(7);
  auto report = grad_check<double>(build, params, 1e-6, 40, pick);
  INFO("worst: param ", report.worst_param, " coord ", report.worst_coord,
       " analytic ", report.worst_analytic, " numeric ", report.worst_numeric);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("valid-padding conv through the tape also grad-checks") {
  SeededRng rng(42);
  auto x0 = oracle::random_tensor<double>({2, 2, 6, 6}, rng);
  auto k0 = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
  std::vector<Tensor4<double>*> params{&x0, &k0};
  GraphBuilder<double> build = [&](Tape<double>& t, std::vector<NodeId>& ids) {
    auto x = t.leaf(x0), k = t.leaf(k0);
    ids = {x, k};
    auto y = t.conv2d(x, k, NodeId{}, Padding::Valid);
    return t.sum_all(t.mul(y, y));
  };
  SeededRng pick(3);
  CHECK(grad_check<double>(build, params, 1e-6, 30, pick).max_rel_error < 1e-6);
}

TEST_CASE("replay reproduces recorded values bit for bit") {
  SeededRng rng(55);
  auto x0 = oracle::random_tensor<double>({1, 3, 6, 6}, rng);
  auto k0 = oracle::random_tensor<double>({3, 3, 3, 3}, rng);
  Tape<double> tape;
  auto x = tape.leaf(x0), k = tape.leaf(k0);
  auto y = tape.wta(tape.relu(tape.conv2d(x, k, NodeId{}, Padding::Same)));
  tape.sum_all(y);
  CHECK(tape.replay_bit_exact());
}

TEST_CASE("two identical runs produce bit-identical gradients") {
  auto run = [](std::vector<Tensor4<double>>& out) {
    SeededRng rng(77);
    auto x0 = oracle::random_tensor<double>({2, 2, 5, 5}, rng);
    auto k0 = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
    Tape<double> tape;
    auto x = tape.leaf(x0), k = tape.leaf(k0);
    auto y = tape.relu(tape.conv2d(x, k, NodeId{}, Padding::Same));
    auto g = tape.backward(tape.sum_all(tape.mul(y, y)));
    out = {g.at(x), g.at(k)};
  };
  std::vector<Tensor4<double>> a, b;
  run(a);
  run(b);
  CHECK(bit_equal(a[0], b[0]));
  CHECK(bit_equal(a[1], b[1]));
}

TEST_CASE("backward demands a scalar loss") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor4<double>::full({1, 1, 2, 2}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  CHECK_THROWS_AS(tape.scalar_value(x), ContractError);
  CHECK_THROWS_AS(tape.backward(NodeId{}), ContractError);
}

TEST_CASE("gradients are absent for nodes off the loss path") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor4<double>::scalar(2.0));
  auto y = tape.leaf(Tensor4<double>::scalar(3.0));  // never used
  auto g = tape.backward(tape.mul(x, x));
  CHECK(g.has(x));
  CHECK_FALSE(g.has(y));
  CHECK_THROWS_AS(g.at(y), ContractError);
}

TEST_CASE("negative control: a wrong analytic gradient is flagged") {
  // loss = sum(x^2); true gradient 2x, claimed gradient 4x.
  Tensor4<double> x({1, 1, 1, 3}, {1.0, -2.0, 0.5});
  std::vector<Tensor4<double>*> params{&x};
  auto loss = [&]() {
    double s = 0;
    for (double v : x.data) s += v * v;
    return s;
  };
  std::vector<Tensor4<double>> wrong{scale(x, 4.0)};
  SeededRng pick(1);
  auto report = grad_check_values<double>(loss, params, wrong, 1e-6, 10, pick);
  CHECK(report.max_rel_error > 0.3);

  std::vector<Tensor4<double>> right{scale(x, 2.0)};
  auto ok = grad_check_values<double>(loss, params, right, 1e-6, 10, pick);
  CHECK(ok.max_rel_error < 1e-8);
}
