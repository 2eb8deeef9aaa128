#include <doctest.h>

#include "oracles.hpp"
#include "rwta/conv.hpp"
#include "rwta/errors.hpp"

using namespace rwta;

TEST_CASE("identity 1x1 kernel reproduces the input") {
  SeededRng rng(11);
  auto x = oracle::random_tensor<double>({2, 3, 5, 4}, rng);
  // One 1x1 kernel per channel pair: identity mixing matrix.
  Tensor4<double> k({3, 3, 1, 1});
  for (int o = 0; o < 3; ++o) k.at(o, o, 0, 0) = 1.0;
  auto y = conv2d(x, k, Tensor4<double>{}, Padding::Same);
  CHECK(bit_equal(x, y));
}

TEST_CASE("flip form on a hand-computed 1d example") {
  // x = [1 2 3 4], k = [10 20 30] (a single row). Flip-form same output:
  // y[j] = sum_c k[c] x[j - c + 1].
  Tensor4<double> x({1, 1, 1, 4}, {1, 2, 3, 4});
  Tensor4<double> k({1, 1, 1, 3}, {10, 20, 30});
  auto y = conv2d(x, k, Tensor4<double>{}, Padding::Same);
  // j=0: k0*x1 + k1*x0           = 10*2 + 20*1        = 40
  // j=1: k0*x2 + k1*x1 + k2*x0   = 10*3 + 20*2 + 30*1 = 100
  // j=2: k0*x3 + k1*x2 + k2*x1   = 10*4 + 20*3 + 30*2 = 160
  // j=3:         k1*x3 + k2*x2   =        20*4 + 30*3 = 170
  REQUIRE(y.shape == Shape4{1, 1, 1, 4});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(40));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(100));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(160));
  CHECK(y.at(0, 0, 0, 3) == doctest::Approx(170));

  auto yv = conv2d(x, k, Tensor4<double>{}, Padding::Valid);
  REQUIRE(yv.shape == Shape4{1, 1, 1, 2});
  CHECK(yv.at(0, 0, 0, 0) == doctest::Approx(100));
  CHECK(yv.at(0, 0, 0, 1) == doctest::Approx(160));
}

TEST_CASE("unit impulse decodes to an unflipped centered kernel copy") {
  // With the flip convention, convolving a one-hot map with a kernel stamps
  // an upright copy of that kernel centered on the hot position.
  Tensor4<double> code({1, 1, 7, 7});
  code.at(0, 0, 3, 3) = 1.0;
  SeededRng rng(5);
  auto k = oracle::random_tensor<double>({1, 1, 3, 3}, rng);
  auto y = conv2d(code, k, Tensor4<double>{}, Padding::Same);
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 3; ++c)
      CHECK(y.at(0, 0, 3 + b - 1, 3 + c - 1) == doctest::Approx(k.at(0, 0, b, c)));
  CHECK(y.at(0, 0, 0, 0) == 0.0);
}

TEST_CASE("matches the naive loop oracle over random configurations") {
  SeededRng rng(123);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + int(rng.uniform_index(3));
    const int in_c = 1 + int(rng.uniform_index(4));
    const int out_c = 1 + int(rng.uniform_index(4));
    const int h = 1 + int(rng.uniform_index(9));
    const int w = 1 + int(rng.uniform_index(9));
    const int kk[] = {1, 3, 5};
    const int k = kk[rng.uniform_index(3)];
    const Padding pad = (rng.uniform() < 0.5) ? Padding::Same : Padding::Valid;
    if (pad == Padding::Valid && (k > h || k > w)) continue;
    auto x = oracle::random_tensor<double>({n, in_c, h, w}, rng);
    auto kernel = oracle::random_tensor<double>({out_c, in_c, k, k}, rng);
    auto bias = oracle::random_tensor<double>({1, out_c, 1, 1}, rng);
    auto fast = conv2d(x, kernel, bias, pad);
    auto slow = oracle::conv2d_flip(x, kernel, bias, pad);
    REQUIRE(fast.shape == slow.shape);
    CHECK(allclose(fast, slow, 1e-10));
    ++checked;
  }
  CHECK(checked > 60);
}

TEST_CASE("matches the oracle in single precision too") {
  SeededRng rng(321);
  auto x = oracle::random_tensor<float>({2, 3, 8, 6}, rng);
  auto k = oracle::random_tensor<float>({4, 3, 5, 5}, rng);
  auto b = oracle::random_tensor<float>({1, 4, 1, 1}, rng);
  CHECK(allclose(conv2d(x, k, b, Padding::Same),
                 oracle::conv2d_flip(x, k, b, Padding::Same), 1e-4f));
}

TEST_CASE("convolution is linear in the input") {
  SeededRng rng(77);
  auto x = oracle::random_tensor<double>({1, 2, 6, 6}, rng);
  auto y = oracle::random_tensor<double>({1, 2, 6, 6}, rng);
  auto k = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
  Tensor4<double> none;
  auto lhs = conv2d(add(scale(x, 2.5), scale(y, -0.75)), k, none, Padding::Same);
  auto rhs = add(scale(conv2d(x, k, none, Padding::Same), 2.5),
                 scale(conv2d(y, k, none, Padding::Same), -0.75));
  CHECK(allclose(lhs, rhs, 1e-10));
}

TEST_CASE("grad_input satisfies the adjoint identity <Ax, u> = <x, A'u>") {
  SeededRng rng(9);
  for (Padding pad : {Padding::Same, Padding::Valid}) {
    auto x = oracle::random_tensor<double>({2, 2, 6, 5}, rng);
    auto k = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    Tensor4<double> none;
    auto y = conv2d(x, k, none, pad);
    auto u = oracle::random_tensor<double>(y.shape, rng);
    auto xt = conv2d_grad_input(u, k, x.shape, pad);
    CHECK(sum(mul(y, u)) == doctest::Approx(sum(mul(x, xt))).epsilon(1e-10));
  }
}

TEST_CASE("kernel and bias gradients match finite differences") {
  SeededRng rng(13);
  auto x = oracle::random_tensor<double>({2, 2, 5, 5}, rng);
  auto k = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
  auto b = oracle::random_tensor<double>({1, 2, 1, 1}, rng);
  auto u = oracle::random_tensor<double>({2, 2, 5, 5}, rng);  // fixed cotangent

  // Scalar objective <conv(x; k, b), u> evaluated through the naive oracle,
  // so the finite-difference side never touches the production kernels.
  auto objective = [&]() {
    return sum(mul(oracle::conv2d_flip(x, k, b, Padding::Same), u));
  };

  auto gk = conv2d_grad_kernel(u, x, k.shape, Padding::Same);
  auto gk_num = oracle::numeric_grad<double>(objective, k, 1e-6);
  CHECK(allclose(gk, gk_num, 1e-5));

  auto gb = conv2d_grad_bias(u);
  auto gb_num = oracle::numeric_grad<double>(objective, b, 1e-6);
  CHECK(allclose(gb, gb_num, 1e-5));

  auto gx = conv2d_grad_input(u, k, x.shape, Padding::Same);
  auto gx_num = oracle::numeric_grad<double>(objective, x, 1e-6);
  CHECK(allclose(gx, gx_num, 1e-5));
}

TEST_CASE("output shape bookkeeping") {
  CHECK(conv2d_output_shape({2, 3, 9, 7}, {5, 3, 3, 3}, Padding::Same) ==
        Shape4{2, 5, 9, 7});
  CHECK(conv2d_output_shape({2, 3, 9, 7}, {5, 3, 3, 3}, Padding::Valid) ==
        Shape4{2, 5, 7, 5});
}

TEST_CASE("shape and padding errors") {
  SeededRng rng(1);
  auto x = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
  Tensor4<double> none;

  auto k_badc = oracle::random_tensor<double>({1, 3, 3, 3}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, k_badc, none, Padding::Same),
                       doctest::Contains("channel"), ShapeError);

  auto k_even = oracle::random_tensor<double>({1, 2, 2, 2}, rng);
  CHECK_THROWS_AS(conv2d(x, k_even, none, Padding::Same), ConfigError);
  // Even kernels are fine when no centering is needed.
  CHECK_NOTHROW(conv2d(x, k_even, none, Padding::Valid));

  auto k_big = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
  CHECK_THROWS_AS(conv2d(x, k_big, none, Padding::Valid), ShapeError);

  auto b_bad = oracle::random_tensor<double>({1, 3, 1, 1}, rng);
  auto k_ok = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, k_ok, b_bad, Padding::Same), ShapeError);
}
