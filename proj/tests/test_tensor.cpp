#include <doctest.h>

#include <cstdint>

#include "oracles.hpp"
#include "rwta/errors.hpp"
#include "rwta/tensor.hpp"

using namespace rwta;

TEST_CASE("layout is contiguous row-major with w fastest") {
  Tensor4<double> t({2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 42.0;
  CHECK(t.data.back() == 42.0);
  t.at(0, 0, 0, 1) = 7.0;
  CHECK(t.data[1] == 7.0);
  CHECK(t.size() == 120);
  CHECK(t.plane(1, 2) == t.ptr() + (1 * 3 + 2) * 4 * 5);
}

TEST_CASE("constructors zero-fill and validate lengths") {
  Tensor4<float> z({1, 2, 2, 2});
  for (float v : z.data) CHECK(v == 0.0f);
  CHECK_THROWS_AS(Tensor4<float>({1, 1, 2, 2}, {1.0f, 2.0f}), ShapeError);
  CHECK(Tensor4<float>::scalar(3.0f).at(0, 0, 0, 0) == 3.0f);
  CHECK(Tensor4<float>::full({1, 1, 1, 2}, 5.0f).data[1] == 5.0f);
}

TEST_CASE("elementwise ops and shape enforcement") {
  Tensor4<double> a({1, 1, 1, 3}, {1, -2, 3});
  Tensor4<double> b({1, 1, 1, 3}, {10, 20, 30});
  CHECK(add(a, b).data == std::vector<double>{11, 18, 33});
  CHECK(sub(b, a).data == std::vector<double>{9, 22, 27});
  CHECK(mul(a, b).data == std::vector<double>{10, -40, 90});
  CHECK(scale(a, -2.0).data == std::vector<double>{-2, 4, -6});
  CHECK(relu(a).data == std::vector<double>{1, 0, 3});
  Tensor4<double> c({1, 1, 3, 1}, {0, 0, 0});
  CHECK_THROWS_AS(add(a, c), ShapeError);
  Tensor4<double> acc = a;
  accumulate(acc, b);
  CHECK(acc.data == std::vector<double>{11, 18, 33});
}

TEST_CASE("reductions and comparisons") {
  Tensor4<double> a({1, 1, 2, 2}, {1, -5, 2, 0.5});
  CHECK(sum(a) == doctest::Approx(-1.5));
  CHECK(max_abs(a) == 5.0);
  CHECK(all_finite(a));
  Tensor4<double> bad = a;
  bad.data[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(bad));
  bad.data[2] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(bad));

  Tensor4<double> b = a;
  CHECK(bit_equal(a, b));
  b.data[0] += 1e-9;
  CHECK_FALSE(bit_equal(a, b));
  CHECK(allclose(a, b, 1e-8));
  CHECK_FALSE(allclose(a, b, 1e-10));
}

TEST_CASE("negative zero is bit-distinct but allclose") {
  Tensor4<double> a({1, 1, 1, 1}, {0.0});
  Tensor4<double> b({1, 1, 1, 1}, {-0.0});
  CHECK_FALSE(bit_equal(a, b));
  CHECK(allclose(a, b, 0.0));
}

TEST_CASE("cast between precisions") {
  Tensor4<double> d({1, 1, 1, 2}, {1.5, 2.0});
  auto f = cast<float>(d);
  CHECK(f.shape == d.shape);
  CHECK(f.data[1] == 2.0f);
}

TEST_CASE("maxpool2d against the loop oracle") {
  SeededRng rng(3);
  auto x = oracle::random_tensor<double>({2, 3, 9, 7}, rng);
  auto y = maxpool2d(x, 2, 2, 2, 2);
  CHECK(y.shape == Shape4{2, 3, 4, 3});
  CHECK(bit_equal(y, oracle::maxpool(x, 2, 2)));
  auto y3 = maxpool2d(x, 3, 3, 3, 3);
  CHECK(bit_equal(y3, oracle::maxpool(x, 3, 3)));
  CHECK_THROWS_AS(maxpool2d(x, 10, 10, 1, 1), ShapeError);
}

TEST_CASE("require_same_shape names both shapes") {
  try {
    require_same_shape({1, 2, 3, 4}, {1, 2, 3, 5}, "widget");
    FAIL("expected throw");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("widget") != std::string::npos);
    CHECK(msg.find("1x2x3x4") != std::string::npos);
    CHECK(msg.find("1x2x3x5") != std::string::npos);
  }
}
