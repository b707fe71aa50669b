#include <doctest.h>

#include <cmath>

#include "tcvsr/ops.hpp"
#include "tcvsr/rng.hpp"

using namespace tcvsr;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

Var<double> cv(Tensor<double> t) { return constant(std::move(t)); }

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Rng rng(1);
  auto x = random_tensor({2, 3, 5, 6}, rng);
  Tensor<double> w({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w(c, c, 1, 1) = 1.0;
  auto y = conv2d(cv(x), cv(w), Var<double>(), 1, 1);
  CHECK(y.value() == x);
}

TEST_CASE("conv2d hand sums and shape law") {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto y = conv2d(cv(x), cv(Tensor<double>({1, 1, 2, 2}, 1.0)), Var<double>(), 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value()[0] == 10.0);

  Tensor<float> big({1, 64, 64, 64});
  auto d = conv2d(constant(big), constant(Tensor<float>({64, 64, 4, 4})), Var<float>(), 2, 1);
  CHECK(d.shape() == Shape{1, 64, 32, 32});
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(2);
  auto x = random_tensor({1, 2, 6, 5}, rng);
  auto z = random_tensor({1, 2, 6, 5}, rng);
  auto w = cv(random_tensor({3, 2, 3, 3}, rng));
  Tensor<double> mix(x.shape());
  for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = 0.7 * x[i] - 1.3 * z[i];
  auto lhs = conv2d(cv(mix), w, Var<double>(), 1, 1).value();
  auto a = conv2d(cv(x), w, Var<double>(), 1, 1).value();
  auto b = conv2d(cv(z), w, Var<double>(), 1, 1).value();
  for (std::int64_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (0.7 * a[i] - 1.3 * b[i])) < 1e-5);
}

TEST_CASE("conv2d rejects mismatched channels and oversize kernels") {
  CHECK_THROWS_AS(conv2d(cv(Tensor<double>({1, 2, 4, 4})), cv(Tensor<double>({1, 3, 3, 3})), Var<double>(), 1, 1),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(cv(Tensor<double>({1, 1, 2, 2})), cv(Tensor<double>({1, 1, 5, 5})), Var<double>(), 1, 0),
                  ShapeError);
}

TEST_CASE("conv2d replicate padding clamps at the border") {
  Tensor<double> x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  Tensor<double> w({1, 1, 1, 3}, std::vector<double>{1, 0, 0});  // picks the left neighbour
  auto y = conv2d(cv(x), cv(w), Var<double>(), 1, 1, PadMode::Replicate);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.value()(0, 0, 1, 0) == 1.0);
  CHECK(y.value()(0, 0, 1, 1) == 1.0);
  CHECK(y.value()(0, 0, 1, 2) == 2.0);
}

TEST_CASE("conv_transpose2d scatter and shape law") {
  Tensor<double> x({1, 1, 1, 1}, 3.0);
  const auto y = conv_transpose2d(cv(x), cv(Tensor<double>({1, 1, 2, 2}, 1.0)), Var<double>(), 2, 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (auto v : y.value().data()) CHECK(v == 3.0);

  Rng rng(3);
  auto z = random_tensor({1, 2, 3, 3}, rng);
  Tensor<double> id({2, 2, 1, 1});
  id(0, 0, 0, 0) = id(1, 1, 0, 0) = 1.0;
  CHECK(conv_transpose2d(cv(z), cv(id), Var<double>(), 1, 0).value() == z);

  auto up = conv_transpose2d(constant(Tensor<float>({1, 64, 32, 32})), constant(Tensor<float>({64, 64, 2, 2})),
                             Var<float>(), 2, 0);
  CHECK(up.shape() == Shape{1, 64, 64, 64});
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  Rng rng(4);
  auto x = random_tensor({1, 3, 8, 8}, rng);
  auto y = random_tensor({1, 2, 4, 4}, rng);
  auto w = random_tensor({2, 3, 4, 4}, rng);
  // <conv(x), y> = <x, convT(y)> when convT uses the same weights viewed as Cin x Cout.
  Tensor<double> wt({3, 2, 4, 4});
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 16; ++k) wt[(i * 2 + o) * 16 + k] = w[(o * 3 + i) * 16 + k];
  auto cx = conv2d(cv(x), cv(w), Var<double>(), 2, 1).value();
  auto ty = conv_transpose2d(cv(y), cv(wt), Var<double>(), 2, 1).value();
  REQUIRE(ty.shape() == x.shape());
  double lhs = 0, rhs = 0;
  for (std::int64_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (std::int64_t i = 0; i < ty.size(); ++i) rhs += ty[i] * x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("matmul goldens") {
  auto p = matmul(cv(Tensor<double>({1, 2}, std::vector<double>{1, 2})),
                  cv(Tensor<double>({2, 1}, std::vector<double>{3, 4})));
  CHECK(p.value()[0] == 11.0);
  Rng rng(5);
  auto b = random_tensor({3, 4}, rng);
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  CHECK(matmul(cv(eye), cv(b)).value() == b);
  auto z = matmul(cv(Tensor<double>({2, 3})), cv(b)).value();
  for (auto v : z.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(matmul(cv(b), cv(b)), ShapeError);
}

TEST_CASE("softmax rows closed forms") {
  Tensor<double> x({3, 4}, std::vector<double>{0, 0, 0, 0, 5, 5 + std::log(2.0), -1e9, -1e9, 100, 0, 0, 0});
  auto y = softmax_rows(cv(x)).value();
  for (int c = 0; c < 4; ++c) CHECK(y(0, c) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(y(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(y(1, 1) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(y(2, 0) > 0.9999);
  Tensor<double> bad({1, 2}, std::vector<double>{0, NAN});
  CHECK_THROWS_AS(softmax_rows(cv(bad)), NumericError);
}

TEST_CASE("softmax rows sum to one and ignore row offsets") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({5, 7}, rng);
    for (auto& v : x.data()) v *= 20;
    auto y = softmax_rows(cv(x)).value();
    auto shifted = x;
    const double c = rng.uniform(-50, 50);
    for (int j = 0; j < 7; ++j) shifted(2, j) += c;
    auto y2 = softmax_rows(cv(shifted)).value();
    for (int r = 0; r < 5; ++r) {
      double s = 0;
      for (int j = 0; j < 7; ++j) {
        s += y(r, j);
        CHECK(std::abs(y(r, j) - y2(r, j)) < 1e-6);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("pixel shuffle layout and bijection") {
  Tensor<double> x({1, 4, 2, 2});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  auto y = pixel_shuffle(x, 2);
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) CHECK(y(0, 0, 2 * h + a, 2 * w + b) == x(0, a * 2 + b, h, w));
  CHECK(pixel_unshuffle(y, 2) == x);
  CHECK_THROWS_AS(pixel_shuffle(Tensor<double>({1, 3, 2, 2}), 2), ShapeError);
  auto c = pixel_shuffle(Tensor<double>({1, 8, 3, 3}, 0.5), 2);
  for (auto v : c.data()) CHECK(v == 0.5);
}

TEST_CASE("warp closed forms") {
  Rng rng(7);
  auto src = random_tensor({1, 2, 5, 6}, rng);
  CHECK(warp(src, Tensor<double>({1, 2, 5, 6})) == src);

  Tensor<double> f1({1, 2, 5, 6});
  Tensor<double> fh({1, 2, 5, 6});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      f1(0, 0, y, x) = 1.0;
      fh(0, 0, y, x) = 0.5;
    }
  auto s1 = warp(src, f1);
  auto sh = warp(src, fh);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        CHECK(std::abs(s1(0, c, y, x) - src(0, c, y, x + 1)) < 1e-12);
        CHECK(std::abs(sh(0, c, y, x) - 0.5 * (src(0, c, y, x) + src(0, c, y, x + 1))) < 1e-12);
      }
}

TEST_CASE("leaky relu, charbonnier and reductions") {
  Tensor<double> x({4}, std::vector<double>{-2, -0.5, 0.5, 2});
  auto y = leaky_relu(cv(x), 0.1).value();
  CHECK(y[0] == doctest::Approx(-0.2));
  CHECK(y[3] == 2.0);

  auto a = cv(Tensor<double>({2, 3}, 0.25));
  CHECK(charbonnier(a, a, 1e-3).value()[0] == 1e-3);
  auto one = cv(Tensor<double>({2, 3}, 1.25));
  CHECK(charbonnier(one, a, 1e-3).value()[0] == doctest::Approx(std::sqrt(1 + 1e-6)).epsilon(1e-15));
  CHECK(sum(one).value()[0] == doctest::Approx(7.5));
  CHECK(mean(one).value()[0] == doctest::Approx(1.25));
}

TEST_CASE("charbonnier gradient vanishes at zero residual") {
  Var<double> a(Tensor<double>({3}, 0.4), true);
  auto b = cv(Tensor<double>({3}, 0.4));
  charbonnier(a, b, 1e-3).backward();
  for (auto g : a.grad().data()) CHECK(g == 0.0);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Var<double> x(Tensor<double>({2}, std::vector<double>{1.5, -2}), true);
  auto y = mul(x, x);
  auto z = sum(add(y, x));
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 1));
  CHECK(x.grad()[1] == doctest::Approx(2 * -2.0 + 1));
}

TEST_CASE("no-grad guard stops recording") {
  Var<double> x(Tensor<double>({2}, 1.0), true);
  NoGradGuard guard;
  auto y = sum(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("upsample2x and avg_pool2x preserve constants") {
  auto c = cv(Tensor<double>({1, 1, 4, 6}, 0.3));
  const auto up = upsample2x(c);
  const auto down = avg_pool2x(c);
  for (auto v : up.value().data()) CHECK(v == doctest::Approx(0.3));
  for (auto v : down.value().data()) CHECK(v == doctest::Approx(0.3));
  CHECK(upsample2x(c).shape() == Shape{1, 1, 8, 12});
}
