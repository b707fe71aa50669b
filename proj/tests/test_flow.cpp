#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tcvsr/flow.hpp"

using namespace tcvsr;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = 0, double hi = 1) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> constant_flow(std::int64_t h, std::int64_t w, double fx, double fy) {
  Tensor<double> f({1, 2, h, w});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      f(0, 0, y, x) = fx;
      f(0, 1, y, x) = fy;
    }
  return f;
}

}  // namespace

TEST_CASE("untrained flow pyramid outputs the zero field") {
  Rng rng(1);
  ParamStore<float> ps;
  auto net = FlowNet<float>::build(Builder<float>(ps, rng, ParamGroup::Flow), 3, 8);
  Tensor<float> a({1, 3, 16, 16}), b({1, 3, 16, 16});
  for (auto& v : a.data()) v = static_cast<float>(rng.uniform());
  for (auto& v : b.data()) v = static_cast<float>(rng.uniform());
  auto f = net.estimate(constant(a), constant(b));
  REQUIRE(f.shape() == Shape{1, 2, 16, 16});
  for (float v : f.value().data()) CHECK(v == 0.0f);
  for (const auto& e : ps.entries()) CHECK(e.group == ParamGroup::Flow);
}

TEST_CASE("flow estimation rejects indivisible sizes and mismatched frames") {
  Rng rng(2);
  ParamStore<float> ps;
  auto net = FlowNet<float>::build(Builder<float>(ps, rng), 3, 4);
  CHECK_THROWS_AS(net.estimate(constant(Tensor<float>({1, 3, 10, 16})), constant(Tensor<float>({1, 3, 10, 16}))),
                  ShapeError);
  CHECK_THROWS_AS(net.estimate(constant(Tensor<float>({1, 3, 16, 16})), constant(Tensor<float>({1, 3, 8, 16}))),
                  ShapeError);
}

TEST_CASE("zero-initialised alignment returns the neighbours unchanged") {
  Rng rng(3);
  ParamStore<double> ps;
  auto net = FlowNet<double>::build(Builder<double>(ps, rng), 2, 4);
  auto xp = constant(random_tensor({1, 3, 8, 8}, rng));
  auto xc = constant(random_tensor({1, 3, 8, 8}, rng));
  auto xn = constant(random_tensor({1, 3, 8, 8}, rng));
  auto a = align_bidirectional(net, xp, xc, xn);
  CHECK(a.h_prev.value() == xp.value());
  CHECK(a.h_next.value() == xn.value());

  auto first = align_bidirectional(net, Var<double>(), xc, xn);
  CHECK_FALSE(first.h_prev.defined());
  CHECK(first.h_next.defined());
  auto last = align_bidirectional(net, xp, xc, Var<double>());
  CHECK(last.h_prev.defined());
  CHECK_FALSE(last.h_next.defined());
}

TEST_CASE("both directions share one estimator applied to swapped arguments") {
  Rng rng(4);
  ParamStore<double> ps;
  auto net = FlowNet<double>::build(Builder<double>(ps, rng), 2, 4);
  randomize_all(ps, rng, 0.3);
  auto xp = constant(random_tensor({1, 3, 8, 8}, rng));
  auto xc = constant(random_tensor({1, 3, 8, 8}, rng));
  auto xn = constant(random_tensor({1, 3, 8, 8}, rng));
  auto a = align_bidirectional(net, xp, xc, xn);
  CHECK(a.flow_prev.value() == net.estimate(xc, xp).value());
  CHECK(a.flow_next.value() == net.estimate(xc, xn).value());
  CHECK(a.h_prev.value() == warp(xp, a.flow_prev).value());
}

TEST_CASE("integer constant flows are index shifts on interior pixels") {
  Rng rng(5);
  const std::int64_t H = 9, W = 11;
  auto src = random_tensor({1, 2, H, W}, rng);
  for (int fx = -2; fx <= 2; ++fx)
    for (int fy = -2; fy <= 2; ++fy) {
      auto out = warp(src, constant_flow(H, W, fx, fy));
      for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 2; y < H - 2; ++y)
          for (std::int64_t x = 2; x < W - 2; ++x) CHECK(std::abs(out(0, c, y, x) - src(0, c, y + fy, x + fx)) < 1e-6);
    }
}

TEST_CASE("fractional flows interpolate bilinearly") {
  Rng rng(6);
  auto src = random_tensor({1, 1, 6, 7}, rng);
  auto half = warp(src, constant_flow(6, 7, 0.5, 0));
  auto quarter = warp(src, constant_flow(6, 7, 0.25, 0.75));
  for (std::int64_t y = 0; y < 5; ++y)
    for (std::int64_t x = 0; x < 6; ++x) {
      CHECK(std::abs(half(0, 0, y, x) - 0.5 * (src(0, 0, y, x) + src(0, 0, y, x + 1))) < 1e-12);
      const double expect = 0.75 * 0.25 * src(0, 0, y, x) + 0.25 * 0.25 * src(0, 0, y, x + 1) +
                            0.75 * 0.75 * src(0, 0, y + 1, x) + 0.25 * 0.75 * src(0, 0, y + 1, x + 1);
      CHECK(std::abs(quarter(0, 0, y, x) - expect) < 1e-12);
    }
}

TEST_CASE("out-of-range samples replicate the border") {
  Tensor<double> src({1, 1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  auto out = warp(src, constant_flow(2, 3, 10, -10));
  for (std::int64_t x = 0; x < 3; ++x) CHECK(out(0, 0, 0, x) == 3.0);
  for (std::int64_t x = 0; x < 3; ++x) CHECK(out(0, 0, 1, x) == 3.0);
}

TEST_CASE("warped values stay within the source range for random flows") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto src = random_tensor({1, 3, 7, 9}, rng, -2, 3);
    auto flow = random_tensor({1, 2, 7, 9}, rng, -5, 5);
    auto out = warp(src, flow);
    for (std::int64_t c = 0; c < 3; ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::int64_t i = 0; i < 63; ++i) {
        lo = std::min(lo, src[c * 63 + i]);
        hi = std::max(hi, src[c * 63 + i]);
      }
      for (std::int64_t i = 0; i < 63; ++i) {
        CHECK(out[c * 63 + i] >= lo - 1e-12);
        CHECK(out[c * 63 + i] <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("endpoint error closed form") {
  Tensor<float> f({1, 2, 10, 10}), t({1, 2, 10, 10});
  for (std::int64_t y = 0; y < 10; ++y)
    for (std::int64_t x = 0; x < 10; ++x) {
      f(0, 0, y, x) = 3;
      f(0, 1, y, x) = 4;
      if (y == 0) f(0, 0, y, x) = 100;  // border row is excluded by the margin
    }
  CHECK(endpoint_error(f, t, 1) == doctest::Approx(5.0));
  CHECK_THROWS_AS(endpoint_error(f, t, 5), ShapeError);
}
