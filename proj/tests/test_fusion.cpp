#include <doctest.h>

#include <cmath>

#include "tcvsr/fusion.hpp"

using namespace tcvsr;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

Var<double> cv(Tensor<double> t) { return constant(std::move(t)); }

}  // namespace

TEST_CASE("pyramid starts on its skip path") {
  Rng rng(1);
  for (int levels : {2, 3}) {
    ParamStore<double> ps;
    auto p = Pyramid<double>::build(Builder<double>(ps, rng), 4, levels, 6);
    auto a = cv(random_tensor({1, 4, 8, 8}, rng));
    auto b = cv(random_tensor({1, 4, 8, 8}, rng));
    auto skip = p.proj(concat<double>({a, b}, 1)).value();
    CHECK(pyramid_fuse(a, b, p).value() == skip);
  }
}

TEST_CASE("pyramid with all internal weights zeroed reduces to the projection") {
  Rng rng(2);
  ParamStore<double> ps;
  auto p = Pyramid<double>::build(Builder<double>(ps, rng), 4, 3, 4);
  randomize_all(ps, rng, 0.5);
  for (auto& e : ps.entries()) {
    if (e.name.rfind("proj", 0) != 0) e.var.mutable_value().fill(0);
  }
  auto a = cv(random_tensor({1, 4, 8, 8}, rng));
  auto b = cv(random_tensor({1, 4, 8, 8}, rng));
  CHECK(pyramid_fuse(a, b, p).value() == p.proj(concat<double>({a, b}, 1)).value());
}

TEST_CASE("pyramid internal scales and output shape") {
  Rng rng(3);
  ParamStore<float> ps;
  auto p = Pyramid<float>::build(Builder<float>(ps, rng), 64, 3, 64);
  CHECK(p.levels() == 3);
  Tensor<float> x({1, 64, 64, 64}, 0.5f);
  NoGradGuard ng;
  auto pr = p.proj(concat<float>({constant(x), constant(x)}, 1));
  auto d1 = p.down(pr);
  CHECK(d1.shape() == Shape{1, 64, 32, 32});
  auto d2 = p.down2(d1);
  CHECK(d2.shape() == Shape{1, 64, 16, 16});
  CHECK(p.up2(d2).shape() == Shape{1, 64, 32, 32});
  CHECK(pyramid_fuse(constant(x), constant(x), p).shape() == Shape{1, 64, 64, 64});
}

TEST_CASE("level and channel sweep runs and preserves shape") {
  Rng rng(4);
  for (int levels : {2, 3})
    for (int pc : {64, 128}) {
      ParamStore<float> ps;
      auto s = FuseStage<float>::build(Builder<float>(ps, rng), FuseKind::Pyramid, 64, levels, pc);
      randomize_all(ps, rng, 0.01);
      Tensor<float> x({1, 64, 16, 16}, 0.3f);
      NoGradGuard ng;
      auto y = s(constant(x), constant(x));
      CHECK(y.shape() == x.shape());
      CHECK(y.value().all_finite());
    }
}

TEST_CASE("pyramid rejects indivisible sizes and mismatched inputs") {
  Rng rng(5);
  ParamStore<double> ps;
  auto p = Pyramid<double>::build(Builder<double>(ps, rng), 2, 3, 2);
  CHECK_THROWS_AS(pyramid_fuse(cv(Tensor<double>({1, 2, 6, 8})), cv(Tensor<double>({1, 2, 6, 8})), p), ShapeError);
  CHECK_THROWS_AS(pyramid_fuse(cv(Tensor<double>({1, 2, 8, 8})), cv(Tensor<double>({1, 2, 4, 8})), p), ShapeError);
  CHECK_THROWS_AS(Pyramid<double>::build(Builder<double>(ps, rng).sub("x"), 2, 4, 2), ConfigError);
}

TEST_CASE("conv and pyramid stages in every combination") {
  Rng rng(6);
  for (FuseKind k1 : {FuseKind::Conv, FuseKind::Pyramid})
    for (FuseKind k2 : {FuseKind::Conv, FuseKind::Pyramid}) {
      ParamStore<double> ps;
      Builder<double> b(ps, rng);
      auto s1 = FuseStage<double>::build(b.sub("s1"), k1, 4, 2, 4);
      auto s2 = FuseStage<double>::build(b.sub("s2"), k2, 4, 2, 4);
      auto g = cv(random_tensor({1, 4, 8, 8}, rng));
      auto out = progressive_fuse(cv(random_tensor({1, 4, 8, 8}, rng)), cv(random_tensor({1, 4, 8, 8}, rng)), g, s1, s2);
      CHECK(out.shape() == g.shape());
    }
}

TEST_CASE("progressive fusion with zero stability inputs fuses a constant with g") {
  Rng rng(7);
  ParamStore<double> ps;
  Builder<double> b(ps, rng);
  auto s1 = FuseStage<double>::build(b.sub("s1"), FuseKind::Conv, 4, 2, 4);
  auto s2 = FuseStage<double>::build(b.sub("s2"), FuseKind::Pyramid, 4, 2, 4);
  s1.conv.weight.mutable_value().fill(0);
  for (std::int64_t c = 0; c < 4; ++c) s1.conv.bias.mutable_value()[c] = 0.1 * static_cast<double>(c + 1);
  auto zero = cv(Tensor<double>({1, 4, 8, 8}));
  auto g = cv(random_tensor({1, 4, 8, 8}, rng));
  Tensor<double> k({1, 4, 8, 8});
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t i = 0; i < 64; ++i) k[c * 64 + i] = 0.1 * static_cast<double>(c + 1);
  CHECK(progressive_fuse(zero, zero, g, s1, s2).value() == s2(cv(k), g).value());
}

TEST_CASE("one-stage fusion equals stage two of the progressive path with shared weights") {
  Rng rng(8);
  ParamStore<double> ps;
  Builder<double> b(ps, rng);
  auto s1 = FuseStage<double>::build(b.sub("s1"), FuseKind::Pyramid, 4, 2, 4);
  auto s2 = FuseStage<double>::build(b.sub("s2"), FuseKind::Pyramid, 4, 2, 4);
  randomize_all(ps, rng, 0.3);
  auto cm = cv(random_tensor({1, 4, 8, 8}, rng));
  auto sa = cv(random_tensor({1, 4, 8, 8}, rng));
  auto g = cv(random_tensor({1, 4, 8, 8}, rng));
  auto mid = s1(cm, sa);
  auto one = one_stage_fuse(mid, g, s2);
  CHECK(one.value() == progressive_fuse(cm, sa, g, s1, s2).value());
  CHECK(one.shape() == g.shape());
}
