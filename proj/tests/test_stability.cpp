#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcvsr/stability.hpp"

using namespace tcvsr;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Var<double> cv(Tensor<double> t) { return constant(std::move(t)); }

}  // namespace

TEST_CASE("patch grid counts") {
  auto g = PatchGrid3D::make(8, 64, 64, 64, 8, 8, 8);
  CHECK(g.tokens() == 64);
  CHECK(g.token_dim() == 32768);
  auto s = PatchGrid3D::make(4, 2, 4, 4, 2, 2, 2);
  CHECK(s.tokens() == 8);
  CHECK(s.token_dim() == 16);
  CHECK_THROWS_AS(PatchGrid3D::make(4, 2, 5, 4, 2, 2, 2), ShapeError);
}

TEST_CASE("unfold places each cell in one token, time-major then row-major") {
  const auto g = PatchGrid3D::make(2, 1, 2, 4, 1, 2, 2);
  Tensor<double> v({2, 1, 2, 4});
  std::iota(v.storage().begin(), v.storage().end(), 0.0);
  auto tok = embed_3d_patches(cv(v), g).value();
  REQUIRE(tok.shape() == Shape{4, 4});
  // token 1 is frame 0, cell (0, 1): pixels (0,2) (0,3) (1,2) (1,3)
  CHECK(tok(1, 0) == 2);
  CHECK(tok(1, 1) == 3);
  CHECK(tok(1, 2) == 6);
  CHECK(tok(1, 3) == 7);
  CHECK(tok(2, 0) == 8);  // first cell of frame 1
}

TEST_CASE("fold inverts unfold on random grids") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t tp = 1 + rng.uniform_int(3), hp = 1 + rng.uniform_int(3), wp = 1 + rng.uniform_int(3);
    const std::int64_t T = tp * (1 + rng.uniform_int(3)), H = hp * (1 + rng.uniform_int(3)),
                       W = wp * (1 + rng.uniform_int(3)), C = 1 + rng.uniform_int(4);
    const auto g = PatchGrid3D::make(T, C, H, W, tp, hp, wp);
    auto v = random_tensor({T, C, H, W}, rng);
    auto tok = embed_3d_patches(cv(v), g);
    CHECK(tok.shape() == Shape{g.tokens(), g.token_dim()});
    CHECK(fold_3d_patches(tok, g).value() == v);
  }
}

TEST_CASE("attention rows are distributions") {
  Rng rng(2);
  auto m = attention_map(cv(random_tensor({7, 5}, rng, -3, 3)), cv(random_tensor({7, 5}, rng, -3, 3))).value();
  for (std::int64_t i = 0; i < 7; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < 7; ++j) {
      CHECK(m(i, j) >= 0);
      CHECK(m(i, j) <= 1);
      s += m(i, j);
    }
    CHECK(std::abs(s - 1) < 1e-12);
  }
}

TEST_CASE("self attention closed forms") {
  Rng rng(3);
  auto v1 = random_tensor({1, 6}, rng);
  CHECK(self_attention(cv(random_tensor({1, 6}, rng)), cv(random_tensor({1, 6}, rng)), cv(v1)).value() == v1);

  Tensor<double> q({4, 3}, 0.5);
  auto v = random_tensor({4, 3}, rng);
  auto y = self_attention(cv(q), cv(q), cv(v)).value();
  for (std::int64_t k = 0; k < 3; ++k) {
    const double mean = (v(0, k) + v(1, k) + v(2, k) + v(3, k)) / 4;
    for (std::int64_t i = 0; i < 4; ++i) CHECK(std::abs(y(i, k) - mean) < 1e-12);
  }
}

TEST_CASE("self attention stays in the convex hull of the values") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + rng.uniform_int(8), d = 1 + rng.uniform_int(6);
    auto v = random_tensor({n, d}, rng, -5, 5);
    auto y = self_attention(cv(random_tensor({n, d}, rng, -4, 4)), cv(random_tensor({n, d}, rng, -4, 4)), cv(v)).value();
    for (std::int64_t k = 0; k < d; ++k) {
      double lo = 1e300, hi = -1e300;
      for (std::int64_t j = 0; j < n; ++j) lo = std::min(lo, v(j, k)), hi = std::max(hi, v(j, k));
      for (std::int64_t i = 0; i < n; ++i) {
        CHECK(y(i, k) >= lo - 1e-9);
        CHECK(y(i, k) <= hi + 1e-9);
      }
    }
  }
}

TEST_CASE("self attention is permutation equivariant") {
  Rng rng(5);
  const std::int64_t n = 6, d = 4;
  auto q = random_tensor({n, d}, rng), k = random_tensor({n, d}, rng), v = random_tensor({n, d}, rng);
  const std::vector<std::int64_t> perm{3, 0, 5, 1, 4, 2};
  auto permute = [&](const Tensor<double>& t) {
    Tensor<double> p(t.shape());
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j) p(i, j) = t(perm[i], j);
    return p;
  };
  auto y = self_attention(cv(q), cv(k), cv(v)).value();
  auto yp = self_attention(cv(permute(q)), cv(permute(k)), cv(permute(v))).value();
  auto expect = permute(y);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(std::abs(yp[i] - expect[i]) < 1e-12);
}

TEST_CASE("scaled logits reach the hard-warp limit") {
  // Unit keys along distinct axes; each query points at one key.
  const std::int64_t n = 4;
  Tensor<double> k({n, n}), q({n, n});
  const std::vector<std::int64_t> match{2, 0, 3, 1};
  for (std::int64_t i = 0; i < n; ++i) {
    k(i, i) = 1;
    q(i, match[i]) = 100;
  }
  Rng rng(6);
  auto v = random_tensor({n, 3}, rng);
  auto y = self_attention(cv(q), cv(k), cv(v)).value();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < 3; ++j) CHECK(std::abs(y(i, j) - v(match[i], j)) < 1e-3);
}

TEST_CASE("cmb on a spatially constant map has uniform position attention") {
  Rng rng(7);
  ParamStore<double> ps;
  auto cmb = CMB<double>::build(Builder<double>(ps, rng), 8);
  randomize_all(ps, rng, 0.5);
  Tensor<double> x({1, 8, 4, 5});
  for (std::int64_t c = 0; c < 8; ++c)
    for (std::int64_t i = 0; i < 20; ++i) x[c * 20 + i] = 0.1 * static_cast<double>(c) - 0.3;
  auto a = cmb.position_attention(cv(x)).value();
  for (double w : a.data()) CHECK(std::abs(w - 1.0 / 20) < 1e-12);
}

TEST_CASE("cmb preserves the feature shape") {
  Rng rng(8);
  ParamStore<float> ps;
  auto cmb = CMB<float>::build(Builder<float>(ps, rng), 64);
  Tensor<float> x({1, 64, 32, 32});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  NoGradGuard ng;
  CHECK(cmb(constant(x)).shape() == x.shape());
  Tensor<float> xb({2, 64, 8, 8});
  CHECK(cmb(constant(xb)).shape() == xb.shape());
  CHECK_THROWS_AS(cmb(constant(Tensor<float>({1, 32, 8, 8}))), ShapeError);
}

TEST_CASE("pam output approaches the value of a dominant key") {
  Rng rng(9);
  ParamStore<double> ps;
  auto cmb = CMB<double>::build(Builder<double>(ps, rng), 8);
  const std::int64_t H = 3, W = 3, HW = 9, star = 4;
  Tensor<double> x({1, 8, H, W});
  for (auto& v : x.data()) v = rng.uniform(0.0, 0.1);
  x(0, 0, 1, 1) = 1.0;  // channel 0 marks the dominant position
  // Queries are constant, keys read channel 0 with a x100 gain.
  auto& qw = cmb.query.weight.mutable_value();
  auto& kw = cmb.key.weight.mutable_value();
  qw.fill(0);
  kw.fill(0);
  cmb.query.bias.mutable_value().fill(0);
  cmb.key.bias.mutable_value().fill(0);
  cmb.query.bias.mutable_value()[0] = 1.0;
  kw(0, 0, 0, 0) = 100.0;
  auto out = cmb.pam(cv(x)).value();
  auto v = cmb.value(cv(x)).value();
  for (std::int64_t c = 0; c < 8; ++c)
    for (std::int64_t p = 0; p < HW; ++p) CHECK(std::abs(out[c * HW + p] - v[c * HW + star]) < 1e-3);
}

TEST_CASE("cam starts as the identity because its gate is zero") {
  Rng rng(10);
  ParamStore<double> ps;
  auto cmb = CMB<double>::build(Builder<double>(ps, rng), 4);
  auto x = random_tensor({1, 4, 3, 3}, rng);
  CHECK(cmb.cam(cv(x)).value() == x);
}

TEST_CASE("tsb with a zero output projection is the residual path") {
  Rng rng(11);
  ParamStore<double> ps;
  auto tsb = TSB<double>::build(Builder<double>(ps, rng), 4, 2, 8);
  std::vector<Var<double>> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(cv(random_tensor({1, 4, 4, 4}, rng)));
  auto out = tsb(frames);
  auto pre = tsb.preprocess(concat(frames, 0)).value();
  REQUIRE(out.size() == 5);
  for (std::int64_t t = 0; t < 5; ++t) {
    REQUIRE(out[t].shape() == Shape{1, 4, 4, 4});
    for (std::int64_t i = 0; i < 64; ++i) CHECK(out[t].value()[i] == pre[t * 64 + i]);
  }
}

TEST_CASE("tsb on a static clip repeats with the window period") {
  Rng rng(12);
  ParamStore<double> ps;
  auto tsb = TSB<double>::build(Builder<double>(ps, rng), 4, 2, 8);
  randomize_all(ps, rng, 0.3);
  auto f = cv(random_tensor({1, 4, 4, 4}, rng));
  auto out = tsb({f, f, f, f});
  // Tokens span two frames, so positions inside a window may differ, but
  // the same position in every window sees the same content.
  REQUIRE(out.size() == 4);
  for (std::size_t t = 2; t < out.size(); ++t)
    for (std::int64_t i = 0; i < 64; ++i) CHECK(std::abs(out[t].value()[i] - out[t - 2].value()[i]) < 1e-12);
}

TEST_CASE("tsb output shapes at full and toy sizes") {
  Rng rng(13);
  {
    ParamStore<float> ps;
    auto tsb = TSB<float>::build(Builder<float>(ps, rng), 16, 4, 64);
    std::vector<Var<float>> frames(4, constant(Tensor<float>({1, 16, 8, 8}, 0.5f)));
    NoGradGuard ng;
    auto out = run_tsb_stack(std::vector<TSB<float>>{tsb, tsb}, frames);
    REQUIRE(out.size() == 4);
    for (const auto& o : out) CHECK(o.shape() == Shape{1, 16, 8, 8});
  }
  {
    ParamStore<float> ps;
    auto tsb = TSB<float>::build(Builder<float>(ps, rng), 64, 8, 256);
    std::vector<Var<float>> frames(8, constant(Tensor<float>({1, 64, 64, 64}, 0.25f)));
    NoGradGuard ng;
    auto out = tsb(frames);
    REQUIRE(out.size() == 8);
    for (const auto& o : out) CHECK(o.shape() == Shape{1, 64, 64, 64});
  }
}

TEST_CASE("empty block stacks pass features through") {
  Rng rng(14);
  auto x = cv(random_tensor({1, 4, 4, 4}, rng));
  CHECK(run_cmb_stack(std::vector<CMB<double>>{}, x).value() == x.value());
  auto ys = run_tsb_stack(std::vector<TSB<double>>{}, {x, x});
  REQUIRE(ys.size() == 2);
  CHECK(ys[1].value() == x.value());
}
