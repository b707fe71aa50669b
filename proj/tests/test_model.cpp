#include <doctest.h>

#include <cmath>

#include "tcvsr/model.hpp"

using namespace tcvsr;

namespace {

ModelConfig tiny(Variant v = Variant::Hybrid) {
  ModelConfig c;
  c.channels = 4;
  c.resblocks = 1;
  c.cmb_blocks = 1;
  c.tsb_blocks = 1;
  c.patch3d = 2;
  c.scale = 2;
  c.pyramid_levels = 2;
  c.pyramid_channels = 4;
  c.flow_levels = 2;
  c.flow_channels = 4;
  c.embed_dim = 8;
  c.variant = v;
  return c;
}

std::vector<Var<double>> random_frames(int n, Rng& rng, std::int64_t h = 8, std::int64_t w = 8) {
  std::vector<Var<double>> out;
  for (int t = 0; t < n; ++t) {
    Tensor<double> f({1, 3, h, w});
    for (auto& v : f.data()) v = rng.uniform();
    out.push_back(constant(std::move(f)));
  }
  return out;
}

bool same(const std::vector<Var<double>>& a, const std::vector<Var<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i].value() == b[i].value())) return false;
  return true;
}

}  // namespace

TEST_CASE("propagation features only look one frame ahead") {
  Rng rng(1);
  Model<double> m(tiny(), 3);
  randomize_all(m.params(), rng, 0.3);
  auto frames = random_frames(6, rng);
  const auto base = m.propagate(frames, m.align(frames));
  for (std::size_t k = 2; k < frames.size(); ++k) {
    auto changed = frames;
    Tensor<double> f = frames[k].value();
    for (auto& v : f.data()) v = 1.0 - v;
    changed[k] = constant(f);
    const auto g = m.propagate(changed, m.align(changed));
    // g_i for i + 1 < k must not move; g_{k-1} sees x_k through h_next.
    for (std::size_t i = 0; i + 1 < k; ++i) CHECK(g[i].value() == base[i].value());
    CHECK_FALSE(g[k - 1].value() == base[k - 1].value());
  }
}

TEST_CASE("variants differ in which neighbours they consume") {
  Rng rng(2);
  for (Variant v : {Variant::Vanilla, Variant::Motion}) {
    Model<double> m(tiny(v), 4);
    randomize_all(m.params(), rng, 0.3);
    auto frames = random_frames(4, rng);
    const auto base = m.propagate(frames, m.align(frames));
    auto changed = frames;
    changed[2] = constant(Tensor<double>({1, 3, 8, 8}, 0.5));
    const auto g = m.propagate(changed, m.align(changed));
    CHECK(g[1].value() == base[1].value());  // no look-ahead without the backward branch
  }
  Model<double> vanilla(tiny(Variant::Vanilla), 4);
  CHECK(vanilla.params().count(ParamGroup::Flow) == 0);
  Model<double> hybrid(tiny(Variant::Hybrid), 4);
  CHECK(hybrid.params().count(ParamGroup::Flow) > 0);
}

TEST_CASE("static sequence gives equal propagation features after warm-up") {
  Rng rng(3);
  Model<double> m(tiny(), 5);
  randomize_all(m.params(), rng, 0.1);
  // Keep the recurrence contractive so the hidden state settles.
  for (auto& e : m.params().entries()) {
    if (e.name == "prop.head.weight") {
      auto& w = e.var.mutable_value();
      for (std::int64_t o = 0; o < w.dim(0); ++o)
        for (std::int64_t i = 3 + 4; i < 3 + 8; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) w(o, i, ky, kx) *= 0.01;
    }
  }
  auto f = random_frames(1, rng)[0];
  std::vector<Var<double>> frames(7, f);
  const auto g = m.propagate(frames, m.align(frames));
  // The last frame has no forward neighbour, so it is excluded.
  for (std::size_t i = 3; i + 1 < g.size(); ++i)
    for (std::int64_t k = 0; k < g[i].size(); ++k) CHECK(std::abs(g[i].value()[k] - g[2].value()[k]) < 1e-5);
}

TEST_CASE("single-frame sequences run without neighbours") {
  Rng rng(4);
  Model<double> m(tiny(), 6);
  randomize_all(m.params(), rng, 0.3);
  auto out = m.forward(random_frames(1, rng), true);
  REQUIRE(out.sr.size() == 1);
  CHECK(out.sr[0].shape() == Shape{1, 3, 16, 16});
  CHECK_FALSE(out.align[0].h_prev.defined());
  CHECK_FALSE(out.align[0].h_next.defined());
}

TEST_CASE("forward is deterministic and shapes follow the configuration") {
  Rng rng(5);
  auto frames = random_frames(5, rng);
  Model<double> a(tiny(), 9), b(tiny(), 9);
  auto oa = a.forward(frames, true), ob = b.forward(frames, true);
  CHECK(same(oa.sr, ob.sr));
  for (const auto* v : {&oa.g, &oa.g_cm, &oa.g_sa, &oa.g_hat, &oa.refined}) {
    REQUIRE(v->size() == 5);
    for (const auto& x : *v) CHECK(x.shape() == Shape{1, 4, 8, 8});
  }
  CHECK_THROWS_AS(a.forward(random_frames(2, rng, 5, 8)), ShapeError);
}

TEST_CASE("refinement reuses the propagation-stage alignment") {
  Rng rng(6);
  Model<double> m(tiny(), 10);
  randomize_all(m.params(), rng, 0.3);
  auto frames = random_frames(3, rng);
  auto out = m.forward(frames, true);
  auto again = m.align(frames);
  for (std::size_t i = 0; i < 3; ++i) {
    if (out.align[i].h_prev.defined()) CHECK(out.align[i].h_prev.value() == again[i].h_prev.value());
    if (out.align[i].h_next.defined()) CHECK(out.align[i].h_next.value() == again[i].h_next.value());
  }
  // R_i is the refine stack applied to exactly those aligned frames.
  auto r1 = m.refiner()(frames[1], out.g_hat[1], out.align[1].h_prev, out.align[1].h_next);
  CHECK(r1.value() == out.refined[1].value());
}

TEST_CASE("reconstruction shape laws and dead-network output") {
  Rng rng(7);
  ParamStore<float> ps;
  Builder<float> b(ps, rng);
  auto r4 = Reconstructor<float>::build(b.sub("r4"), 16, 4);
  auto r2 = Reconstructor<float>::build(b.sub("r2"), 16, 2);
  Tensor<float> x({1, 16, 32, 32}, 0.2f);
  NoGradGuard ng;
  CHECK(r4(constant(x)).shape() == Shape{1, 3, 128, 128});
  CHECK(r2(constant(x)).shape() == Shape{1, 3, 64, 64});
  CHECK_THROWS_AS(Reconstructor<float>::build(b.sub("r3"), 16, 3), ConfigError);

  for (auto& e : ps.entries()) e.var.mutable_value().fill(0);
  const std::vector<float> bias{0.1f, 0.5f, 0.9f};
  for (int c = 0; c < 3; ++c) r4.out.bias.mutable_value()[c] = bias[c];
  auto y = r4(constant(x)).value();
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 128 * 128; ++i) CHECK(y[c * 128 * 128 + i] == bias[c]);
}

TEST_CASE("refine with a zero residual stack passes the head projection through") {
  Rng rng(8);
  ParamStore<double> ps;
  auto p = Propagator<double>::build(Builder<double>(ps, rng), Variant::Hybrid, true, 4, 2);
  auto x = random_frames(3, rng);
  auto state = constant(Tensor<double>({1, 4, 8, 8}));
  auto out = p(x[1], state, x[0], x[2]);
  auto head = p.head(concat<double>({p.lift_prev(x[0]), x[1], p.lift_next(x[2]), state}, 1));
  CHECK(out.value() == head.value());
  CHECK(out.shape() == Shape{1, 4, 8, 8});
}

TEST_CASE("toy model super-resolves and clamps, cropping to the size multiple") {
  Config c = Config::preset("toy");
  Model<float> m(ModelConfig::from(c), 1);
  Rng init(2);
  randomize_all(m.params(), init, 0.2);
  std::vector<Tensor<float>> lr(3, Tensor<float>({3, 18, 21}, 0.7f));
  auto sr = super_resolve(m, lr);
  REQUIRE(sr.size() == 3);
  CHECK(sr[0].shape() == Shape{3, 64, 80});
  for (float v : sr[1].data()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(super_resolve(m, {Tensor<float>({3, 2, 2})}), ShapeError);
}

TEST_CASE("stability and fusion parameters follow the branch switches") {
  auto count = [](bool cmb, bool tsb) {
    ModelConfig c = tiny();
    c.use_cmb = cmb;
    c.use_tsb = tsb;
    Model<float> m(c, 1);
    bool has_stage1 = false, has_cmb = false, has_tsb = false;
    for (const auto& e : m.params().entries()) {
      has_stage1 |= e.name.rfind("fuse.stage1", 0) == 0;
      has_cmb |= e.name.rfind("cmb.", 0) == 0;
      has_tsb |= e.name.rfind("tsb.", 0) == 0;
    }
    CHECK(has_stage1 == (cmb && tsb));
    CHECK(has_cmb == cmb);
    CHECK(has_tsb == tsb);
    return m.params().count();
  };
  const auto none = count(false, false), c = count(true, false), t = count(false, true), both = count(true, true);
  CHECK(none < c);
  CHECK(none < t);
  CHECK(both > c);
  CHECK(both > t);
}
