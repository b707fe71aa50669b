#include "tcvsr/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include "tcvsr/config.hpp"
#include "tcvsr/flow.hpp"
#include "tcvsr/fusion.hpp"
#include "tcvsr/model.hpp"
#include "tcvsr/stability.hpp"

namespace tcvsr {

GradCheckStats grad_check(const std::function<Var<double>()>& f, const std::vector<Var<double>>& leaves,
                          const GradCheckOptions& opt) {
  Rng rng(opt.seed ^ 0x5EEDu);
  for (const auto& l : leaves) {
    if (!l.defined() || !l.requires_grad()) throw InvalidArgument("grad_check: every leaf must require grad");
  }
  Tensor<double> w;
  auto objective = [&]() {
    Var<double> out = f();
    if (w.size() == 0) {
      w = Tensor<double>(out.shape());
      for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
    }
    return dot(out, w);
  };

  for (auto l : leaves) l.zero_grad();
  objective().backward();
  std::vector<Tensor<double>> analytic;
  for (const auto& l : leaves) analytic.push_back(l.has_grad() ? l.grad() : Tensor<double>(l.shape()));

  GradCheckStats stats;
  NoGradGuard no_grad;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Var<double> leaf = leaves[li];
    const std::int64_t n = leaf.size();
    std::vector<std::int64_t> entries;
    if (opt.max_entries_per_leaf < 0 || n <= opt.max_entries_per_leaf) {
      for (std::int64_t i = 0; i < n; ++i) entries.push_back(i);
    } else {
      for (std::int64_t k = 0; k < opt.max_entries_per_leaf; ++k) entries.push_back(rng.uniform_int(n));
    }
    for (const std::int64_t i : entries) {
      double& x = leaf.mutable_value()[i];
      const double x0 = x;
      x = x0 + opt.step;
      const double fp = objective().value()[0];
      x = x0 - opt.step;
      const double fm = objective().value()[0];
      x = x0;
      const double num = (fp - fm) / (2 * opt.step);
      const double ana = analytic[li][i];
      const double den = std::max({std::abs(ana), std::abs(num), opt.floor});
      stats.max_rel_error = std::max(stats.max_rel_error, std::abs(ana - num) / den);
      ++stats.checked;
    }
  }
  for (auto l : leaves) l.zero_grad();
  return stats;
}

namespace {

Var<double> rand_leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return Var<double>(std::move(t), true);
}

// Magnitudes in [0.2, 1] with random sign, away from activation kinks.
Var<double> rand_leaf_away_from_zero(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
  return Var<double>(std::move(t), true);
}

std::vector<Var<double>> params_of(const ParamStore<double>& s) {
  std::vector<Var<double>> out;
  for (const auto& e : s.entries()) out.push_back(e.var);
  return out;
}

std::vector<Var<double>> join(std::vector<Var<double>> a, const std::vector<Var<double>>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  void check(const std::string& name, const std::function<Var<double>()>& f, const std::vector<Var<double>>& leaves,
             double tol = kGradTolerance, std::int64_t max_entries = -1, double step = 1e-5) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckOptions opt;
    opt.step = step;
    opt.seed = seed_ + results_.size();
    opt.max_entries_per_leaf = max_entries;
    const auto st = grad_check(f, leaves, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results_.push_back({name, st.max_rel_error, tol, st.checked, st.max_rel_error < tol, secs});
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckEntry> take() { return std::move(results_); }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::vector<GradCheckEntry> results_;
};

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
  Suite s(seed);
  Rng& rng = s.rng();

  {
    auto x = rand_leaf(rng, {2, 2, 5, 5}), w = rand_leaf(rng, {3, 2, 3, 3}), b = rand_leaf(rng, {3});
    s.check("conv2d", [=] { return conv2d(x, w, b, 1, 1); }, {x, w, b});
    auto w4 = rand_leaf(rng, {2, 2, 4, 4});
    s.check("conv2d_stride2", [=] { return conv2d(x, w4, Var<double>(), 2, 1); }, {x, w4});
    s.check("conv2d_replicate", [=] { return conv2d(x, w, b, 1, 1, PadMode::Replicate); }, {x, w, b});
  }
  {
    auto x = rand_leaf(rng, {1, 3, 3, 3}), w = rand_leaf(rng, {2, 3, 2, 2}), b = rand_leaf(rng, {2});
    s.check("conv_transpose2d", [=] { return conv_transpose2d(x, w, b, 2, 0); }, {x, w, b});
    auto w3 = rand_leaf(rng, {2, 3, 4, 4});
    s.check("conv_transpose2d_pad", [=] { return conv_transpose2d(x, w3, b, 2, 1); }, {x, w3, b});
  }
  {
    auto a = rand_leaf(rng, {3, 4}), b = rand_leaf(rng, {4, 5});
    s.check("matmul", [=] { return matmul(a, b); }, {a, b});
  }
  {
    auto x = rand_leaf(rng, {4, 6}, -3, 3);
    s.check("softmax_rows", [=] { return softmax_rows(x); }, {x});
  }
  {
    auto x = rand_leaf(rng, {1, 8, 3, 3});
    // Central differences are exact for linear maps at any step; a unit step
    // keeps rounding far below the permutation tolerance.
    s.check("pixel_shuffle", [=] { return pixel_shuffle(x, 2); }, {x}, kPermutationTolerance, -1, 1.0);
    auto y = rand_leaf(rng, {1, 2, 4, 6});
    s.check("pixel_unshuffle", [=] { return pixel_unshuffle(y, 2); }, {y}, kPermutationTolerance, -1, 1.0);
  }
  {
    auto x = rand_leaf_away_from_zero(rng, {2, 7});
    s.check("leaky_relu", [=] { return leaky_relu(x, 0.1); }, {x});
  }
  {
    auto a = rand_leaf(rng, {2, 3}), b = rand_leaf(rng, {2, 3}), g = rand_leaf(rng, {1});
    s.check("add_sub_mul_scale",
            [=] { return scale_by(mul(add(a, b), sub(a, scale(b, 0.5))), g); }, {a, b, g});
    s.check("concat_slice_transpose",
            [=] { return transpose(slice(concat(std::vector<Var<double>>{a, b}, 1), 1, 1, 4)); }, {a, b});
  }
  {
    Rng init(seed + 1);
    ParamStore<double> store;
    Builder<double> bld(store, init);
    auto rb = bld.resblock("rb", 3);
    randomize_all(store, init, 0.4);
    auto x = rand_leaf(rng, {1, 3, 5, 5});
    s.check("resblock", [=] { return rb(x); }, join({x}, params_of(store)));
  }
  {
    auto src = rand_leaf(rng, {1, 2, 5, 6});
    Tensor<double> fl({1, 2, 5, 6});
    // Generic fractional parts keep samples off the bilinear kinks.
    for (auto& v : fl.data()) v = std::floor(rng.uniform(-2, 2)) + rng.uniform(0.1, 0.9);
    auto flow = Var<double>(fl, true);
    s.check("warp", [=] { return warp(src, flow); }, {src, flow});
  }
  {
    auto x = rand_leaf(rng, {1, 2, 4, 6});
    s.check("avg_pool2x", [=] { return avg_pool2x(x); }, {x});
    s.check("upsample2x", [=] { return upsample2x(x); }, {x});
    auto idx = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{5, 0, 5, 47, 12, 3});
    s.check("gather", [=] { return gather(x, idx, Shape{2, 3}); }, {x});
  }
  {
    auto a = rand_leaf(rng, {2, 3, 4}), b = rand_leaf(rng, {2, 3, 4});
    s.check("charbonnier", [=] { return charbonnier(a, b, 1e-3); }, {a, b});
  }
  {
    auto q = rand_leaf(rng, {5, 4}), k = rand_leaf(rng, {5, 4}), v = rand_leaf(rng, {5, 4});
    s.check("self_attention", [=] { return self_attention(q, k, v); }, {q, k, v});
  }
  {
    Rng init(seed + 2);
    ParamStore<double> store;
    auto cmb = CMB<double>::build(Builder<double>(store, init), 4);
    randomize_all(store, init, 0.4);
    auto x = rand_leaf(rng, {1, 4, 3, 4});
    s.check("cmb_forward", [=] { return cmb(x); }, join({x}, params_of(store)));
  }
  {
    Rng init(seed + 3);
    ParamStore<double> store;
    auto tsb = TSB<double>::build(Builder<double>(store, init), 3, 2, 6);
    randomize_all(store, init, 0.3);
    std::vector<Var<double>> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(rand_leaf(rng, {1, 3, 4, 4}));
    s.check("tsb_forward", [=] { return concat(tsb(frames), 0); }, join(frames, params_of(store)));
  }
  for (int levels : {2, 3}) {
    Rng init(seed + 4 + levels);
    ParamStore<double> store;
    auto pyr = Pyramid<double>::build(Builder<double>(store, init), 3, levels, 4);
    randomize_all(store, init, 0.3);
    auto a = rand_leaf(rng, {1, 3, 8, 8}), b = rand_leaf(rng, {1, 3, 8, 8});
    s.check("pyramid_fuse_l" + std::to_string(levels), [=] { return pyramid_fuse(a, b, pyr); },
            join({a, b}, params_of(store)));
  }
  for (int scale : {2, 4}) {
    Rng init(seed + 10 + scale);
    ParamStore<double> store;
    auto rec = Reconstructor<double>::build(Builder<double>(store, init), 2, scale);
    randomize_all(store, init, 0.4);
    auto r = rand_leaf(rng, {1, 2, 3, 3});
    s.check("reconstruct_x" + std::to_string(scale), [=] { return rec(r); }, join({r}, params_of(store)));
  }
  {
    Rng init(seed + 20);
    ParamStore<double> store;
    auto net = FlowNet<double>::build(Builder<double>(store, init), 2, 4);
    randomize_all(store, init, 0.3);
    auto ref = rand_leaf(rng, {1, 3, 4, 4}, 0, 1), src = rand_leaf(rng, {1, 3, 4, 4}, 0, 1);
    s.check("estimate_flow", [=] { return net.estimate(ref, src); }, join({ref, src}, params_of(store)));
  }
  {
    // Tiny composed pipeline: T = 4, C = 4, 8 x 8 LR frames.
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.resblocks = 1;
    cfg.cmb_blocks = 1;
    cfg.tsb_blocks = 1;
    cfg.patch3d = 2;
    cfg.scale = 2;
    cfg.pyramid_levels = 2;
    cfg.pyramid_channels = 4;
    cfg.flow_levels = 2;
    cfg.flow_channels = 4;
    cfg.embed_dim = 8;
    auto model = std::make_shared<Model<double>>(cfg, seed + 30);
    Rng init(seed + 31);
    randomize_all(model->params(), init, 0.25);
    std::vector<Var<double>> frames;
    for (int t = 0; t < 4; ++t) frames.push_back(rand_leaf(rng, {1, 3, 8, 8}, 0, 1));
    s.check("pipeline", [=] { return concat(model->forward(frames).sr, 0); }, join(frames, params_of(model->params())),
            kGradTolerance, 6);
  }
  return s.take();
}

GradCheckEntry run_negative_control(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf_away_from_zero(rng, {3, 3});
  auto wrong_square = [](const Var<double>& a) {
    Tensor<double> y = a.value();
    for (auto& v : y.data()) v = v * v;
    return make_op<double>("wrong_square", std::move(y), {a}, [](Node<double>& n) {
      Tensor<double> g = n.grad;
      const auto& xv = n.parents[0]->value;
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= xv[i];  // should be 2 x
      accumulate_grad(n.parents[0].get(), g);
    });
  };
  GradCheckOptions opt;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto st = grad_check([=] { return wrong_square(x); }, {x}, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {"negative_control", st.max_rel_error, kGradTolerance, st.checked, st.max_rel_error < kGradTolerance, secs};
}

}  // namespace tcvsr
