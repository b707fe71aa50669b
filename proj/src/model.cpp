#include "tcvsr/model.hpp"

#include <algorithm>

namespace tcvsr {

template <typename T>
Propagator<T> Propagator<T>::build(Builder<T> b, Variant variant, bool refine, std::int64_t channels, int resblocks) {
  Propagator p;
  p.variant = variant;
  p.refine = refine;
  p.channels = channels;
  std::int64_t in = 3 + channels;
  if (variant != Variant::Vanilla) {
    p.lift_prev = b.conv("lift_prev", 3, channels, 3);
    in += channels;
  }
  if (variant == Variant::Hybrid) {
    p.lift_next = b.conv("lift_next", 3, channels, 3);
    in += channels;
  }
  p.head = b.conv("head", in, channels, 3);
  p.body = b.res_stack("body", channels, resblocks);
  return p;
}

template <typename T>
Var<T> Propagator<T>::operator()(const Var<T>& x, const Var<T>& state, const Var<T>& h_prev,
                                 const Var<T>& h_next) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("propagate: frame must be B x 3 x H x W");
  const Shape fshape{x.dim(0), channels, x.dim(2), x.dim(3)};
  if (state.shape() != fshape) {
    throw ShapeError("propagate: state " + shape_str(state.shape()) + " expected " + shape_str(fshape));
  }
  auto lifted = [&](const Conv<T>& c, const Var<T>& h) { return h.defined() ? c(h) : constant(Tensor<T>(fshape)); };
  std::vector<Var<T>> parts;
  switch (variant) {
    case Variant::Vanilla:
      parts = {x, state};
      break;
    case Variant::Motion:
      parts = {lifted(lift_prev, h_prev), x, state};
      break;
    case Variant::Hybrid:
      if (refine) {
        parts = {lifted(lift_prev, h_prev), x, lifted(lift_next, h_next), state};
      } else {
        parts = {lifted(lift_prev, h_prev), x, state, lifted(lift_next, h_next)};
      }
      break;
  }
  return run_stack(body, head(concat(parts, 1)));
}

template <typename T>
Reconstructor<T> Reconstructor<T>::build(Builder<T> b, std::int64_t channels, int scale) {
  if (scale != 2 && scale != 4) throw ConfigError("reconstruct: scale must be 2 or 4");
  Reconstructor r;
  r.scale = scale;
  for (int s = 0; s < (scale == 4 ? 2 : 1); ++s) r.ups.push_back(b.conv("up" + std::to_string(s), channels, 4 * channels, 3));
  r.out = b.conv("out", channels, 3, 3);
  return r;
}

template <typename T>
Var<T> Reconstructor<T>::operator()(const Var<T>& r) const {
  Var<T> h = r;
  for (const auto& u : ups) h = lrelu(pixel_shuffle(u(h), 2));
  return out(h);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  Builder<T> root(params_, rng);
  const std::int64_t C = cfg_.channels;
  if (cfg_.variant != Variant::Vanilla) {
    flow_ = FlowNet<T>::build(root.with_group(ParamGroup::Flow).sub("flow"), cfg_.flow_levels, cfg_.flow_channels);
  }
  prop_ = Propagator<T>::build(root.sub("prop"), cfg_.variant, false, C, cfg_.resblocks);
  if (cfg_.use_cmb) {
    for (int i = 0; i < cfg_.cmb_blocks; ++i) cmb_.push_back(CMB<T>::build(root.sub("cmb." + std::to_string(i)), C));
  }
  if (cfg_.use_tsb) {
    for (int i = 0; i < cfg_.tsb_blocks; ++i) {
      tsb_.push_back(TSB<T>::build(root.sub("tsb." + std::to_string(i)), C, cfg_.patch3d, cfg_.embed_dim));
    }
  }
  if (cfg_.use_cmb && cfg_.use_tsb) {
    stage1_ = FuseStage<T>::build(root.sub("fuse.stage1"), cfg_.fusion_stage1, C, cfg_.pyramid_levels,
                                  cfg_.pyramid_channels);
    stage2_ = FuseStage<T>::build(root.sub("fuse.stage2"), cfg_.fusion_stage2, C, cfg_.pyramid_levels,
                                  cfg_.pyramid_channels);
  } else {
    stage2_ = FuseStage<T>::build(root.sub("fuse.one_stage"), cfg_.fusion_stage2, C, cfg_.pyramid_levels,
                                  cfg_.pyramid_channels);
  }
  refine_ = Propagator<T>::build(root.sub("refine"), cfg_.variant, true, C, cfg_.resblocks);
  recon_ = Reconstructor<T>::build(root.sub("recon"), C, cfg_.scale);
}

template <typename T>
std::vector<Alignment<T>> Model<T>::align(const std::vector<Var<T>>& frames) const {
  const std::size_t n = frames.size();
  std::vector<Alignment<T>> al(n);
  if (cfg_.variant == Variant::Vanilla) return al;
  for (std::size_t i = 0; i < n; ++i) {
    const Var<T> prev = i > 0 ? frames[i - 1] : Var<T>();
    const Var<T> next = cfg_.variant == Variant::Hybrid && i + 1 < n ? frames[i + 1] : Var<T>();
    al[i] = align_bidirectional(flow_, prev, frames[i], next);
  }
  return al;
}

template <typename T>
std::vector<Var<T>> Model<T>::propagate(const std::vector<Var<T>>& frames, const std::vector<Alignment<T>>& al) const {
  std::vector<Var<T>> g;
  if (frames.empty()) return g;
  const auto& x0 = frames[0];
  Var<T> state = constant(Tensor<T>({x0.dim(0), cfg_.channels, x0.dim(2), x0.dim(3)}));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    Var<T> s = state;
    if (cfg_.variant != Variant::Vanilla && i > 0) s = warp(state, al[i].flow_prev);
    state = prop_(frames[i], s, al[i].h_prev, al[i].h_next);
    g.push_back(state);
  }
  return g;
}

template <typename T>
std::vector<Var<T>> Model<T>::fuse(const std::vector<Var<T>>& g, std::vector<Var<T>>* g_cm_out,
                                   std::vector<Var<T>>* g_sa_out) const {
  std::vector<Var<T>> g_cm, g_sa;
  if (cfg_.use_cmb) {
    for (const auto& gi : g) g_cm.push_back(run_cmb_stack(cmb_, gi));
  }
  if (cfg_.use_tsb) g_sa = run_tsb_stack(tsb_, g);
  std::vector<Var<T>> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (cfg_.use_cmb && cfg_.use_tsb) {
      out.push_back(progressive_fuse(g_cm[i], g_sa[i], g[i], stage1_, stage2_));
    } else if (cfg_.use_cmb) {
      out.push_back(one_stage_fuse(g_cm[i], g[i], stage2_));
    } else if (cfg_.use_tsb) {
      out.push_back(one_stage_fuse(g_sa[i], g[i], stage2_));
    } else {
      // No stability branch: the propagation feature is fused with itself.
      out.push_back(one_stage_fuse(g[i], g[i], stage2_));
    }
  }
  if (g_cm_out) *g_cm_out = std::move(g_cm);
  if (g_sa_out) *g_sa_out = std::move(g_sa);
  return out;
}

template <typename T>
SequenceOutputs<T> Model<T>::forward(const std::vector<Var<T>>& frames, bool keep, bool flow_grad) const {
  if (frames.empty()) throw InvalidArgument("forward: empty frame list");
  const int mult = cfg_.size_multiple();
  for (const auto& f : frames) {
    if (f.shape() != frames[0].shape() || f.rank() != 4 || f.dim(1) != 3) {
      throw ShapeError("forward: frames must share a B x 3 x H x W shape");
    }
    if (f.dim(2) % mult || f.dim(3) % mult) {
      throw ShapeError("forward: frame size " + shape_str(f.shape()) + " must be a multiple of " +
                       std::to_string(mult));
    }
  }
  SequenceOutputs<T> out;
  auto al = align(frames);
  auto used = al;
  if (!flow_grad) {
    auto cut = [](Var<T>& v) {
      if (v.defined()) v = constant(v.value());
    };
    for (auto& a : used) {
      cut(a.flow_prev);
      cut(a.flow_next);
      cut(a.h_prev);
      cut(a.h_next);
    }
  }
  auto g = propagate(frames, used);
  auto g_hat = fuse(g, keep ? &out.g_cm : nullptr, keep ? &out.g_sa : nullptr);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto r = refine_(frames[i], g_hat[i], used[i].h_prev, used[i].h_next);
    out.sr.push_back(recon_(r));
    if (keep) out.refined.push_back(r);
  }
  if (keep) {
    out.align = std::move(al);
    out.g = std::move(g);
    out.g_hat = std::move(g_hat);
  }
  return out;
}

std::vector<Tensor<float>> super_resolve(const Model<float>& model, const std::vector<Tensor<float>>& lr) {
  if (lr.empty()) throw InvalidArgument("super_resolve: no frames");
  const int mult = model.config().size_multiple();
  const std::int64_t H = lr[0].dim(1), W = lr[0].dim(2);
  const std::int64_t h = H / mult * mult, w = W / mult * mult;
  if (h == 0 || w == 0) {
    throw ShapeError("super_resolve: frames smaller than the required multiple " + std::to_string(mult));
  }
  NoGradGuard no_grad;
  std::vector<Var<float>> frames;
  for (const auto& f : lr) {
    if (f.rank() != 3 || f.dim(0) != 3 || f.dim(1) != H || f.dim(2) != W) {
      throw ShapeError("super_resolve: frames must share a 3 x H x W shape");
    }
    Tensor<float> t({1, 3, h, w});
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) t(0, c, y, x) = f(c, y, x);
    frames.push_back(constant(std::move(t)));
  }
  auto res = model.forward(frames);
  std::vector<Tensor<float>> out;
  for (auto& s : res.sr) {
    const auto& v = s.value();
    Tensor<float> img({3, v.dim(2), v.dim(3)});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = std::clamp(v[i], 0.0f, 1.0f);
    out.push_back(std::move(img));
  }
  return out;
}

template struct Propagator<float>;
template struct Propagator<double>;
template struct Reconstructor<float>;
template struct Reconstructor<double>;
template class Model<float>;
template class Model<double>;

}  // namespace tcvsr
