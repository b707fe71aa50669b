#include "tcvsr/fusion.hpp"

namespace tcvsr {

template <typename T>
Pyramid<T> Pyramid<T>::build(Builder<T> b, std::int64_t channels, int levels, std::int64_t pyramid_channels) {
  if (levels != 2 && levels != 3) throw ConfigError("pyramid levels must be 2 or 3");
  const std::int64_t c = channels;
  const std::int64_t p = pyramid_channels > 0 ? pyramid_channels : channels;
  Pyramid w;
  w.proj = b.conv("proj", 2 * c, c, 1);
  w.pre = b.res_stack("pre", c, 2);
  w.down = b.conv("down", c, p, 4, 2, 1);
  w.mid = b.res_stack("mid", p, 2);
  w.nested = levels == 3;
  if (w.nested) {
    w.down2 = b.conv("down2", p, p, 4, 2, 1);
    w.inner = b.res_stack("inner", p, 2);
    w.up2 = b.conv_t("up2", p, p, 2, 2, true);
  }
  w.up = b.conv_t("up", p, c, 2, 2, true);
  return w;
}

template <typename T>
Var<T> pyramid_fuse(const Var<T>& a, const Var<T>& b, const Pyramid<T>& w) {
  if (a.shape() != b.shape() || a.rank() != 4) {
    throw ShapeError("pyramid_fuse: inputs " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  const std::int64_t div = std::int64_t{1} << (w.levels() - 1);
  if (a.dim(2) % div || a.dim(3) % div) {
    throw ShapeError("pyramid_fuse: spatial size not divisible by " + std::to_string(div));
  }
  auto p = w.proj(concat<T>({a, b}, 1));
  auto m = run_stack(w.mid, w.down(run_stack(w.pre, p)));
  if (w.nested) m = add(m, w.up2(run_stack(w.inner, w.down2(m))));
  return add(w.up(m), p);
}

template <typename T>
FuseStage<T> FuseStage<T>::build(Builder<T> b, FuseKind kind, std::int64_t channels, int levels,
                                 std::int64_t pyramid_channels) {
  FuseStage s;
  s.kind = kind;
  if (kind == FuseKind::Conv) {
    s.conv = b.conv("conv", 2 * channels, channels, 3);
  } else {
    s.pyramid = Pyramid<T>::build(b, channels, levels, pyramid_channels);
  }
  return s;
}

template <typename T>
Var<T> FuseStage<T>::operator()(const Var<T>& a, const Var<T>& b) const {
  if (kind == FuseKind::Pyramid) return pyramid_fuse(a, b, pyramid);
  if (a.shape() != b.shape()) throw ShapeError("fuse: inputs differ in shape");
  return conv(concat<T>({a, b}, 1));
}

template <typename T>
Var<T> progressive_fuse(const Var<T>& g_cm, const Var<T>& g_sa, const Var<T>& g, const FuseStage<T>& stage1,
                        const FuseStage<T>& stage2) {
  return stage2(stage1(g_cm, g_sa), g);
}

template <typename T>
Var<T> one_stage_fuse(const Var<T>& x, const Var<T>& g, const FuseStage<T>& stage) {
  return stage(x, g);
}

#define TCVSR_INSTANTIATE_FUSION(T)                                                                          \
  template struct Pyramid<T>;                                                                                \
  template struct FuseStage<T>;                                                                              \
  template Var<T> pyramid_fuse(const Var<T>&, const Var<T>&, const Pyramid<T>&);                             \
  template Var<T> progressive_fuse(const Var<T>&, const Var<T>&, const Var<T>&, const FuseStage<T>&,        \
                                   const FuseStage<T>&);                                                     \
  template Var<T> one_stage_fuse(const Var<T>&, const Var<T>&, const FuseStage<T>&);

TCVSR_INSTANTIATE_FUSION(float)
TCVSR_INSTANTIATE_FUSION(double)

}  // namespace tcvsr
