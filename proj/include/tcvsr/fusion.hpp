#pragma once

// Two-input feature fusion: a plain 3x3 conv stage or the multi-scale
// pyramid stage, combined progressively or as a single stage.

#include "tcvsr/config.hpp"
#include "tcvsr/nn.hpp"

namespace tcvsr {

template <typename T>
struct Pyramid {
  Conv<T> proj;                       // 1x1, 2C -> C
  std::vector<ResBlock<T>> pre;       // at full scale, C
  Conv<T> down;                       // 4x4 stride 2, C -> P
  std::vector<ResBlock<T>> mid;       // at half scale, P
  bool nested = false;                // third level
  Conv<T> down2;                      // 4x4 stride 2, P -> P
  std::vector<ResBlock<T>> inner;     // at quarter scale
  ConvT<T> up2;                       // 2x2 stride 2, P -> P (zero init)
  ConvT<T> up;                        // 2x2 stride 2, P -> C (zero init)

  static Pyramid build(Builder<T> b, std::int64_t channels, int levels, std::int64_t pyramid_channels);
  int levels() const { return nested ? 3 : 2; }
};

template <typename T>
struct FuseStage {
  FuseKind kind = FuseKind::Pyramid;
  Conv<T> conv;  // used when kind == Conv
  Pyramid<T> pyramid;

  static FuseStage build(Builder<T> b, FuseKind kind, std::int64_t channels, int levels,
                         std::int64_t pyramid_channels);
  Var<T> operator()(const Var<T>& a, const Var<T>& b) const;
};

/// p = proj(cat(a, b)); m = Res(down(Res(p))) [+ nested pair]; out = up(m) + p.
template <typename T>
Var<T> pyramid_fuse(const Var<T>& a, const Var<T>& b, const Pyramid<T>& w);

/// Stage 1 fuses the two stability branches, stage 2 fuses the result with g.
template <typename T>
Var<T> progressive_fuse(const Var<T>& g_cm, const Var<T>& g_sa, const Var<T>& g, const FuseStage<T>& stage1,
                        const FuseStage<T>& stage2);

/// Single fusion of one stability branch with the propagation feature.
template <typename T>
Var<T> one_stage_fuse(const Var<T>& x, const Var<T>& g, const FuseStage<T>& stage);

}  // namespace tcvsr
