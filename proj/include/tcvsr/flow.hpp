#pragma once

// Coarse-to-fine flow estimation and bidirectional frame alignment.

#include <vector>

#include "tcvsr/nn.hpp"

namespace tcvsr {

/// Flow pyramid. Level 0 is the coarsest. Each level sees
/// cat(ref, warp(src, upsampled flow), upsampled flow) and predicts a residual.
template <typename T>
struct FlowNet {
  int levels = 3;
  std::vector<std::vector<Conv<T>>> stacks;

  static FlowNet build(Builder<T> b, int levels, int channels);

  /// Returns a B x 2 x H x W field f with warp(src, f) ~ ref.
  Var<T> estimate(const Var<T>& ref, const Var<T>& src) const;
  /// Flow after every level, coarsest first; the last entry is estimate().
  std::vector<Var<T>> estimate_levels(const Var<T>& ref, const Var<T>& src) const;
};

template <typename T>
struct Alignment {
  Var<T> flow_prev;  // undefined at the first frame
  Var<T> flow_next;  // undefined at the last frame
  Var<T> h_prev;     // warp(x_prev, flow_prev)
  Var<T> h_next;     // warp(x_next, flow_next)
};

/// Aligns the available neighbours onto x_cur. Pass undefined Vars for a
/// missing side.
template <typename T>
Alignment<T> align_bidirectional(const FlowNet<T>& net, const Var<T>& x_prev, const Var<T>& x_cur,
                                 const Var<T>& x_next);

/// Mean endpoint error between two B x 2 x H x W fields over pixels at least
/// `margin` away from every border.
double endpoint_error(const Tensor<float>& flow, const Tensor<float>& truth, int margin);

}  // namespace tcvsr
