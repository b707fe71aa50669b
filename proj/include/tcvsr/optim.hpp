#pragma once

#include <cstdint>
#include <vector>

#include "tcvsr/autograd.hpp"

namespace tcvsr {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one parameter group. Moments start at zero; `step` counts
/// completed updates.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const std::vector<Var<T>>& params, AdamHyper h);
};

/// One bias-corrected ADAM update of every parameter. Parameters without a
/// gradient are treated as having a zero gradient.
template <typename T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state, double lr);

/// Single-tensor form: updates p, m, v in place for update number `step`
/// (1-based).
template <typename T>
void adam_update(Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v, std::int64_t step, double lr,
                 const AdamHyper& h);

/// lr_min + (lr_base - lr_min) * (1 + cos(pi * step / total)) / 2.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_base, double lr_min);

}  // namespace tcvsr
