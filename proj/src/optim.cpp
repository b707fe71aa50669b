#include "tcvsr/optim.hpp"

#include <cmath>
#include <numbers>

namespace tcvsr {

template <typename T>
AdamState<T>::AdamState(const std::vector<Var<T>>& params, AdamHyper h) : hyper(h) {
  for (const auto& p : params) {
    m.emplace_back(p.shape());
    v.emplace_back(p.shape());
  }
}

template <typename T>
void adam_update(Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v, std::int64_t step, double lr,
                 const AdamHyper& h) {
  if (g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
    throw ShapeError("adam: parameter " + shape_str(p.shape()) + " gradient " + shape_str(g.shape()) +
                     " and moment shapes disagree");
  }
  if (step < 1) throw InvalidArgument("adam: step numbers start at 1");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
    const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double upd = lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps);
    p[i] = static_cast<T>(p[i] - upd);
  }
}

template <typename T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size()) throw StateError("adam: state was built for a different parameter list");
  const std::int64_t step = state.step + 1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].mutable_value();
    if (params[k].has_grad()) {
      adam_update(p, params[k].grad(), state.m[k], state.v[k], step, lr, state.hyper);
    } else {
      adam_update(p, Tensor<T>(p.shape()), state.m[k], state.v[k], step, lr, state.hyper);
    }
  }
  state.step = step;
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_base, double lr_min) {
  if (total < 0 || step < 0 || step > total) {
    throw InvalidArgument("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  if (total == 0) return lr_base;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + (lr_base - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Var<float>>&, AdamState<float>&, double);
template void adam_step(std::vector<Var<double>>&, AdamState<double>&, double);
template void adam_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, std::int64_t, double,
                          const AdamHyper&);
template void adam_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&, std::int64_t,
                          double, const AdamHyper&);

}  // namespace tcvsr
