#pragma once

// The full pipeline: alignment, recurrent propagation, spatial/temporal
// stability branches, fusion, refinement and pixel-shuffle reconstruction.

#include <vector>

#include "tcvsr/config.hpp"
#include "tcvsr/flow.hpp"
#include "tcvsr/fusion.hpp"
#include "tcvsr/stability.hpp"

namespace tcvsr {

/// Recurrent propagation step (and, with separate weights, the refinement
/// step). Input layout by variant:
///   vanilla: cat(x, s)
///   motion:  cat(lift(h_prev), x, s)
///   hybrid:  cat(lift(h_prev), x, s, lift(h_next))
/// where s is the warped hidden state (propagation) or the fused feature
/// (refinement, hybrid order cat(lift(h_prev), x, lift(h_next), s)).
template <typename T>
struct Propagator {
  Variant variant = Variant::Hybrid;
  bool refine = false;
  std::int64_t channels = 0;
  Conv<T> lift_prev, lift_next;  // 3 -> C
  Conv<T> head;                  // concat -> C
  std::vector<ResBlock<T>> body;

  static Propagator build(Builder<T> b, Variant variant, bool refine, std::int64_t channels, int resblocks);
  /// Missing neighbours (undefined h) are replaced by zero features.
  Var<T> operator()(const Var<T>& x, const Var<T>& state, const Var<T>& h_prev, const Var<T>& h_next) const;
};

template <typename T>
struct Reconstructor {
  int scale = 4;
  std::vector<Conv<T>> ups;  // C -> 4C before each x2 shuffle
  Conv<T> out;               // C -> 3

  static Reconstructor build(Builder<T> b, std::int64_t channels, int scale);
  /// Unclamped HR output.
  Var<T> operator()(const Var<T>& r) const;
};

template <typename T>
struct SequenceOutputs {
  std::vector<Var<T>> sr;
  // Populated when intermediates are requested.
  std::vector<Alignment<T>> align;
  std::vector<Var<T>> g, g_cm, g_sa, g_hat, refined;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }

  const FlowNet<T>& flow() const noexcept { return flow_; }
  const Propagator<T>& propagator() const noexcept { return prop_; }
  const Propagator<T>& refiner() const noexcept { return refine_; }
  const std::vector<CMB<T>>& cmb() const noexcept { return cmb_; }
  const std::vector<TSB<T>>& tsb() const noexcept { return tsb_; }
  const FuseStage<T>& stage1() const noexcept { return stage1_; }
  const FuseStage<T>& stage2() const noexcept { return stage2_; }
  const Reconstructor<T>& reconstructor() const noexcept { return recon_; }

  /// Aligns every frame with its neighbours (flows cached per pair).
  std::vector<Alignment<T>> align(const std::vector<Var<T>>& frames) const;
  /// Recurrent sweep: one propagation feature per frame.
  std::vector<Var<T>> propagate(const std::vector<Var<T>>& frames, const std::vector<Alignment<T>>& al) const;
  /// Stability branches plus fusion for every frame.
  std::vector<Var<T>> fuse(const std::vector<Var<T>>& g, std::vector<Var<T>>* g_cm = nullptr,
                           std::vector<Var<T>>* g_sa = nullptr) const;
  /// Frames are 1 x 3 x h x w with h, w multiples of size_multiple().
  /// With flow_grad false the alignment reaches the rest of the network as
  /// constants; `align` in the result still carries the live graph.
  SequenceOutputs<T> forward(const std::vector<Var<T>>& frames, bool keep_intermediates = false,
                             bool flow_grad = true) const;

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
  FlowNet<T> flow_;
  Propagator<T> prop_;
  std::vector<CMB<T>> cmb_;
  std::vector<TSB<T>> tsb_;
  FuseStage<T> stage1_;  // unused unless both stability branches are on
  FuseStage<T> stage2_;
  Propagator<T> refine_;
  Reconstructor<T> recon_;
};

/// Runs the model without recording gradients on LR frames (each 3 x h x w
/// in [0, 1]) and returns clamped HR frames. Frames are cropped to
/// size_multiple().
std::vector<Tensor<float>> super_resolve(const Model<float>& model, const std::vector<Tensor<float>>& lr);

}  // namespace tcvsr
