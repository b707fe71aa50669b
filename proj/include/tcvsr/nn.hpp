#pragma once

// Parameter storage and the small layer types every network block is built
// from.

#include <map>
#include <string>
#include <vector>

#include "tcvsr/ops.hpp"
#include "tcvsr/rng.hpp"

namespace tcvsr {

/// Optimizer groups; the flow estimator trains at its own learning rate.
enum class ParamGroup { Main, Flow };

template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    ParamGroup group;
  };

  Var<T> create(const std::string& name, Tensor<T> init, ParamGroup group);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const Entry* find(const std::string& name) const;
  /// Total number of scalar parameters.
  std::int64_t count() const;
  std::int64_t count(ParamGroup group) const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Conv {
  Var<T> weight;  // Cout x Cin x kH x kW
  Var<T> bias;    // Cout
  int stride = 1;
  int pad = 0;
  PadMode mode = PadMode::Zero;

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad, mode); }
  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t out_channels() const { return weight.dim(0); }
};

template <typename T>
struct ConvT {
  Var<T> weight;
  Var<T> bias;
  int stride = 2;
  int pad = 0;

  Var<T> operator()(const Var<T>& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }
};

/// x + c2(lrelu(c1(x))).
template <typename T>
Var<T> resblock(const Var<T>& x, const Conv<T>& c1, const Conv<T>& c2);

template <typename T>
struct ResBlock {
  Conv<T> c1, c2;
  Var<T> operator()(const Var<T>& x) const { return resblock(x, c1, c2); }
};

template <typename T>
Var<T> run_stack(const std::vector<ResBlock<T>>& blocks, Var<T> x) {
  for (const auto& b : blocks) x = b(x);
  return x;
}

inline constexpr double kLeakySlope = 0.1;

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return leaky_relu(x, static_cast<T>(kLeakySlope));
}

/// Creates named parameters with deterministic initialization. Weights draw
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero. `zero`
/// requests an all-zero weight (identity-at-init residual branches).
template <typename T>
class Builder {
 public:
  Builder(ParamStore<T>& store, Rng& rng, ParamGroup group = ParamGroup::Main, std::string prefix = "")
      : store_(store), rng_(rng), group_(group), prefix_(std::move(prefix)) {}

  Builder sub(const std::string& name) const { return Builder(store_, rng_, group_, qualify(name) + "."); }
  Builder with_group(ParamGroup g) const { return Builder(store_, rng_, g, prefix_); }

  Conv<T> conv(const std::string& name, std::int64_t cin, std::int64_t cout, int k, int stride = 1, int pad = -1,
               bool zero = false);
  ConvT<T> conv_t(const std::string& name, std::int64_t cin, std::int64_t cout, int k, int stride, bool zero = false);
  ResBlock<T> resblock(const std::string& name, std::int64_t channels);
  std::vector<ResBlock<T>> res_stack(const std::string& name, std::int64_t channels, int count);
  /// Dense matrix with fan-in = rows.
  Var<T> matrix(const std::string& name, std::int64_t rows, std::int64_t cols, bool zero = false);
  Var<T> scalar(const std::string& name, T value);

 private:
  std::string qualify(const std::string& name) const { return prefix_ + name; }
  Tensor<T> uniform(Shape shape, double bound);

  ParamStore<T>& store_;
  Rng& rng_;
  ParamGroup group_;
  std::string prefix_;
};

/// Overwrites every parameter with U(-scale, scale) draws (gradient checks
/// need generic, non-zero weights everywhere).
template <typename T>
void randomize_all(ParamStore<T>& store, Rng& rng, double scale);

}  // namespace tcvsr
