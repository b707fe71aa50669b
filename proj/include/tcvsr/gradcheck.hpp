#pragma once

// Finite-difference verification of reverse-mode gradients (64-bit).

#include <functional>
#include <string>
#include <vector>

#include "tcvsr/autograd.hpp"

namespace tcvsr {

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-2;
  /// Entries checked per leaf; -1 checks all of them.
  std::int64_t max_entries_per_leaf = -1;
  std::uint64_t seed = 0;
};

struct GradCheckStats {
  double max_rel_error = 0;
  std::int64_t checked = 0;
};

/// Compares the gradient of dot(f(), w) for a random fixed w against central
/// differences, perturbing each leaf entry in place. `f` must rebuild its
/// output from the current leaf values on every call.
GradCheckStats grad_check(const std::function<Var<double>()>& f, const std::vector<Var<double>>& leaves,
                          const GradCheckOptions& opt = {});

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  std::int64_t checked = 0;
  bool passed = false;
  double seconds = 0;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kPermutationTolerance = 1e-10;

/// Every differentiable op plus the composed tiny pipeline.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 0);

/// A deliberately wrong backward (d/dx x^2 reported as x). Must fail.
GradCheckEntry run_negative_control(std::uint64_t seed = 0);

}  // namespace tcvsr
