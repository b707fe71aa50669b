#pragma once

// Spatial correlative matching (position + channel attention) and temporal
// self-alignment over 3D patch tokens.

#include <memory>
#include <vector>

#include "tcvsr/nn.hpp"

namespace tcvsr {

/// Partition of a T x C x H x W volume into t_p x h_p x w_p cells.
struct PatchGrid3D {
  std::int64_t T = 0, C = 0, H = 0, W = 0;
  std::int64_t t_p = 1, h_p = 1, w_p = 1;

  static PatchGrid3D make(std::int64_t T, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t t_p,
                          std::int64_t h_p, std::int64_t w_p);

  std::int64_t n_t() const { return T / t_p; }
  std::int64_t n_h() const { return H / h_p; }
  std::int64_t n_w() const { return W / w_p; }
  std::int64_t tokens() const { return n_t() * n_h() * n_w(); }
  std::int64_t token_dim() const { return t_p * h_p * w_p * C; }

  /// index[k * d + j] = flat offset into the volume of element j of token k.
  /// Cells are time-major then row-major; inside a token the order is
  /// (t, y, x, c).
  std::shared_ptr<const std::vector<std::int64_t>> unfold_index() const;
  /// Inverse permutation of unfold_index().
  std::shared_ptr<const std::vector<std::int64_t>> fold_index() const;
};

/// T x C x H x W -> N x d.
template <typename T>
Var<T> embed_3d_patches(const Var<T>& volume, const PatchGrid3D& grid);
/// N x d -> T x C x H x W.
template <typename T>
Var<T> fold_3d_patches(const Var<T>& tokens, const PatchGrid3D& grid);

/// softmax_rows(Q K^T / sqrt(d_e)).
template <typename T>
Var<T> attention_map(const Var<T>& q, const Var<T>& k);
/// attention_map(Q, K) * V.
template <typename T>
Var<T> self_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v);

template <typename T>
struct CMB {
  Conv<T> query, key, value;  // 1x1
  Var<T> gamma;               // channel-attention gate, starts at 0
  Conv<T> out;                // 3x3 over cat(g, pam + cam)

  static CMB build(Builder<T> b, std::int64_t channels);

  /// Position attention output V A^T for a 1 x C x H x W map.
  Var<T> pam(const Var<T>& x) const;
  /// Gated channel attention with residual: gamma * softmax(X X^T) X + x.
  Var<T> cam(const Var<T>& x) const;
  /// HW x HW position attention of a single map.
  Var<T> position_attention(const Var<T>& x) const;
  /// Accepts B x C x H x W; batch entries are independent.
  Var<T> operator()(const Var<T>& x) const;
};

template <typename T>
struct TSB {
  Conv<T> pre1, pre2, pre3;
  Var<T> w_in, w_out;      // d -> d_e, d_e -> d (3D tokens)
  Var<T> w_in2, w_out2;    // same for the 2D fallback of trailing frames
  Var<T> w_q, w_k, w_v;    // d_e x d_e, shared by both token kinds
  std::int64_t patch = 4;
  std::int64_t channels = 0;

  static TSB build(Builder<T> b, std::int64_t channels, std::int64_t patch, std::int64_t embed_dim);

  /// Three-conv preprocessing of a T x C x H x W stack.
  Var<T> preprocess(const Var<T>& stack) const;
  /// Attention residual for one group (already preprocessed); returns the
  /// folded attention output, same shape as `group`.
  Var<T> attend(const Var<T>& group, bool two_d) const;
  /// Full block on T frames of 1 x C x H x W. Frames are grouped in windows
  /// of `patch`; a trailing partial window uses 2D tokens.
  std::vector<Var<T>> operator()(const std::vector<Var<T>>& frames) const;
};

template <typename T>
Var<T> run_cmb_stack(const std::vector<CMB<T>>& blocks, Var<T> x) {
  for (const auto& b : blocks) x = b(x);
  return x;
}

template <typename T>
std::vector<Var<T>> run_tsb_stack(const std::vector<TSB<T>>& blocks, std::vector<Var<T>> xs) {
  for (const auto& b : blocks) xs = b(xs);
  return xs;
}

}  // namespace tcvsr
