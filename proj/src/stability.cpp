#include "tcvsr/stability.hpp"

#include <cmath>

namespace tcvsr {

PatchGrid3D PatchGrid3D::make(std::int64_t T, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t t_p,
                              std::int64_t h_p, std::int64_t w_p) {
  if (T < 1 || C < 1 || H < 1 || W < 1 || t_p < 1 || h_p < 1 || w_p < 1) {
    throw ShapeError("patch grid: all extents must be positive");
  }
  if (T % t_p) throw ShapeError("patch grid: " + std::to_string(T) + " frames not divisible by t_p " + std::to_string(t_p));
  if (H % h_p || W % w_p) {
    throw ShapeError("patch grid: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by patch " + std::to_string(h_p) + "x" + std::to_string(w_p));
  }
  return PatchGrid3D{T, C, H, W, t_p, h_p, w_p};
}

std::shared_ptr<const std::vector<std::int64_t>> PatchGrid3D::unfold_index() const {
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(T * C * H * W));
  for (std::int64_t ct = 0; ct < n_t(); ++ct)
    for (std::int64_t cy = 0; cy < n_h(); ++cy)
      for (std::int64_t cx = 0; cx < n_w(); ++cx)
        for (std::int64_t tt = 0; tt < t_p; ++tt)
          for (std::int64_t yy = 0; yy < h_p; ++yy)
            for (std::int64_t xx = 0; xx < w_p; ++xx)
              for (std::int64_t c = 0; c < C; ++c) {
                const std::int64_t t = ct * t_p + tt, y = cy * h_p + yy, x = cx * w_p + xx;
                idx->push_back(((t * C + c) * H + y) * W + x);
              }
  return idx;
}

std::shared_ptr<const std::vector<std::int64_t>> PatchGrid3D::fold_index() const {
  auto fwd = unfold_index();
  auto inv = std::make_shared<std::vector<std::int64_t>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[static_cast<std::size_t>((*fwd)[i])] = static_cast<std::int64_t>(i);
  return inv;
}

template <typename T>
Var<T> embed_3d_patches(const Var<T>& volume, const PatchGrid3D& g) {
  if (volume.shape() != Shape{g.T, g.C, g.H, g.W}) {
    throw ShapeError("embed_3d_patches: volume " + shape_str(volume.shape()) + " does not match grid");
  }
  return gather(volume, g.unfold_index(), Shape{g.tokens(), g.token_dim()});
}

template <typename T>
Var<T> fold_3d_patches(const Var<T>& tokens, const PatchGrid3D& g) {
  if (tokens.shape() != Shape{g.tokens(), g.token_dim()}) {
    throw ShapeError("fold_3d_patches: tokens " + shape_str(tokens.shape()) + " do not match grid");
  }
  return gather(tokens, g.fold_index(), Shape{g.T, g.C, g.H, g.W});
}

template <typename T>
Var<T> attention_map(const Var<T>& q, const Var<T>& k) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw ShapeError("attention: query " + shape_str(q.shape()) + " and key " + shape_str(k.shape()) +
                     " widths differ");
  }
  const T s = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  return softmax_rows(scale(matmul(q, transpose(k)), s));
}

template <typename T>
Var<T> self_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  if (v.rank() != 2 || v.dim(0) != k.dim(0)) {
    throw ShapeError("self_attention: value " + shape_str(v.shape()) + " does not match key " + shape_str(k.shape()));
  }
  return matmul(attention_map(q, k), v);
}

// ---------------------------------------------------------------- CMB

template <typename T>
CMB<T> CMB<T>::build(Builder<T> b, std::int64_t channels) {
  CMB m;
  const std::int64_t cq = std::max<std::int64_t>(1, channels / 8);
  m.query = b.conv("query", channels, cq, 1);
  m.key = b.conv("key", channels, cq, 1);
  m.value = b.conv("value", channels, channels, 1);
  m.gamma = b.scalar("gamma", T(0));
  m.out = b.conv("out", 2 * channels, channels, 3);
  return m;
}

namespace {

template <typename T>
Var<T> flat(const Var<T>& x) {
  return reshape(x, Shape{x.dim(1), x.dim(2) * x.dim(3)});
}

template <typename T>
void require_single(const Var<T>& x, const char* what) {
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError(std::string(what) + ": expects a 1 x C x H x W map");
}

}  // namespace

template <typename T>
Var<T> CMB<T>::position_attention(const Var<T>& x) const {
  require_single(x, "position_attention");
  auto q = flat(query(x));  // C' x HW
  auto k = flat(key(x));
  return softmax_rows(matmul(transpose(q), k));  // HW x HW
}

template <typename T>
Var<T> CMB<T>::pam(const Var<T>& x) const {
  require_single(x, "pam");
  auto a = position_attention(x);
  auto v = flat(value(x));  // C x HW
  return reshape(matmul(v, transpose(a)), x.shape());
}

template <typename T>
Var<T> CMB<T>::cam(const Var<T>& x) const {
  require_single(x, "cam");
  auto f = flat(x);
  auto a = softmax_rows(matmul(f, transpose(f)));  // C x C
  return add(scale_by(reshape(matmul(a, f), x.shape()), gamma), x);
}

template <typename T>
Var<T> CMB<T>::operator()(const Var<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != value.in_channels()) {
    throw ShapeError("cmb: input " + shape_str(x.shape()) + " does not match block channels");
  }
  if (x.dim(0) == 1) return out(concat<T>({x, add(pam(x), cam(x))}, 1));
  std::vector<Var<T>> outs;
  for (std::int64_t b = 0; b < x.dim(0); ++b) outs.push_back((*this)(slice(x, 0, b, 1)));
  return concat(outs, 0);
}

// ---------------------------------------------------------------- TSB

template <typename T>
TSB<T> TSB<T>::build(Builder<T> b, std::int64_t channels, std::int64_t patch, std::int64_t embed_dim) {
  TSB m;
  m.patch = patch;
  m.channels = channels;
  m.pre1 = b.conv("pre1", channels, channels, 3);
  m.pre2 = b.conv("pre2", channels, channels, 3);
  m.pre3 = b.conv("pre3", channels, channels, 3);
  const std::int64_t d3 = patch * patch * patch * channels;
  const std::int64_t d2 = patch * patch * channels;
  m.w_in = b.matrix("w_in", d3, embed_dim);
  m.w_q = b.matrix("w_q", embed_dim, embed_dim);
  m.w_k = b.matrix("w_k", embed_dim, embed_dim);
  m.w_v = b.matrix("w_v", embed_dim, embed_dim);
  m.w_out = b.matrix("w_out", embed_dim, d3, true);
  m.w_in2 = b.matrix("w_in2d", d2, embed_dim);
  m.w_out2 = b.matrix("w_out2d", embed_dim, d2, true);
  return m;
}

template <typename T>
Var<T> TSB<T>::preprocess(const Var<T>& stack) const {
  return pre3(lrelu(pre2(lrelu(pre1(stack)))));
}

template <typename T>
Var<T> TSB<T>::attend(const Var<T>& group, bool two_d) const {
  const auto grid = PatchGrid3D::make(group.dim(0), group.dim(1), group.dim(2), group.dim(3), two_d ? 1 : patch,
                                      patch, patch);
  auto tokens = embed_3d_patches(group, grid);
  auto e = matmul(tokens, two_d ? w_in2 : w_in);
  auto y = self_attention(matmul(e, w_q), matmul(e, w_k), matmul(e, w_v));
  return fold_3d_patches(matmul(y, two_d ? w_out2 : w_out), grid);
}

template <typename T>
std::vector<Var<T>> TSB<T>::operator()(const std::vector<Var<T>>& frames) const {
  if (frames.empty()) return {};
  for (const auto& f : frames) {
    if (f.rank() != 4 || f.dim(0) != 1 || f.dim(1) != channels || f.shape() != frames[0].shape()) {
      throw ShapeError("tsb: frames must all be 1 x " + std::to_string(channels) + " x H x W");
    }
  }
  const auto n = static_cast<std::int64_t>(frames.size());
  auto g = preprocess(concat(frames, 0));
  std::vector<Var<T>> pieces;
  for (std::int64_t t0 = 0; t0 < n; t0 += patch) {
    const std::int64_t len = std::min(patch, n - t0);
    auto group = len == n ? g : slice(g, 0, t0, len);
    pieces.push_back(add(group, attend(group, len < patch)));
  }
  auto all = pieces.size() == 1 ? pieces[0] : concat(pieces, 0);
  std::vector<Var<T>> out;
  for (std::int64_t t = 0; t < n; ++t) out.push_back(slice(all, 0, t, 1));
  return out;
}

#define TCVSR_INSTANTIATE_STABILITY(T)                                        \
  template Var<T> embed_3d_patches(const Var<T>&, const PatchGrid3D&);       \
  template Var<T> fold_3d_patches(const Var<T>&, const PatchGrid3D&);        \
  template Var<T> attention_map(const Var<T>&, const Var<T>&);               \
  template Var<T> self_attention(const Var<T>&, const Var<T>&, const Var<T>&); \
  template struct CMB<T>;                                                     \
  template struct TSB<T>;

TCVSR_INSTANTIATE_STABILITY(float)
TCVSR_INSTANTIATE_STABILITY(double)

}  // namespace tcvsr
