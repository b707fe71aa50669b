#include "tcvsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"

namespace tcvsr {
namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError(std::string(op) + ": axis out of range");
  return a;
}

template <typename T>
Node<T>* parent(Node<T>& n, std::size_t i) {
  return i < n.parents.size() ? n.parents[i].get() : nullptr;
}

template <typename T>
bool wants_grad(Node<T>& n, std::size_t i) {
  auto* p = parent(n, i);
  return p != nullptr && p->requires_grad;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& n) {
    accumulate_grad(parent(n, 0), n.grad);
    accumulate_grad(parent(n, 1), n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& n) {
    accumulate_grad(parent(n, 0), n.grad);
    if (wants_grad(n, 1)) {
      Tensor<T> neg(n.grad.shape());
      for (std::int64_t i = 0; i < neg.size(); ++i) neg[i] = -n.grad[i];
      accumulate_grad(parent(n, 1), neg);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    const auto& vb = n.parents[1]->value;
    if (wants_grad(n, 0)) {
      Tensor<T> g(va.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * vb[i];
      accumulate_grad(parent(n, 0), g);
    }
    if (wants_grad(n, 1)) {
      Tensor<T> g(vb.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * va[i];
      accumulate_grad(parent(n, 1), g);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return make_op<T>("scale", std::move(out), {a}, [s](Node<T>& n) {
    Tensor<T> g(n.grad.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * s;
    accumulate_grad(parent(n, 0), g);
  });
}

template <typename T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s) {
  if (s.size() != 1) throw ShapeError("scale_by: scale must hold one value, got " + shape_str(s.shape()));
  const T sv = s.value()[0];
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * sv;
  return make_op<T>("scale_by", std::move(out), {a, s}, [](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    const T sv = n.parents[1]->value[0];
    if (wants_grad(n, 0)) {
      Tensor<T> g(va.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * sv;
      accumulate_grad(parent(n, 0), g);
    }
    if (wants_grad(n, 1)) {
      T acc = 0;
      for (std::int64_t i = 0; i < va.size(); ++i) acc += n.grad[i] * va[i];
      accumulate_grad(parent(n, 1), Tensor<T>(n.parents[1]->value.shape(), acc));
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out(a.shape());
  const T* pa = a.value().ptr();
  T* po = out.ptr();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] > T(0) ? pa[i] : pa[i] * slope;
  return make_op<T>("leaky_relu", std::move(out), {a}, [slope](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    Tensor<T> g(va.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = va[i] > T(0) ? n.grad[i] : n.grad[i] * slope;
    accumulate_grad(parent(n, 0), g);
  });
}

// ---------------------------------------------------------------- layout

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw InvalidArgument("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const int ax = normalize_axis(axis, s0.size(), "concat");
  Shape out_shape = s0;
  out_shape[ax] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != ax && s[d] != s0[d]) {
        throw ShapeError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
      }
    }
    out_shape[ax] += s[ax];
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= s0[d];
  for (std::size_t d = ax + 1; d < s0.size(); ++d) inner *= s0[d];
  const std::int64_t total = out_shape[ax] * inner;
  Tensor<T> out(out_shape);
  std::vector<std::int64_t> widths;
  std::int64_t off = 0;
  for (const auto& x : xs) {
    const std::int64_t w = x.shape()[ax] * inner;
    const T* src = x.value().ptr();
    for (std::int64_t o = 0; o < outer; ++o) std::copy(src + o * w, src + (o + 1) * w, out.ptr() + o * total + off);
    widths.push_back(w);
    off += w;
  }
  return make_op<T>("concat", std::move(out), xs, [widths, outer, total](Node<T>& n) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::int64_t w = widths[k];
      if (wants_grad(n, k)) {
        Tensor<T> g(n.parents[k]->value.shape());
        for (std::int64_t o = 0; o < outer; ++o) {
          std::copy(n.grad.ptr() + o * total + off, n.grad.ptr() + o * total + off + w, g.ptr() + o * w);
        }
        accumulate_grad(parent(n, k), g);
      }
      off += w;
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, std::int64_t start, std::int64_t length) {
  const Shape& s = x.shape();
  const int ax = normalize_axis(axis, s.size(), "slice");
  if (start < 0 || length < 0 || start + length > s[ax]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis of size " + std::to_string(s[ax]));
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= s[d];
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[ax] = length;
  const std::int64_t total = s[ax] * inner;
  const std::int64_t w = length * inner;
  const std::int64_t off = start * inner;
  Tensor<T> out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(x.value().ptr() + o * total + off, x.value().ptr() + o * total + off + w, out.ptr() + o * w);
  }
  return make_op<T>("slice", std::move(out), {x}, [outer, total, w, off](Node<T>& n) {
    Tensor<T> g(n.parents[0]->value.shape());
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(n.grad.ptr() + o * w, n.grad.ptr() + (o + 1) * w, g.ptr() + o * total + off);
    }
    accumulate_grad(parent(n, 0), g);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_op<T>("reshape", std::move(out), {x}, [](Node<T>& n) {
    accumulate_grad(parent(n, 0), n.grad.reshaped(n.parents[0]->value.shape()));
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  require_rank(x.shape(), 2, "transpose", "input");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out({c, r});
  kernels::transpose(r, c, x.value().ptr(), out.ptr());
  return make_op<T>("transpose", std::move(out), {x}, [r, c](Node<T>& n) {
    Tensor<T> g({r, c});
    kernels::transpose(c, r, n.grad.ptr(), g.ptr());
    accumulate_grad(parent(n, 0), g);
  });
}

template <typename T>
Var<T> gather(const Var<T>& x, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape) {
  if (numel(shape) != static_cast<std::int64_t>(index->size())) {
    throw ShapeError("gather: index length does not match output shape " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape));
  const T* src = x.value().ptr();
  const std::int64_t n_in = x.size();
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::int64_t k = (*index)[i];
    if (k < 0 || k >= n_in) throw ShapeError("gather: index out of range");
    out[static_cast<std::int64_t>(i)] = src[k];
  }
  return make_op<T>("gather", std::move(out), {x}, [index](Node<T>& n) {
    Tensor<T> g(n.parents[0]->value.shape());
    for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += n.grad[static_cast<std::int64_t>(i)];
    accumulate_grad(parent(n, 0), g);
  });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank(a.shape(), 2, "matmul", "left operand");
  require_rank(b.shape(), 2, "matmul", "right operand");
  const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> out({M, N});
  kernels::gemm(M, N, K, a.value().ptr(), b.value().ptr(), out.ptr(), false);
  return make_op<T>("matmul", std::move(out), {a, b}, [M, N, K](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    const auto& vb = n.parents[1]->value;
    if (wants_grad(n, 0)) {
      Tensor<T> bt({N, K});
      kernels::transpose(K, N, vb.ptr(), bt.ptr());
      auto& ga = n.parents[0]->ensure_grad();
      kernels::gemm(M, K, N, n.grad.ptr(), bt.ptr(), ga.ptr(), true);
    }
    if (wants_grad(n, 1)) {
      Tensor<T> at({K, M});
      kernels::transpose(M, K, va.ptr(), at.ptr());
      auto& gb = n.parents[1]->ensure_grad();
      kernels::gemm(K, N, M, at.ptr(), n.grad.ptr(), gb.ptr(), true);
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  require_rank(x.shape(), 2, "softmax_rows", "input");
  if (!x.value().all_finite()) throw NumericError("softmax_rows: non-finite input");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out(x.shape());
  parallel_for(rows, 16, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const T* in = x.value().ptr() + r * cols;
      T* o = out.ptr() + r * cols;
      const T m = *std::max_element(in, in + cols);
      T s = 0;
      for (std::int64_t c = 0; c < cols; ++c) {
        o[c] = std::exp(in[c] - m);
        s += o[c];
      }
      const T inv = T(1) / s;
      for (std::int64_t c = 0; c < cols; ++c) o[c] *= inv;
    }
  });
  return make_op<T>("softmax_rows", std::move(out), {x}, [rows, cols](Node<T>& n) {
    Tensor<T> g(n.value.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* y = n.value.ptr() + r * cols;
      const T* gy = n.grad.ptr() + r * cols;
      T dotp = 0;
      for (std::int64_t c = 0; c < cols; ++c) dotp += gy[c] * y[c];
      T* gx = g.ptr() + r * cols;
      for (std::int64_t c = 0; c < cols; ++c) gx[c] = y[c] * (gy[c] - dotp);
    }
    accumulate_grad(parent(n, 0), g);
  });
}

// ---------------------------------------------------------------- convolution

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding, PadMode mode) {
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin) {
    throw ShapeError("conv2d: input has " + std::to_string(Cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && bias.size() != Cout) throw ShapeError("conv2d: bias length does not match output channels");
  if (debug_checks() && !weight.value().all_finite()) throw NumericError("conv2d: non-finite weights");

  const kernels::Geometry g{Cin, H, W, kh, kw, stride, padding,
                            (H + 2 * padding - kh) / stride + 1, (W + 2 * padding - kw) / stride + 1,
                            mode == PadMode::Replicate};
  const std::int64_t K = g.rows(), P = g.cols();
  Tensor<T> out({B, Cout, g.out_h, g.out_w});
  std::vector<T> cols(static_cast<std::size_t>(K * P));
  for (std::int64_t b = 0; b < B; ++b) {
    kernels::im2col(g, x.value().ptr() + b * Cin * H * W, cols.data());
    T* ob = out.ptr() + b * Cout * P;
    kernels::gemm(Cout, P, K, weight.value().ptr(), cols.data(), ob, false);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < Cout; ++c) {
        const T bv = bias.value()[c];
        for (std::int64_t p = 0; p < P; ++p) ob[c * P + p] += bv;
      }
    }
  }
  return make_op<T>("conv2d", std::move(out), {x, weight, bias}, [g, B, Cout](Node<T>& n) {
    const std::int64_t K = g.rows(), P = g.cols();
    const auto& vx = n.parents[0]->value;
    const auto& vw = n.parents[1]->value;
    const std::int64_t in_plane = g.channels * g.height * g.width;
    const bool gx = wants_grad(n, 0), gw = wants_grad(n, 1), gb = wants_grad(n, 2);
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    std::vector<T> cols_t;
    std::vector<T> wt;
    if (gx) {
      wt.resize(static_cast<std::size_t>(K * Cout));
      kernels::transpose(Cout, K, vw.ptr(), wt.data());
    }
    if (gw) cols_t.resize(static_cast<std::size_t>(P * K));
    for (std::int64_t b = 0; b < B; ++b) {
      const T* dy = n.grad.ptr() + b * Cout * P;
      if (gw) {
        kernels::im2col(g, vx.ptr() + b * in_plane, cols.data());
        kernels::transpose(K, P, cols.data(), cols_t.data());
        kernels::gemm(Cout, K, P, dy, cols_t.data(), n.parents[1]->ensure_grad().ptr(), true);
      }
      if (gx) {
        kernels::gemm(K, P, Cout, wt.data(), dy, cols.data(), false);
        kernels::col2im(g, cols.data(), n.parents[0]->ensure_grad().ptr() + b * in_plane);
      }
      if (gb) {
        T* db = n.parents[2]->ensure_grad().ptr();
        for (std::int64_t c = 0; c < Cout; ++c) {
          T acc = 0;
          for (std::int64_t p = 0; p < P; ++p) acc += dy[c * P + p];
          db[c] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  require_rank(x.shape(), 4, "conv_transpose2d", "input");
  require_rank(weight.shape(), 4, "conv_transpose2d", "weight");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin) {
    throw ShapeError("conv_transpose2d: input has " + std::to_string(Cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const std::int64_t Ho = (H - 1) * stride + kh - 2 * padding;
  const std::int64_t Wo = (W - 1) * stride + kw - 2 * padding;
  if (padding < 0 || Ho <= 0 || Wo <= 0) throw ShapeError("conv_transpose2d: padding too large for input");
  if (bias.defined() && bias.size() != Cout) throw ShapeError("conv_transpose2d: bias length mismatch");
  if (debug_checks() && !weight.value().all_finite()) throw NumericError("conv_transpose2d: non-finite weights");

  // The output image is the "input" of the adjoint convolution.
  const kernels::Geometry g{Cout, Ho, Wo, kh, kw, stride, padding, H, W, false};
  const std::int64_t Kp = g.rows(), P = g.cols();
  const std::int64_t taps = kh * kw;
  // wmt[(co,ky,kx), ci] = w[co, ci, ky, kx]
  std::vector<T> wmt(static_cast<std::size_t>(Kp * Cin));
  for (std::int64_t co = 0; co < Cout; ++co)
    for (std::int64_t ci = 0; ci < Cin; ++ci)
      for (std::int64_t t = 0; t < taps; ++t) wmt[(co * taps + t) * Cin + ci] = weight.value()[(co * Cin + ci) * taps + t];

  Tensor<T> out({B, Cout, Ho, Wo});
  std::vector<T> cols(static_cast<std::size_t>(Kp * P));
  for (std::int64_t b = 0; b < B; ++b) {
    kernels::gemm(Kp, P, Cin, wmt.data(), x.value().ptr() + b * Cin * P, cols.data(), false);
    T* ob = out.ptr() + b * Cout * Ho * Wo;
    kernels::col2im(g, cols.data(), ob);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < Cout; ++c) {
        const T bv = bias.value()[c];
        for (std::int64_t p = 0; p < Ho * Wo; ++p) ob[c * Ho * Wo + p] += bv;
      }
    }
  }
  return make_op<T>("conv_transpose2d", std::move(out), {x, weight, bias}, [g, B, Cin, Cout, taps](Node<T>& n) {
    const std::int64_t Kp = g.rows(), P = g.cols();
    const std::int64_t out_plane = Cout * g.height * g.width;
    const auto& vx = n.parents[0]->value;
    const auto& vw = n.parents[1]->value;
    const bool gx = wants_grad(n, 0), gw = wants_grad(n, 1), gb = wants_grad(n, 2);
    std::vector<T> dcols(static_cast<std::size_t>(Kp * P));
    std::vector<T> xt;
    std::vector<T> dwmt;
    if (gw) {
      xt.resize(static_cast<std::size_t>(P * Cin));
      dwmt.assign(static_cast<std::size_t>(Kp * Cin), T(0));
    }
    std::vector<T> wm;
    if (gx) {
      // wm[ci, (co,ky,kx)] = w[co, ci, ky, kx]
      wm.resize(static_cast<std::size_t>(Cin * Kp));
      for (std::int64_t co = 0; co < Cout; ++co)
        for (std::int64_t ci = 0; ci < Cin; ++ci)
          for (std::int64_t t = 0; t < taps; ++t) wm[ci * Kp + co * taps + t] = vw[(co * Cin + ci) * taps + t];
    }
    for (std::int64_t b = 0; b < B; ++b) {
      const T* dy = n.grad.ptr() + b * out_plane;
      if (gx || gw) kernels::im2col(g, dy, dcols.data());
      if (gx) {
        kernels::gemm(Cin, P, Kp, wm.data(), dcols.data(), n.parents[0]->ensure_grad().ptr() + b * Cin * P, true);
      }
      if (gw) {
        kernels::transpose(Cin, P, vx.ptr() + b * Cin * P, xt.data());
        kernels::gemm(Kp, Cin, P, dcols.data(), xt.data(), dwmt.data(), true);
      }
      if (gb) {
        T* db = n.parents[2]->ensure_grad().ptr();
        const std::int64_t plane = g.height * g.width;
        for (std::int64_t c = 0; c < Cout; ++c) {
          T acc = 0;
          for (std::int64_t p = 0; p < plane; ++p) acc += dy[c * plane + p];
          db[c] += acc;
        }
      }
    }
    if (gw) {
      T* dw = n.parents[1]->ensure_grad().ptr();
      for (std::int64_t co = 0; co < Cout; ++co)
        for (std::int64_t ci = 0; ci < Cin; ++ci)
          for (std::int64_t t = 0; t < taps; ++t) dw[(co * Cin + ci) * taps + t] += dwmt[(co * taps + t) * Cin + ci];
    }
  });
}

// ---------------------------------------------------------------- pixel shuffle

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle: input must be B x C x H x W");
  if (r < 1) throw InvalidArgument("pixel_shuffle: factor must be >= 1");
  const std::int64_t B = x.dim(0), Cr = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  if (Cr % rr != 0) {
    throw ShapeError("pixel_shuffle: channel count " + std::to_string(Cr) + " not divisible by " + std::to_string(rr));
  }
  const std::int64_t C = Cr / rr;
  Tensor<T> out({B, C, H * r, W * r});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t a = 0; a < r; ++a)
        for (std::int64_t e = 0; e < r; ++e) {
          const T* src = x.ptr() + ((b * Cr + c * rr + a * r + e) * H) * W;
          for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) out(b, c, h * r + a, w * r + e) = src[h * W + w];
        }
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  if (x.rank() != 4) throw ShapeError("pixel_unshuffle: input must be B x C x H x W");
  if (r < 1) throw InvalidArgument("pixel_unshuffle: factor must be >= 1");
  const std::int64_t B = x.dim(0), C = x.dim(1), Hr = x.dim(2), Wr = x.dim(3);
  if (Hr % r != 0 || Wr % r != 0) throw ShapeError("pixel_unshuffle: spatial dims not divisible by factor");
  const std::int64_t H = Hr / r, W = Wr / r, rr = static_cast<std::int64_t>(r) * r;
  Tensor<T> out({B, C * rr, H, W});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t a = 0; a < r; ++a)
        for (std::int64_t e = 0; e < r; ++e) {
          T* dst = out.ptr() + ((b * C * rr + c * rr + a * r + e) * H) * W;
          for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) dst[h * W + w] = x(b, c, h * r + a, w * r + e);
        }
  return out;
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  return make_op<T>("pixel_shuffle", pixel_shuffle(x.value(), r), {x},
                    [r](Node<T>& n) { accumulate_grad(parent(n, 0), pixel_unshuffle(n.grad, r)); });
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r) {
  return make_op<T>("pixel_unshuffle", pixel_unshuffle(x.value(), r), {x},
                    [r](Node<T>& n) { accumulate_grad(parent(n, 0), pixel_shuffle(n.grad, r)); });
}

// ---------------------------------------------------------------- warping

namespace {

template <typename T>
struct Tap {
  std::int64_t x0, x1, y0, y1;
  T ax, ay;
  bool in_x, in_y;  // unclamped coordinate inside the rectangle
};

template <typename T>
Tap<T> make_tap(T sx, T sy, std::int64_t H, std::int64_t W) {
  Tap<T> t{};
  t.in_x = sx >= T(0) && sx <= T(W - 1);
  t.in_y = sy >= T(0) && sy <= T(H - 1);
  sx = std::clamp(sx, T(0), T(W - 1));
  sy = std::clamp(sy, T(0), T(H - 1));
  t.x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(sx)), W - 1);
  t.y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(sy)), H - 1);
  t.x1 = std::min<std::int64_t>(t.x0 + 1, W - 1);
  t.y1 = std::min<std::int64_t>(t.y0 + 1, H - 1);
  t.ax = sx - T(t.x0);
  t.ay = sy - T(t.y0);
  return t;
}

template <typename T>
void check_warp_shapes(const Shape& s, const Shape& f) {
  if (s.size() != 4) throw ShapeError("warp: source must be B x C x H x W");
  if (f.size() != 4 || f[1] != 2) throw ShapeError("warp: flow must be B x 2 x H x W, got " + shape_str(f));
  if (f[0] != s[0] || f[2] != s[2] || f[3] != s[3]) {
    throw ShapeError("warp: flow " + shape_str(f) + " does not match source " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> warp(const Tensor<T>& src, const Tensor<T>& flow) {
  check_warp_shapes<T>(src.shape(), flow.shape());
  const std::int64_t B = src.dim(0), C = src.dim(1), H = src.dim(2), W = src.dim(3), HW = H * W;
  Tensor<T> out(src.shape());
  parallel_for(B * H, 4, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const std::int64_t b = r / H, y = r % H;
      const T* fx = flow.ptr() + (b * 2 + 0) * HW + y * W;
      const T* fy = flow.ptr() + (b * 2 + 1) * HW + y * W;
      for (std::int64_t x = 0; x < W; ++x) {
        const Tap<T> t = make_tap(T(x) + fx[x], T(y) + fy[x], H, W);
        const T w00 = (1 - t.ay) * (1 - t.ax), w01 = (1 - t.ay) * t.ax;
        const T w10 = t.ay * (1 - t.ax), w11 = t.ay * t.ax;
        for (std::int64_t c = 0; c < C; ++c) {
          const T* p = src.ptr() + (b * C + c) * HW;
          out.ptr()[(b * C + c) * HW + y * W + x] =
              w00 * p[t.y0 * W + t.x0] + w01 * p[t.y0 * W + t.x1] + w10 * p[t.y1 * W + t.x0] + w11 * p[t.y1 * W + t.x1];
        }
      }
    }
  });
  return out;
}

template <typename T>
Var<T> warp(const Var<T>& src, const Var<T>& flow) {
  return make_op<T>("warp", warp(src.value(), flow.value()), {src, flow}, [](Node<T>& n) {
    const auto& vs = n.parents[0]->value;
    const auto& vf = n.parents[1]->value;
    const std::int64_t B = vs.dim(0), C = vs.dim(1), H = vs.dim(2), W = vs.dim(3), HW = H * W;
    std::vector<Tap<T>> taps(static_cast<std::size_t>(B * HW));
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          const T fx = vf[(b * 2 + 0) * HW + y * W + x];
          const T fy = vf[(b * 2 + 1) * HW + y * W + x];
          taps[b * HW + y * W + x] = make_tap(T(x) + fx, T(y) + fy, H, W);
        }
    if (wants_grad(n, 0)) {
      T* gs = n.parents[0]->ensure_grad().ptr();
      parallel_for(B * C, 1, [&](std::int64_t p0, std::int64_t p1) {
        for (std::int64_t bc = p0; bc < p1; ++bc) {
          const std::int64_t b = bc / C;
          T* plane = gs + bc * HW;
          const T* g = n.grad.ptr() + bc * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            const auto& t = taps[b * HW + i];
            const T gv = g[i];
            plane[t.y0 * W + t.x0] += gv * (1 - t.ay) * (1 - t.ax);
            plane[t.y0 * W + t.x1] += gv * (1 - t.ay) * t.ax;
            plane[t.y1 * W + t.x0] += gv * t.ay * (1 - t.ax);
            plane[t.y1 * W + t.x1] += gv * t.ay * t.ax;
          }
        }
      });
    }
    if (wants_grad(n, 1)) {
      T* gf = n.parents[1]->ensure_grad().ptr();
      parallel_for(B * HW, 64, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bi = i0; bi < i1; ++bi) {
          const std::int64_t b = bi / HW, i = bi % HW;
          const auto& t = taps[bi];
          T dx = 0, dy = 0;
          for (std::int64_t c = 0; c < C; ++c) {
            const T* p = vs.ptr() + (b * C + c) * HW;
            const T gv = n.grad[(b * C + c) * HW + i];
            const T v00 = p[t.y0 * W + t.x0], v01 = p[t.y0 * W + t.x1];
            const T v10 = p[t.y1 * W + t.x0], v11 = p[t.y1 * W + t.x1];
            dx += gv * ((1 - t.ay) * (v01 - v00) + t.ay * (v11 - v10));
            dy += gv * ((1 - t.ax) * (v10 - v00) + t.ax * (v11 - v01));
          }
          if (t.in_x) gf[(b * 2 + 0) * HW + i] += dx;
          if (t.in_y) gf[(b * 2 + 1) * HW + i] += dy;
        }
      });
    }
  });
}

template <typename T>
Var<T> avg_pool2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "avg_pool2x", "input");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw ShapeError("avg_pool2x: spatial dims must be even, got " + shape_str(x.shape()));
  const std::int64_t h = H / 2, w = W / 2;
  Tensor<T> out({B, C, h, w});
  const T* in = x.value().ptr();
  for (std::int64_t p = 0; p < B * C; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const T* q = in + p * H * W + 2 * y * W + 2 * xx;
        out[(p * h + y) * w + xx] = T(0.25) * (q[0] + q[1] + q[W] + q[W + 1]);
      }
  return make_op<T>("avg_pool2x", std::move(out), {x}, [B, C, H, W](Node<T>& n) {
    const std::int64_t h = H / 2, w = W / 2;
    Tensor<T> g({B, C, H, W});
    for (std::int64_t p = 0; p < B * C; ++p)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t xx = 0; xx < W; ++xx) g[(p * H + y) * W + xx] = T(0.25) * n.grad[(p * h + y / 2) * w + xx / 2];
    accumulate_grad(parent(n, 0), g);
  });
}

namespace {

struct Lerp {
  std::int64_t i0, i1;
  double a;
};

std::vector<Lerp> upsample_taps(std::int64_t n_in) {
  std::vector<Lerp> taps(static_cast<std::size_t>(2 * n_in));
  for (std::int64_t o = 0; o < 2 * n_in; ++o) {
    double s = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
    const auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(s)), n_in - 1);
    taps[o] = {i0, std::min<std::int64_t>(i0 + 1, n_in - 1), s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample2x", "input");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto ty = upsample_taps(H), tx = upsample_taps(W);
  Tensor<T> out({B, C, 2 * H, 2 * W});
  const T* in = x.value().ptr();
  for (std::int64_t p = 0; p < B * C; ++p)
    for (std::int64_t oy = 0; oy < 2 * H; ++oy) {
      const auto& a = ty[oy];
      const T* r0 = in + p * H * W + a.i0 * W;
      const T* r1 = in + p * H * W + a.i1 * W;
      T* o = out.ptr() + (p * 2 * H + oy) * 2 * W;
      for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
        const auto& b = tx[ox];
        const T top = r0[b.i0] + T(b.a) * (r0[b.i1] - r0[b.i0]);
        const T bot = r1[b.i0] + T(b.a) * (r1[b.i1] - r1[b.i0]);
        o[ox] = top + T(a.a) * (bot - top);
      }
    }
  return make_op<T>("upsample2x", std::move(out), {x}, [B, C, H, W, ty, tx](Node<T>& n) {
    Tensor<T> g({B, C, H, W});
    for (std::int64_t p = 0; p < B * C; ++p)
      for (std::int64_t oy = 0; oy < 2 * H; ++oy) {
        const auto& a = ty[oy];
        T* r0 = g.ptr() + p * H * W + a.i0 * W;
        T* r1 = g.ptr() + p * H * W + a.i1 * W;
        const T* go = n.grad.ptr() + (p * 2 * H + oy) * 2 * W;
        for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
          const auto& b = tx[ox];
          const T gt = go[ox] * T(1 - a.a);
          const T gb = go[ox] * T(a.a);
          r0[b.i0] += gt * T(1 - b.a);
          r0[b.i1] += gt * T(b.a);
          r1[b.i0] += gb * T(1 - b.a);
          r1[b.i1] += gb * T(b.a);
        }
      }
    accumulate_grad(parent(n, 0), g);
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.value()[i];
  return make_op<T>("sum", Tensor<T>({1}, acc), {x}, [](Node<T>& n) {
    accumulate_grad(parent(n, 0), Tensor<T>(n.parents[0]->value.shape(), n.grad[0]));
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  const T inv = T(1) / static_cast<T>(x.size());
  T acc = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.value()[i];
  return make_op<T>("mean", Tensor<T>({1}, acc * inv), {x}, [inv](Node<T>& n) {
    accumulate_grad(parent(n, 0), Tensor<T>(n.parents[0]->value.shape(), n.grad[0] * inv));
  });
}

template <typename T>
Var<T> dot(const Var<T>& x, const Tensor<T>& w) {
  if (w.size() != x.size()) throw ShapeError("dot: weight size mismatch");
  T acc = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.value()[i] * w[i];
  return make_op<T>("dot", Tensor<T>({1}, acc), {x}, [w](Node<T>& n) {
    Tensor<T> g(n.parents[0]->value.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = n.grad[0] * w[i];
    accumulate_grad(parent(n, 0), g);
  });
}

template <typename T>
Var<T> charbonnier(const Var<T>& a, const Var<T>& b, T eps) {
  require_same_shape(a, b, "charbonnier");
  if (a.size() == 0) throw ShapeError("charbonnier of empty tensors");
  const T e2 = eps * eps;
  const T inv = T(1) / static_cast<T>(a.size());
  // sqrt(d^2 + e^2) = e + d^2 / (sqrt(d^2 + e^2) + e): identical inputs give
  // exactly e, and small residuals keep their precision.
  T acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d / (std::sqrt(d * d + e2) + eps);
  }
  return make_op<T>("charbonnier", Tensor<T>({1}, eps + acc * inv), {a, b}, [e2, inv](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    const auto& vb = n.parents[1]->value;
    Tensor<T> g(va.shape());
    const T s = n.grad[0] * inv;
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const T d = va[i] - vb[i];
      g[i] = s * d / std::sqrt(d * d + e2);
    }
    accumulate_grad(parent(n, 0), g);
    if (wants_grad(n, 1)) {
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = -g[i];
      accumulate_grad(parent(n, 1), g);
    }
  });
}

// ---------------------------------------------------------------- instantiation

#define TCVSR_INSTANTIATE_OPS(T)                                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> scale(const Var<T>&, T);                                                             \
  template Var<T> scale_by(const Var<T>&, const Var<T>&);                                              \
  template Var<T> leaky_relu(const Var<T>&, T);                                                        \
  template Var<T> concat(const std::vector<Var<T>>&, int);                                             \
  template Var<T> slice(const Var<T>&, int, std::int64_t, std::int64_t);                               \
  template Var<T> reshape(const Var<T>&, Shape);                                                       \
  template Var<T> transpose(const Var<T>&);                                                            \
  template Var<T> gather(const Var<T>&, std::shared_ptr<const std::vector<std::int64_t>>, Shape);      \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> softmax_rows(const Var<T>&);                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, PadMode);              \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);             \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                                   \
  template Var<T> pixel_unshuffle(const Var<T>&, int);                                                 \
  template Var<T> warp(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> avg_pool2x(const Var<T>&);                                                           \
  template Var<T> upsample2x(const Var<T>&);                                                           \
  template Var<T> sum(const Var<T>&);                                                                  \
  template Var<T> mean(const Var<T>&);                                                                 \
  template Var<T> dot(const Var<T>&, const Tensor<T>&);                                                \
  template Var<T> charbonnier(const Var<T>&, const Var<T>&, T);                                        \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                             \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                           \
  template Tensor<T> warp(const Tensor<T>&, const Tensor<T>&);

TCVSR_INSTANTIATE_OPS(float)
TCVSR_INSTANTIATE_OPS(double)

}  // namespace tcvsr
