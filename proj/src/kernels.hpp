#pragma once

// Raw numeric kernels shared by the differentiable ops. Every kernel computes
// each output element in a fixed summation order, and parallel splits only
// partition outputs, so results are independent of the thread count.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tcvsr/parallel.hpp"

namespace tcvsr::kernels {

/// C[MxN] (+)= A[MxK] * B[KxN]; all row-major and contiguous.
template <typename T>
void gemm(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  constexpr std::int64_t kColBlock = 256;
  const std::int64_t col_blocks = (N + kColBlock - 1) / kColBlock;
  auto body = [&](std::int64_t jb0, std::int64_t jb1) {
    for (std::int64_t jb = jb0; jb < jb1; ++jb) {
      const std::int64_t j0 = jb * kColBlock;
      const std::int64_t j1 = std::min(N, j0 + kColBlock);
      const std::int64_t w = j1 - j0;
      std::int64_t i = 0;
      for (; i + 4 <= M; i += 4) {
        T* c0 = C + (i + 0) * N + j0;
        T* c1 = C + (i + 1) * N + j0;
        T* c2 = C + (i + 2) * N + j0;
        T* c3 = C + (i + 3) * N + j0;
        if (!accumulate) {
          std::fill(c0, c0 + w, T(0));
          std::fill(c1, c1 + w, T(0));
          std::fill(c2, c2 + w, T(0));
          std::fill(c3, c3 + w, T(0));
        }
        const T* a0 = A + (i + 0) * K;
        const T* a1 = A + (i + 1) * K;
        const T* a2 = A + (i + 2) * K;
        const T* a3 = A + (i + 3) * K;
        for (std::int64_t k = 0; k < K; ++k) {
          const T* b = B + k * N + j0;
          const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
          for (std::int64_t j = 0; j < w; ++j) {
            const T bj = b[j];
            c0[j] += v0 * bj;
            c1[j] += v1 * bj;
            c2[j] += v2 * bj;
            c3[j] += v3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        T* c = C + i * N + j0;
        if (!accumulate) std::fill(c, c + w, T(0));
        const T* a = A + i * K;
        for (std::int64_t k = 0; k < K; ++k) {
          const T* b = B + k * N + j0;
          const T v = a[k];
          for (std::int64_t j = 0; j < w; ++j) c[j] += v * b[j];
        }
      }
    }
  };
  if (M * N * K < (1 << 16)) {
    body(0, col_blocks);
  } else {
    parallel_for(col_blocks, 1, body);
  }
}

/// out[cols x rows] = transpose of in[rows x cols].
template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* in, T* out) {
  constexpr std::int64_t kB = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += kB) {
    for (std::int64_t c0 = 0; c0 < cols; c0 += kB) {
      const std::int64_t r1 = std::min(rows, r0 + kB);
      const std::int64_t c1 = std::min(cols, c0 + kB);
      for (std::int64_t r = r0; r < r1; ++r) {
        for (std::int64_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

/// Sliding-window geometry for an image of C x H x W sampled on an
/// out_h x out_w grid.
struct Geometry {
  std::int64_t channels, height, width;
  std::int64_t kh, kw;
  std::int64_t stride, pad;
  std::int64_t out_h, out_w;
  bool replicate;

  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t cols() const { return out_h * out_w; }
};

/// cols[(c,ky,kx) x (oy,ox)] = img[c, oy*s-p+ky, ox*s-p+kx] (zero or clamped
/// outside).
template <typename T>
void im2col(const Geometry& g, const T* img, T* cols) {
  const std::int64_t P = g.cols();
  parallel_for(g.rows(), 8, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const std::int64_t c = r / (g.kh * g.kw);
      const std::int64_t ky = (r / g.kw) % g.kh;
      const std::int64_t kx = r % g.kw;
      const T* plane = img + c * g.height * g.width;
      T* dst = cols + r * P;
      for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
        std::int64_t iy = oy * g.stride - g.pad + ky;
        T* row = dst + oy * g.out_w;
        if (iy < 0 || iy >= g.height) {
          if (!g.replicate) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          iy = std::clamp<std::int64_t>(iy, 0, g.height - 1);
        }
        const T* src = plane + iy * g.width;
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          std::int64_t ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.width) {
            if (!g.replicate) {
              row[ox] = T(0);
              continue;
            }
            ix = std::clamp<std::int64_t>(ix, 0, g.width - 1);
          }
          row[ox] = src[ix];
        }
      }
    }
  });
}

/// Adjoint of im2col: accumulates cols back into img.
template <typename T>
void col2im(const Geometry& g, const T* cols, T* img) {
  const std::int64_t P = g.cols();
  const std::int64_t per_channel = g.kh * g.kw;
  parallel_for(g.channels, 1, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t c = c0; c < c1; ++c) {
      T* plane = img + c * g.height * g.width;
      for (std::int64_t k = 0; k < per_channel; ++k) {
        const std::int64_t ky = k / g.kw;
        const std::int64_t kx = k % g.kw;
        const T* src = cols + (c * per_channel + k) * P;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) {
            if (!g.replicate) continue;
            iy = std::clamp<std::int64_t>(iy, 0, g.height - 1);
          }
          T* dst = plane + iy * g.width;
          const T* row = src + oy * g.out_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) {
              if (!g.replicate) continue;
              ix = std::clamp<std::int64_t>(ix, 0, g.width - 1);
            }
            dst[ix] += row[ox];
          }
        }
      }
    }
  });
}

}  // namespace tcvsr::kernels
