#pragma once

// Frame sequences, synthetic moving patterns, BI/BD degradation, training
// crops and PNG frame directories. Images are 3 x H x W float tensors with
// values in [0, 1].

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcvsr/rng.hpp"
#include "tcvsr/tensor.hpp"

namespace tcvsr {

using Image = Tensor<float>;

struct Sequence {
  std::vector<Image> frames;
  /// Ground-truth displacement (dx, dy) from frame i to frame i + 1, in
  /// pixels; empty when unknown.
  std::vector<std::array<double, 2>> motion;

  std::size_t size() const noexcept { return frames.size(); }
  std::int64_t height() const { return frames.empty() ? 0 : frames[0].dim(1); }
  std::int64_t width() const { return frames.empty() ? 0 : frames[0].dim(2); }
};

enum class Pattern { Checkerboard, GradientNoise, TextLike };
Pattern parse_pattern(const std::string& s);
const char* to_string(Pattern p);

/// Frame t shows the base pattern translated by the cumulative motion
/// sum_{k<t} motion[k]. Fractional shifts are resampled with the a = -0.5
/// cubic kernel; integer shifts are exact index shifts.
Sequence synth_sequence(Pattern pattern, const std::vector<std::array<double, 2>>& motion, int frames, int height,
                        int width, std::uint64_t seed);
/// Same, with one constant per-frame motion.
Sequence synth_sequence(Pattern pattern, std::array<double, 2> motion, int frames, int height, int width,
                        std::uint64_t seed);

/// Cubic kernel with a = -0.5.
double cubic_kernel(double x);

/// Separable imresize-style bicubic resampling (half-pixel centred mapping,
/// kernel widened by 1/scale when shrinking, symmetric borders). No clamping.
Image bicubic_resize(const Image& img, std::int64_t out_h, std::int64_t out_w);

/// Normalized 1D Gaussian of odd length `size`.
std::vector<double> gaussian_kernel(double sigma, int size);

inline constexpr double kBdSigma = 1.6;
inline constexpr int kBdKernelSize = 13;

/// Bicubic downscale by `scale`, clamped to [0, 1]. `clamped` receives the
/// number of clamped values when non-null.
Image degrade_bi(const Image& hr, int scale, std::int64_t* clamped = nullptr);
/// Gaussian blur (sigma 1.6, 13 taps, replicate borders) then keep every
/// `scale`-th pixel starting at index 0.
Image degrade_bd(const Image& hr, int scale = 4);
/// Applies "bi" or "bd" to every frame. Motion is divided by the scale.
Sequence degrade_sequence(const Sequence& hr, const std::string& kind, int scale);

/// Bicubic upsampling baseline, clamped to [0, 1].
Image bicubic_upscale(const Image& lr, int scale);

struct ClipPair {
  std::vector<Image> lr;
  std::vector<Image> hr;
  std::int64_t y = 0, x = 0;  // LR crop origin
};

/// Crops the same LR window (and the matching HR window at scale * (y, x))
/// from frames [t0, t0 + len).
ClipPair crop_clip(const Sequence& hr, const Sequence& lr, int t0, int len, std::int64_t y, std::int64_t x,
                   int patch_lr, int scale);
/// Random crop position and start frame drawn from rng.
ClipPair crop_patch_pairs(const Sequence& hr, const Sequence& lr, int len, int patch_lr, int scale, Rng& rng);

/// Crops a 3 x H x W image.
Image crop(const Image& img, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);

Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& img);
/// Rounds to 8 bits: round(clamp(v, 0, 1) * 255).
std::uint8_t to_u8(float v);

/// Loads every *.png in `dir`, ordered by the number in the file name.
Sequence load_frames(const std::filesystem::path& dir);
/// Writes frame_%05d.png files and returns their paths.
std::vector<std::filesystem::path> save_frames(const Sequence& seq, const std::filesystem::path& dir);
/// Text manifest: one "frame <path>" line per frame and one
/// "motion <i> <dx> <dy>" line per known pair.
void write_sequence_manifest(const std::filesystem::path& path, const Sequence& seq,
                             const std::vector<std::filesystem::path>& files);

}  // namespace tcvsr
