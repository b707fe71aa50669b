#pragma once

// Image quality metrics, per-frame reports and temporal profiles.

#include <filesystem>
#include <string>
#include <vector>

#include "tcvsr/data.hpp"

namespace tcvsr {

inline constexpr double kPsnrCap = 99.0;

struct PsnrResult {
  double db = 0;
  bool identical = false;
};

/// 10 log10(peak^2 / MSE); identical inputs give the 99 dB cap.
PsnrResult psnr(const Image& a, const Image& b, double peak = 1.0);

/// Single-scale SSIM on a 1 x H x W image (11 x 11 Gaussian window, sigma
/// 1.5, K1 0.01, K2 0.03, mean over valid windows). Multi-channel inputs are
/// scored per channel and averaged.
double ssim(const Image& a, const Image& b);

/// BT.601 studio-swing luma: (65.481 R + 128.553 G + 24.966 B + 16) / 255.
Image rgb_to_y(const Image& rgb);
Tensor<double> rgb_to_y(const Tensor<double>& rgb);
double luma(double r, double g, double b);

/// Mean of sqrt((a - b)^2 + eps^2), evaluated in double.
double charbonnier_value(const Image& a, const Image& b, double eps = 1e-3);

enum class ChannelMode { RGB, Y };
ChannelMode parse_channel_mode(const std::string& s);
const char* to_string(ChannelMode m);

struct MetricRow {
  int frame = 0;
  double psnr_db = 0;
  double ssim = 0;
  bool identical = false;
};

struct MetricReport {
  ChannelMode mode = ChannelMode::Y;
  std::vector<MetricRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  /// Population standard deviation of per-frame PSNR.
  double psnr_std = 0;
};

/// Scores every frame after clamping both inputs to [0, 1] (and converting
/// to Y in Y mode).
MetricReport per_frame_report(const std::vector<Image>& sr, const std::vector<Image>& hr, ChannelMode mode);
/// Recomputes mean_psnr, mean_ssim and psnr_std from the rows.
void finalize_report(MetricReport& r);

/// CSV with header frame_idx,psnr_db,ssim; values written with enough
/// digits to round-trip exactly.
void write_report_csv(const std::filesystem::path& path, const MetricReport& r);
MetricReport read_report_csv(const std::filesystem::path& path);

/// Row `row` of each frame stacked top to bottom: 3 x T x W.
Image temporal_profile(const std::vector<Image>& frames, std::int64_t row);

/// Horizontal displacement per profile row, estimated by cross-correlating
/// consecutive rows (luma, mean removed) over shifts in [-max_shift,
/// max_shift] and refining the peak with a parabola. Returns the median of
/// per-pair estimates.
double profile_slope(const Image& profile, int max_shift = 8);

}  // namespace tcvsr
