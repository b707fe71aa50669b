#include "tcvsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace tcvsr {

namespace {

void same_shape(const Image& a, const Image& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
}

}  // namespace

PsnrResult psnr(const Image& a, const Image& b, double peak) {
  same_shape(a, b, "psnr");
  if (a.size() == 0) throw ShapeError("psnr: empty image");
  double se = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return {kPsnrCap, true};
  return {std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse)), false};
}

namespace {

double ssim_plane(const float* a, const float* b, std::int64_t H, std::int64_t W) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (H < kWin || W < kWin) throw ShapeError("ssim: image smaller than the 11 x 11 window");
  std::array<double, kWin> g{};
  double total = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  // Separable filtering of a, b, a^2, b^2, ab over the valid region.
  const std::int64_t oh = H - kWin + 1, ow = W - kWin + 1;
  std::vector<double> h(static_cast<std::size_t>(5 * H * ow));
  auto at = [&](int k, std::int64_t y, std::int64_t x) -> double& { return h[(k * H + y) * ow + x]; };
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int i = 0; i < kWin; ++i) {
        const double va = a[y * W + x + i], vb = b[y * W + x + i];
        s[0] += g[i] * va;
        s[1] += g[i] * vb;
        s[2] += g[i] * va * va;
        s[3] += g[i] * vb * vb;
        s[4] += g[i] * va * vb;
      }
      for (int k = 0; k < 5; ++k) at(k, y, x) = s[k];
    }
  double acc = 0;
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int i = 0; i < kWin; ++i)
        for (int k = 0; k < 5; ++k) s[k] += g[i] * at(k, y + i, x);
      const double mu_a = s[0], mu_b = s[1];
      const double va = s[2] - mu_a * mu_a, vb = s[3] - mu_b * mu_b, cov = s[4] - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / ((mu_a * mu_a + mu_b * mu_b + C1) * (va + vb + C2));
    }
  return acc / static_cast<double>(oh * ow);
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  same_shape(a, b, "ssim");
  if (a.rank() != 3) throw ShapeError("ssim: expects C x H x W");
  const std::int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  // Bitwise-identical inputs score exactly 1.
  if (std::equal(a.data().begin(), a.data().end(), b.data().begin())) {
    if (H < 11 || W < 11) throw ShapeError("ssim: image smaller than the 11 x 11 window");
    return 1.0;
  }
  double s = 0;
  for (std::int64_t c = 0; c < C; ++c) s += ssim_plane(a.ptr() + c * H * W, b.ptr() + c * H * W, H, W);
  return s / static_cast<double>(C);
}

double luma(double r, double g, double b) { return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0; }

namespace {

template <typename T>
Tensor<T> luma_image(const Tensor<T>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb_to_y: expects 3 x H x W, got " + shape_str(rgb.shape()));
  const std::int64_t H = rgb.dim(1), W = rgb.dim(2);
  Tensor<T> y({1, H, W});
  for (std::int64_t i = 0; i < H * W; ++i) y[i] = static_cast<T>(luma(rgb[i], rgb[H * W + i], rgb[2 * H * W + i]));
  return y;
}

}  // namespace

Image rgb_to_y(const Image& rgb) { return luma_image(rgb); }
Tensor<double> rgb_to_y(const Tensor<double>& rgb) { return luma_image(rgb); }

double charbonnier_value(const Image& a, const Image& b, double eps) {
  same_shape(a, b, "charbonnier");
  double s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d / (std::sqrt(d * d + eps * eps) + eps);
  }
  return eps + s / static_cast<double>(a.size());
}

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "y" || s == "Y") return ChannelMode::Y;
  if (s == "rgb" || s == "RGB") return ChannelMode::RGB;
  throw InvalidArgument("unknown channel mode '" + s + "' (expected y or rgb)");
}

const char* to_string(ChannelMode m) { return m == ChannelMode::Y ? "y" : "rgb"; }

void finalize_report(MetricReport& r) {
  const auto n = static_cast<double>(r.rows.size());
  r.mean_psnr = r.mean_ssim = r.psnr_std = 0;
  if (r.rows.empty()) return;
  for (const auto& row : r.rows) {
    r.mean_psnr += row.psnr_db;
    r.mean_ssim += row.ssim;
  }
  r.mean_psnr /= n;
  r.mean_ssim /= n;
  double var = 0;
  for (const auto& row : r.rows) var += (row.psnr_db - r.mean_psnr) * (row.psnr_db - r.mean_psnr);
  r.psnr_std = std::sqrt(var / n);
}

MetricReport per_frame_report(const std::vector<Image>& sr, const std::vector<Image>& hr, ChannelMode mode) {
  if (sr.size() != hr.size()) {
    throw ShapeError("eval: " + std::to_string(sr.size()) + " SR frames vs " + std::to_string(hr.size()) + " GT frames");
  }
  MetricReport r;
  r.mode = mode;
  auto prep = [&](const Image& img) {
    Image c = img;
    for (auto& v : c.data()) v = std::clamp(v, 0.0f, 1.0f);
    return mode == ChannelMode::Y ? rgb_to_y(c) : c;
  };
  for (std::size_t i = 0; i < sr.size(); ++i) {
    const Image a = prep(sr[i]), b = prep(hr[i]);
    const auto p = psnr(a, b);
    r.rows.push_back({static_cast<int>(i), p.db, ssim(a, b), p.identical});
  }
  finalize_report(r);
  return r;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "frame_idx,psnr_db,ssim\n";
  for (const auto& row : r.rows) out << row.frame << ',' << row.psnr_db << ',' << row.ssim << '\n';
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame_idx,psnr_db,ssim") throw IoError(path.string() + ": bad CSV header");
  MetricReport r;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    MetricRow row;
    char c1 = 0, c2 = 0;
    if (!(ls >> row.frame >> c1 >> row.psnr_db >> c2 >> row.ssim) || c1 != ',' || c2 != ',') {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    row.identical = row.psnr_db >= kPsnrCap;
    r.rows.push_back(row);
  }
  finalize_report(r);
  return r;
}

Image temporal_profile(const std::vector<Image>& frames, std::int64_t row) {
  if (frames.empty()) throw InvalidArgument("temporal_profile: no frames");
  const auto& f0 = frames[0];
  if (f0.rank() != 3) throw ShapeError("temporal_profile: frames must be C x H x W");
  if (row < 0 || row >= f0.dim(1)) {
    throw InvalidArgument("temporal_profile: row " + std::to_string(row) + " outside [0, " + std::to_string(f0.dim(1)) + ")");
  }
  const std::int64_t C = f0.dim(0), W = f0.dim(2), T = static_cast<std::int64_t>(frames.size());
  Image p({C, T, W});
  for (std::int64_t t = 0; t < T; ++t) {
    if (frames[t].shape() != f0.shape()) throw ShapeError("temporal_profile: frames differ in shape");
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t x = 0; x < W; ++x) p(c, t, x) = frames[t](c, row, x);
  }
  return p;
}

double profile_slope(const Image& profile, int max_shift) {
  if (profile.rank() != 3 || profile.dim(1) < 2) throw ShapeError("profile_slope: need at least two profile rows");
  const std::int64_t C = profile.dim(0), T = profile.dim(1), W = profile.dim(2);
  if (W <= 2 * max_shift + 2) throw ShapeError("profile_slope: profile too narrow for the shift range");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(W)));
  for (std::int64_t t = 0; t < T; ++t) {
    double mean = 0;
    for (std::int64_t x = 0; x < W; ++x) {
      double v = 0;
      for (std::int64_t c = 0; c < C; ++c) v += profile(c, t, x);
      rows[t][x] = v / static_cast<double>(C);
      mean += rows[t][x];
    }
    mean /= static_cast<double>(W);
    for (auto& v : rows[t]) v -= mean;
  }
  std::vector<double> est;
  for (std::int64_t t = 0; t + 1 < T; ++t) {
    // score(s) compares row t + 1 at x with row t at x - s over a fixed window.
    std::vector<double> score(static_cast<std::size_t>(2 * max_shift + 1));
    for (int s = -max_shift; s <= max_shift; ++s) {
      double acc = 0;
      for (std::int64_t x = max_shift; x < W - max_shift; ++x) acc += rows[t + 1][x] * rows[t][x - s];
      score[s + max_shift] = acc;
    }
    const auto best = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
    double shift = best - max_shift;
    if (best > 0 && best < 2 * max_shift) {
      const double l = score[best - 1], c = score[best], r = score[best + 1];
      const double den = l - 2 * c + r;
      if (den != 0) shift += 0.5 * (l - r) / den;
    }
    est.push_back(shift);
  }
  std::sort(est.begin(), est.end());
  const std::size_t n = est.size();
  return n % 2 ? est[n / 2] : 0.5 * (est[n / 2 - 1] + est[n / 2]);
}

}  // namespace tcvsr
