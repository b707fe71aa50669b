#include "tcvsr/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tcvsr {

Pattern parse_pattern(const std::string& s) {
  if (s == "checkerboard") return Pattern::Checkerboard;
  if (s == "gradient-noise") return Pattern::GradientNoise;
  if (s == "text-like") return Pattern::TextLike;
  throw InvalidArgument("unknown pattern '" + s + "' (expected checkerboard, gradient-noise or text-like)");
}

const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::Checkerboard: return "checkerboard";
    case Pattern::GradientNoise: return "gradient-noise";
    case Pattern::TextLike: return "text-like";
  }
  return "?";
}

// ---------------------------------------------------------------- patterns

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash(std::uint64_t seed, std::int64_t a, std::int64_t b, std::uint64_t salt) {
  std::uint64_t h = mix(seed ^ (salt * 0xD6E8FEB86659FD93ULL));
  h = mix(h ^ static_cast<std::uint64_t>(a));
  h = mix(h ^ (static_cast<std::uint64_t>(b) * 0x9E3779B97F4A7C15ULL));
  return h;
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

struct Lattice {
  Pattern pattern;
  std::uint64_t seed;
  std::int64_t cell;  // checkerboard cell size

  explicit Lattice(Pattern p, std::uint64_t s) : pattern(p), seed(s), cell(8 + static_cast<std::int64_t>(hash(s, 0, 0, 1) % 8)) {}

  std::array<double, 3> operator()(std::int64_t x, std::int64_t y) const {
    switch (pattern) {
      case Pattern::Checkerboard: return checker(x, y);
      case Pattern::GradientNoise: return noise(x, y);
      case Pattern::TextLike: return text(x, y);
    }
    return {0, 0, 0};
  }

  std::array<double, 3> checker(std::int64_t x, std::int64_t y) const {
    const std::int64_t cx = floor_div(x, cell), cy = floor_div(y, cell);
    const bool light = ((cx + cy) & 1) != 0;
    std::array<double, 3> v{};
    for (int c = 0; c < 3; ++c) {
      const double u = unit(hash(seed, cx, cy, 10 + c));
      v[c] = light ? 0.7 + 0.25 * u : 0.05 + 0.25 * u;
    }
    return v;
  }

  double perlin(double px, double py, std::uint64_t salt) const {
    const double fx = std::floor(px), fy = std::floor(py);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double tx = px - fx, ty = py - fy;
    auto grad = [&](std::int64_t gx, std::int64_t gy, double dx, double dy) {
      const double ang = 2.0 * 3.14159265358979323846 * unit(hash(seed, gx, gy, salt));
      return std::cos(ang) * dx + std::sin(ang) * dy;
    };
    auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
    const double n00 = grad(ix, iy, tx, ty), n10 = grad(ix + 1, iy, tx - 1, ty);
    const double n01 = grad(ix, iy + 1, tx, ty - 1), n11 = grad(ix + 1, iy + 1, tx - 1, ty - 1);
    const double u = fade(tx), w = fade(ty);
    return (n00 * (1 - u) + n10 * u) * (1 - w) + (n01 * (1 - u) + n11 * u) * w;
  }

  std::array<double, 3> noise(std::int64_t x, std::int64_t y) const {
    std::array<double, 3> v{};
    for (int c = 0; c < 3; ++c) {
      double s = 0, amp = 1, freq = 1.0 / 24.0;
      for (int o = 0; o < 4; ++o) {
        s += amp * perlin(static_cast<double>(x) * freq, static_cast<double>(y) * freq, 100 + 10 * c + o);
        amp *= 0.5;
        freq *= 2;
      }
      v[c] = std::clamp(0.5 + 0.6 * s, 0.0, 1.0);
    }
    return v;
  }

  std::array<double, 3> text(std::int64_t x, std::int64_t y) const {
    constexpr std::int64_t kW = 9, kH = 14;
    const std::int64_t gx = floor_div(x, kW), gy = floor_div(y, kH);
    const std::int64_t lx = x - gx * kW, ly = y - gy * kH;
    const std::uint64_t h = hash(seed, gx, gy, 20);
    const bool blank = (h & 7) == 0;
    const std::array<double, 3> paper{0.93, 0.92, 0.88};
    if (blank) return paper;
    // Seven-segment style glyph inside a 7 x 11 box with 2-pixel strokes.
    const bool seg[7] = {((h >> 3) & 1) != 0, ((h >> 4) & 1) != 0, ((h >> 5) & 1) != 0, ((h >> 6) & 1) != 0,
                         ((h >> 7) & 1) != 0, ((h >> 8) & 1) != 0, ((h >> 9) & 1) != 0};
    const bool in_h = lx >= 1 && lx <= 7;
    const bool top = in_h && ly >= 1 && ly <= 2, mid = in_h && ly >= 6 && ly <= 7, bot = in_h && ly >= 11 && ly <= 12;
    const bool upper = ly >= 1 && ly <= 7, lower = ly >= 6 && ly <= 12;
    const bool left = lx >= 1 && lx <= 2, right = lx >= 6 && lx <= 7;
    const bool ink = (seg[0] && top) || (seg[1] && mid) || (seg[2] && bot) || (seg[3] && upper && left) ||
                     (seg[4] && lower && left) || (seg[5] && upper && right) || (seg[6] && lower && right);
    if (!ink) return paper;
    const double tint = unit(hash(seed, 0, gy, 21));
    return {0.08 + 0.25 * tint, 0.08, 0.12 + 0.2 * (1 - tint)};
  }
};

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1) return ((a + 2) * ax - (a + 3)) * ax * ax + 1;
  if (ax < 2) return ((a * ax - 5 * a) * ax + 8 * a) * ax - 4 * a;
  return 0.0;
}

Sequence synth_sequence(Pattern pattern, const std::vector<std::array<double, 2>>& motion, int frames, int height,
                        int width, std::uint64_t seed) {
  if (frames < 1 || height < 1 || width < 1) throw InvalidArgument("synth: frames, height and width must be positive");
  if (static_cast<int>(motion.size()) < frames - 1) throw InvalidArgument("synth: need one motion entry per frame pair");
  const Lattice lat(pattern, seed);
  Sequence seq;
  double sx = 0, sy = 0;
  for (int t = 0; t < frames; ++t) {
    if (t > 0) {
      sx += motion[t - 1][0];
      sy += motion[t - 1][1];
      seq.motion.push_back(motion[t - 1]);
    }
    // Pixel (x, y) samples the lattice at (x - sx, y - sy). The fractional
    // part is the same for every pixel.
    const double ox = std::floor(-sx), oy = std::floor(-sy);
    const double tx = -sx - ox, ty = -sy - oy;
    const auto x0 = static_cast<std::int64_t>(ox), y0 = static_cast<std::int64_t>(oy);
    std::array<double, 4> wx{}, wy{};
    for (int k = 0; k < 4; ++k) {
      wx[k] = cubic_kernel(tx - (k - 1));
      wy[k] = cubic_kernel(ty - (k - 1));
    }
    const std::int64_t RH = height + 3, RW = width + 3;
    std::vector<std::array<double, 3>> raster(static_cast<std::size_t>(RH * RW));
    for (std::int64_t r = 0; r < RH; ++r)
      for (std::int64_t c = 0; c < RW; ++c) raster[r * RW + c] = lat(x0 - 1 + c, y0 - 1 + r);
    Image img({3, height, width});
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0;
          for (int j = 0; j < 4; ++j) {
            double row = 0;
            for (int i = 0; i < 4; ++i) row += wx[i] * raster[(y + j) * RW + x + i][ch];
            acc += wy[j] * row;
          }
          img(ch, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

Sequence synth_sequence(Pattern pattern, std::array<double, 2> motion, int frames, int height, int width,
                        std::uint64_t seed) {
  std::vector<std::array<double, 2>> m(static_cast<std::size_t>(std::max(frames - 1, 0)), motion);
  return synth_sequence(pattern, m, frames, height, width, seed);
}

// ---------------------------------------------------------------- resampling

namespace {

struct Contrib {
  std::vector<std::int64_t> index;
  std::vector<double> weight;
};

// Per-output taps for one axis, following the imresize construction.
std::vector<Contrib> contributions(std::int64_t in, std::int64_t out, double scale) {
  const bool shrink = scale < 1.0;
  const double kw = shrink ? 4.0 / scale : 4.0;
  const auto taps = static_cast<std::int64_t>(std::ceil(kw)) + 2;
  std::vector<Contrib> res(static_cast<std::size_t>(out));
  for (std::int64_t i = 0; i < out; ++i) {
    const double u = static_cast<double>(i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const auto left = static_cast<std::int64_t>(std::floor(u - kw / 2));
    std::vector<double> w(static_cast<std::size_t>(taps));
    double total = 0;
    for (std::int64_t j = 0; j < taps; ++j) {
      const double d = u - static_cast<double>(left + j);
      w[j] = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      total += w[j];
    }
    auto& c = res[i];
    for (std::int64_t j = 0; j < taps; ++j) {
      if (w[j] == 0.0) continue;
      // 1-based index left + j, mirrored symmetrically into [1, in].
      std::int64_t k = left + j - 1;
      const std::int64_t period = 2 * in;
      k = ((k % period) + period) % period;
      if (k >= in) k = period - 1 - k;
      auto it = std::find(c.index.begin(), c.index.end(), k);
      if (it == c.index.end()) {
        c.index.push_back(k);
        c.weight.push_back(w[j] / total);
      } else {
        c.weight[static_cast<std::size_t>(it - c.index.begin())] += w[j] / total;
      }
    }
  }
  return res;
}

}  // namespace

Image bicubic_resize(const Image& img, std::int64_t out_h, std::int64_t out_w) {
  if (img.rank() != 3) throw ShapeError("bicubic_resize: expects C x H x W");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("bicubic_resize: target size must be positive");
  const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const auto cx = contributions(W, out_w, static_cast<double>(out_w) / static_cast<double>(W));
  const auto cy = contributions(H, out_h, static_cast<double>(out_h) / static_cast<double>(H));
  Image out({C, out_h, out_w});
  std::vector<double> tmp(static_cast<std::size_t>(H * out_w));
  for (std::int64_t c = 0; c < C; ++c) {
    const float* src = img.ptr() + c * H * W;
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < out_w; ++x) {
        double acc = 0;
        const auto& t = cx[x];
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * src[y * W + t.index[k]];
        tmp[y * out_w + x] = acc;
      }
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t x = 0; x < out_w; ++x) {
        double acc = 0;
        const auto& t = cy[y];
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * tmp[t.index[k] * out_w + x];
        out(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  if (size < 1 || size % 2 == 0) throw InvalidArgument("gaussian_kernel: size must be odd and positive");
  if (!(sigma > 0)) throw InvalidArgument("gaussian_kernel: sigma must be positive");
  std::vector<double> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double total = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2 * sigma * sigma));
    total += k[i + r];
  }
  for (auto& v : k) v /= total;
  return k;
}

namespace {

void require_image(const Image& img, const char* what) {
  if (img.rank() != 3 || img.dim(0) < 1) throw ShapeError(std::string(what) + ": expects a C x H x W image");
}

}  // namespace

Image degrade_bi(const Image& hr, int scale, std::int64_t* clamped) {
  require_image(hr, "degrade_bi");
  if (scale < 1) throw InvalidArgument("degrade_bi: scale must be positive");
  if (hr.dim(1) % scale || hr.dim(2) % scale) {
    throw ShapeError("degrade_bi: size " + shape_str(hr.shape()) + " not divisible by " + std::to_string(scale));
  }
  Image lr = bicubic_resize(hr, hr.dim(1) / scale, hr.dim(2) / scale);
  std::int64_t n = 0;
  for (auto& v : lr.data()) {
    if (v < 0.0f || v > 1.0f) {
      v = std::clamp(v, 0.0f, 1.0f);
      ++n;
    }
  }
  if (clamped) *clamped = n;
  return lr;
}

Image degrade_bd(const Image& hr, int scale) {
  require_image(hr, "degrade_bd");
  if (scale < 1) throw InvalidArgument("degrade_bd: scale must be positive");
  const std::int64_t C = hr.dim(0), H = hr.dim(1), W = hr.dim(2);
  if (H % scale || W % scale) {
    throw ShapeError("degrade_bd: size " + shape_str(hr.shape()) + " not divisible by " + std::to_string(scale));
  }
  const auto k = gaussian_kernel(kBdSigma, kBdKernelSize);
  const int r = kBdKernelSize / 2;
  const std::int64_t h = H / scale, w = W / scale;
  Image out({C, h, w});
  std::vector<double> rows(static_cast<std::size_t>(H * w));
  for (std::int64_t c = 0; c < C; ++c) {
    const float* src = hr.ptr() + c * H * W;
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t ox = 0; ox < w; ++ox) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const std::int64_t x = std::clamp<std::int64_t>(ox * scale + i, 0, W - 1);
          acc += k[i + r] * src[y * W + x];
        }
        rows[y * w + ox] = acc;
      }
    for (std::int64_t oy = 0; oy < h; ++oy)
      for (std::int64_t ox = 0; ox < w; ++ox) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const std::int64_t y = std::clamp<std::int64_t>(oy * scale + i, 0, H - 1);
          acc += k[i + r] * rows[y * w + ox];
        }
        out(c, oy, ox) = static_cast<float>(acc);
      }
  }
  return out;
}

Sequence degrade_sequence(const Sequence& hr, const std::string& kind, int scale) {
  if (kind != "bi" && kind != "bd") throw InvalidArgument("unknown degradation '" + kind + "' (expected bi or bd)");
  Sequence lr;
  for (const auto& f : hr.frames) lr.frames.push_back(kind == "bi" ? degrade_bi(f, scale) : degrade_bd(f, scale));
  for (const auto& m : hr.motion) lr.motion.push_back({m[0] / scale, m[1] / scale});
  return lr;
}

Image bicubic_upscale(const Image& lr, int scale) {
  require_image(lr, "bicubic_upscale");
  Image up = bicubic_resize(lr, lr.dim(1) * scale, lr.dim(2) * scale);
  for (auto& v : up.data()) v = std::clamp(v, 0.0f, 1.0f);
  return up;
}

// ---------------------------------------------------------------- crops

Image crop(const Image& img, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  require_image(img, "crop");
  if (y < 0 || x < 0 || h < 1 || w < 1 || y + h > img.dim(1) || x + w > img.dim(2)) {
    throw ShapeError("crop: window exceeds frame " + shape_str(img.shape()));
  }
  const std::int64_t C = img.dim(0);
  Image out({C, h, w});
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t r = 0; r < h; ++r)
      std::copy_n(img.ptr() + (c * img.dim(1) + y + r) * img.dim(2) + x, w, out.ptr() + (c * h + r) * w);
  return out;
}

ClipPair crop_clip(const Sequence& hr, const Sequence& lr, int t0, int len, std::int64_t y, std::int64_t x,
                   int patch_lr, int scale) {
  if (hr.size() != lr.size()) throw ShapeError("crop: HR and LR sequences differ in length");
  if (t0 < 0 || len < 1 || static_cast<std::size_t>(t0 + len) > hr.size()) throw ShapeError("crop: clip exceeds sequence");
  if (hr.height() != lr.height() * scale || hr.width() != lr.width() * scale) {
    throw ShapeError("crop: LR size must be HR size / scale");
  }
  if (y < 0 || x < 0 || y + patch_lr > lr.height() || x + patch_lr > lr.width()) throw ShapeError("crop: patch exceeds frame");
  ClipPair p;
  p.y = y;
  p.x = x;
  for (int t = t0; t < t0 + len; ++t) {
    p.lr.push_back(crop(lr.frames[t], y, x, patch_lr, patch_lr));
    p.hr.push_back(crop(hr.frames[t], y * scale, x * scale, std::int64_t{patch_lr} * scale, std::int64_t{patch_lr} * scale));
  }
  return p;
}

ClipPair crop_patch_pairs(const Sequence& hr, const Sequence& lr, int len, int patch_lr, int scale, Rng& rng) {
  if (static_cast<std::int64_t>(lr.size()) < len) throw ShapeError("crop: sequence shorter than clip length");
  if (lr.height() < patch_lr || lr.width() < patch_lr) throw ShapeError("crop: patch exceeds frame");
  const auto t0 = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(lr.size()) - len + 1));
  const std::int64_t y = rng.uniform_int(lr.height() - patch_lr + 1);
  const std::int64_t x = rng.uniform_int(lr.width() - patch_lr + 1);
  return crop_clip(hr, lr, t0, len, y, x, patch_lr, scale);
}

// ---------------------------------------------------------------- PNG

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(static_cast<double>(c) * 255.0));
}

Image load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const std::int64_t H = image.height, W = image.width;
  Image img({3, H, W});
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = static_cast<float>(buf[(y * W + x) * 3 + c]) / 255.0f;
  return img;
}

void save_png(const std::filesystem::path& path, const Image& img) {
  if (img.rank() != 3 || (img.dim(0) != 3 && img.dim(0) != 1)) throw ShapeError("save_png: expects 3 x H x W or 1 x H x W");
  const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::vector<png_byte> buf(static_cast<std::size_t>(H * W * 3));
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) buf[(y * W + x) * 3 + c] = to_u8(img(C == 3 ? c : 0, y, x));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(W);
  image.height = static_cast<png_uint_32>(H);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

namespace {

std::int64_t frame_number(const std::string& stem) {
  auto end = stem.find_last_of("0123456789");
  if (end == std::string::npos) return -1;
  auto begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  const auto digits = stem.substr(begin, std::min<std::size_t>(end - begin + 1, 18));
  return std::stoll(digits);
}

}  // namespace

Sequence load_frames(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<std::int64_t, fs::path>> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.emplace_back(frame_number(e.path().stem().string()), e.path());
  }
  if (files.empty()) throw IoError("no frames (*.png) found in " + dir.string());
  std::sort(files.begin(), files.end());
  Sequence seq;
  for (const auto& [n, p] : files) {
    auto img = load_png(p);
    if (!seq.frames.empty() && img.shape() != seq.frames[0].shape()) {
      throw ShapeError("frame " + p.filename().string() + " is " + shape_str(img.shape()) + " but earlier frames are " +
                       shape_str(seq.frames[0].shape()));
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

std::vector<std::filesystem::path> save_frames(const Sequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  char name[32];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    out.push_back(dir / name);
    save_png(out.back(), seq.frames[i]);
  }
  return out;
}

void write_sequence_manifest(const std::filesystem::path& path, const Sequence& seq,
                             const std::vector<std::filesystem::path>& files) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& f : files) out << "frame " << f.filename().string() << '\n';
  for (std::size_t i = 0; i < seq.motion.size(); ++i) {
    out << "motion " << i << ' ' << seq.motion[i][0] << ' ' << seq.motion[i][1] << '\n';
  }
}

}  // namespace tcvsr
