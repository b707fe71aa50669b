#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "tcvsr/data.hpp"

using namespace tcvsr;
namespace fs = std::filesystem;

namespace {

Image random_image(std::int64_t c, std::int64_t h, std::int64_t w, Rng& rng) {
  Image img({c, h, w});
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tcvsr_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Direct two-dimensional evaluation of the imresize convention: every
// source pixel within reach of the widened kernel contributes the product
// of the two 1D weights, indices mirrored at the border, then the sum is
// normalised.
double direct_resize(const Image& img, std::int64_t c, std::int64_t oy, std::int64_t ox, std::int64_t out_h,
                     std::int64_t out_w) {
  const std::int64_t H = img.dim(1), W = img.dim(2);
  const double sy = static_cast<double>(out_h) / H, sx = static_cast<double>(out_w) / W;
  auto weight = [](double d, double s) {
    const double k = s < 1 ? s : 1.0;
    const double t = std::abs(d * k);
    double v = 0;
    if (t <= 1) v = 1.5 * t * t * t - 2.5 * t * t + 1;
    else if (t < 2) v = -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
    return k * v;
  };
  auto mirror = [](std::int64_t k, std::int64_t n) {
    while (k < 0 || k >= n) k = k < 0 ? -k - 1 : 2 * n - 1 - k;
    return k;
  };
  const double uy = (oy + 1) / sy + 0.5 * (1 - 1 / sy);
  const double ux = (ox + 1) / sx + 0.5 * (1 - 1 / sx);
  double num = 0, den = 0;
  for (std::int64_t py = static_cast<std::int64_t>(uy) - 12; py <= static_cast<std::int64_t>(uy) + 12; ++py)
    for (std::int64_t px = static_cast<std::int64_t>(ux) - 12; px <= static_cast<std::int64_t>(ux) + 12; ++px) {
      const double w = weight(uy - py, sy) * weight(ux - px, sx);
      if (w == 0) continue;
      num += w * img(c, mirror(py - 1, H), mirror(px - 1, W));
      den += w;
    }
  return num / den;
}

}  // namespace

TEST_CASE("cubic kernel values") {
  CHECK(cubic_kernel(0) == 1.0);
  CHECK(cubic_kernel(1) == 0.0);
  CHECK(cubic_kernel(2) == 0.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625));
  CHECK(cubic_kernel(-1.5) == cubic_kernel(1.5));
}

TEST_CASE("bicubic resize matches a direct two-dimensional evaluation") {
  Rng rng(1);
  const auto img = random_image(2, 16, 16, rng);
  for (auto [oh, ow] : {std::pair<std::int64_t, std::int64_t>{4, 4}, {8, 5}, {16, 16}, {32, 24}, {7, 13}}) {
    const auto out = bicubic_resize(img, oh, ow);
    REQUIRE(out.shape() == Shape{2, oh, ow});
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) CHECK(std::abs(out(c, y, x) - direct_resize(img, c, y, x, oh, ow)) < 1e-6);
  }
}

TEST_CASE("bicubic resize identity, constants and shape law") {
  Rng rng(2);
  const auto img = random_image(3, 12, 10, rng);
  const auto same = bicubic_resize(img, 12, 10);
  for (std::int64_t i = 0; i < img.size(); ++i) CHECK(std::abs(same[i] - img[i]) < 1e-6);
  const Image flat({3, 20, 20}, 0.37f);
  for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{5, 5}, {40, 33}, {7, 60}}) {
    const auto out = bicubic_resize(flat, h, w);
    for (float v : out.data()) CHECK(std::abs(v - 0.37f) < 1e-6);
  }
  CHECK(bicubic_resize(Image({3, 256, 256}), 64, 64).shape() == Shape{3, 64, 64});
  CHECK_THROWS_AS(bicubic_resize(img, 0, 4), InvalidArgument);
}

TEST_CASE("gaussian kernel sums to one and bd keeps constants") {
  const auto k = gaussian_kernel(kBdSigma, kBdKernelSize);
  REQUIRE(k.size() == 13);
  double s = 0;
  for (double v : k) s += v;
  CHECK(std::abs(s - 1) < 1e-9);
  const Image flat({3, 32, 32}, 0.6f);
  const auto lr = degrade_bd(flat);
  CHECK(lr.shape() == Shape{3, 8, 8});
  for (float v : lr.data()) CHECK(std::abs(v - 0.6f) < 1e-6);
  CHECK_THROWS_AS(degrade_bd(Image({3, 30, 32})), ShapeError);
}

TEST_CASE("bd of an impulse peaks at the normalised gaussian centre") {
  Image img({1, 32, 32});
  img(0, 16, 16) = 1.0f;
  const auto lr = degrade_bd(img);
  double z = 0;
  for (int i = -6; i <= 6; ++i) z += std::exp(-i * i / (2 * 1.6 * 1.6));
  CHECK(std::abs(lr(0, 4, 4) - 1.0 / (z * z)) < 1e-7);
}

TEST_CASE("degradations are shift covariant for multiples of the scale") {
  Rng rng(3);
  const auto seq = synth_sequence(Pattern::GradientNoise, {4.0, 0.0}, 2, 64, 64, 5);
  const auto seqy = synth_sequence(Pattern::TextLike, {0.0, -8.0}, 2, 64, 64, 6);
  for (const char* kind : {"bi", "bd"}) {
    const auto a = kind[1] == 'i' ? degrade_bi(seq.frames[0], 4) : degrade_bd(seq.frames[0]);
    const auto b = kind[1] == 'i' ? degrade_bi(seq.frames[1], 4) : degrade_bd(seq.frames[1]);
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 3; y < 13; ++y)
        for (std::int64_t x = 4; x < 13; ++x) CHECK(std::abs(b(c, y, x) - a(c, y, x - 1)) < 1e-5);
    const auto ay = kind[1] == 'i' ? degrade_bi(seqy.frames[0], 4) : degrade_bd(seqy.frames[0]);
    const auto by = kind[1] == 'i' ? degrade_bi(seqy.frames[1], 4) : degrade_bd(seqy.frames[1]);
    for (std::int64_t y = 3; y < 11; ++y)
      for (std::int64_t x = 3; x < 13; ++x) CHECK(std::abs(by(0, y, x) - ay(0, y + 2, x)) < 1e-5);
  }
}

TEST_CASE("bi degradation stays in range and counts clamps") {
  Rng rng(4);
  Image img({3, 32, 32});
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = (i / 3) % 2 ? 1.0f : 0.0f;  // harsh edges ring
  std::int64_t clamped = -1;
  const auto lr = degrade_bi(img, 4, &clamped);
  CHECK(clamped >= 0);
  for (float v : lr.data()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(degrade_bi(Image({3, 30, 32}), 4), ShapeError);
}

TEST_CASE("synthetic sequences: static, integer shifts and determinism") {
  for (Pattern p : {Pattern::Checkerboard, Pattern::GradientNoise, Pattern::TextLike}) {
    const auto s = synth_sequence(p, {0.0, 0.0}, 3, 40, 48, 9);
    CHECK(s.frames[1] == s.frames[0]);
    CHECK(s.frames[2] == s.frames[0]);
    const auto m = synth_sequence(p, {3.0, 0.0}, 3, 40, 48, 9);
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < 40; ++y)
        for (std::int64_t x = 3; x < 48; ++x) CHECK(m.frames[1](c, y, x) == m.frames[0](c, y, x - 3));
    CHECK(synth_sequence(p, {1.5, -0.5}, 4, 24, 24, 3).frames[3] == synth_sequence(p, {1.5, -0.5}, 4, 24, 24, 3).frames[3]);
    for (float v : synth_sequence(p, {0.3, 0.7}, 2, 24, 24, 3).frames[1].data()) CHECK((v >= 0.0f && v <= 1.0f));
    REQUIRE(m.motion.size() == 2);
    CHECK(m.motion[0][0] == 3.0);
  }
  CHECK_FALSE(synth_sequence(Pattern::Checkerboard, {0.0, 0.0}, 1, 32, 32, 1).frames[0] ==
              synth_sequence(Pattern::Checkerboard, {0.0, 0.0}, 1, 32, 32, 2).frames[0]);
  CHECK_THROWS(synth_sequence(Pattern::Checkerboard, {0.0, 0.0}, 0, 32, 32, 1));
  CHECK_THROWS(parse_pattern("stripes"));
}

TEST_CASE("crops stay aligned between LR and HR") {
  const auto hr = synth_sequence(Pattern::GradientNoise, {4.0, 4.0}, 6, 64, 64, 1);
  const auto lr = degrade_sequence(hr, "bi", 4);
  CHECK(lr.motion[0][0] == 1.0);
  const auto c = crop_clip(hr, lr, 1, 3, 0, 0, 8, 4);
  REQUIRE(c.lr.size() == 3);
  CHECK(c.lr[0].shape() == Shape{3, 8, 8});
  CHECK(c.hr[0].shape() == Shape{3, 32, 32});
  CHECK(c.hr[0](0, 0, 0) == hr.frames[1](0, 0, 0));
  CHECK(c.lr[2](1, 0, 0) == lr.frames[3](1, 0, 0));
  const auto d = crop_clip(hr, lr, 0, 2, 3, 5, 8, 4);
  CHECK(d.hr[1](2, 0, 0) == hr.frames[1](2, 12, 20));
  CHECK(d.lr[1](2, 0, 0) == lr.frames[1](2, 3, 5));
  CHECK_THROWS_AS(crop_clip(hr, lr, 0, 2, 10, 0, 8, 4), ShapeError);

  Rng a(5), b(5);
  const auto x = crop_patch_pairs(hr, lr, 4, 8, 4, a);
  const auto y = crop_patch_pairs(hr, lr, 4, 8, 4, b);
  CHECK(x.y == y.y);
  CHECK(x.x == y.x);
  CHECK(x.hr[3] == y.hr[3]);
}

TEST_CASE("png frames round trip losslessly") {
  Rng rng(6);
  const auto dir = scratch("png");
  Sequence s;
  for (int t = 0; t < 3; ++t) {
    Image img({3, 9, 7});
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
    s.frames.push_back(img);
  }
  const auto files = save_frames(s, dir);
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "frame_00000.png");
  const auto back = load_frames(dir);
  REQUIRE(back.size() == 3);
  for (int t = 0; t < 3; ++t)
    for (std::int64_t i = 0; i < s.frames[t].size(); ++i) CHECK(to_u8(back.frames[t][i]) == to_u8(s.frames[t][i]));
  // A second save of the loaded frames reproduces the files byte for byte.
  const auto dir2 = scratch("png2");
  save_frames(back, dir2);
  for (int t = 0; t < 3; ++t) {
    std::ifstream a(files[t], std::ios::binary), b(dir2 / files[t].filename(), std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("frame loading orders numerically and reports bad directories") {
  const auto dir = scratch("order");
  for (int i : {10, 2, 1}) {
    Image img({3, 4, 4}, static_cast<float>(i) / 255.0f);
    save_png(dir / ("f" + std::to_string(i) + ".png"), img);
  }
  const auto s = load_frames(dir);
  REQUIRE(s.size() == 3);
  CHECK(to_u8(s.frames[0][0]) == 1);
  CHECK(to_u8(s.frames[1][0]) == 2);
  CHECK(to_u8(s.frames[2][0]) == 10);

  save_png(dir / "f11.png", Image({3, 5, 4}));
  CHECK_THROWS_AS(load_frames(dir), ShapeError);
  const auto empty = scratch("empty");
  CHECK_THROWS_WITH_AS(load_frames(empty), doctest::Contains("no frames"), IoError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("8-bit conversion rounds and clamps") {
  CHECK(to_u8(-0.2f) == 0);
  CHECK(to_u8(1.7f) == 255);
  CHECK(to_u8(0.5f) == 128);
  CHECK(to_u8(1.0f / 255.0f) == 1);
}

TEST_CASE("sequence manifest lists frames and motion") {
  const auto dir = scratch("manifest");
  const auto s = synth_sequence(Pattern::Checkerboard, {2.0, -1.0}, 3, 16, 16, 1);
  const auto files = save_frames(s, dir);
  write_sequence_manifest(dir / "manifest.txt", s, files);
  std::ifstream in(dir / "manifest.txt");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("frame_00002.png") != std::string::npos);
  CHECK(text.find("motion 1 2 -1") != std::string::npos);
  fs::remove_all(dir);
}
