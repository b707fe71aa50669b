#include "tcvsr/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tcvsr {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'C', 'T', '1'};

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_integral_v<U>);
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (!in) throw IoError("truncated TCT1 header");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<U>(v);
}

template <typename F, typename Bits>
void write_values(std::ostream& out, std::span<const F> values) {
  std::vector<char> buf(values.size() * sizeof(F));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<Bits>(values[i]);
    for (std::size_t k = 0; k < sizeof(F); ++k) buf[i * sizeof(F) + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename F, typename Bits>
std::vector<F> read_values(std::istream& in, std::size_t n) {
  std::vector<unsigned char> buf(n * sizeof(F));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw IoError("truncated TCT1 payload");
  std::vector<F> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Bits bits = 0;
    for (std::size_t k = 0; k < sizeof(F); ++k) bits |= static_cast<Bits>(buf[i * sizeof(F) + k]) << (8 * k);
    out[i] = std::bit_cast<F>(bits);
  }
  return out;
}

}  // namespace

template <typename T>
void write_tct(std::ostream& out, const Tensor<T>& t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  out.put(static_cast<char>(precision_of<T>()));
  if constexpr (std::is_same_v<T, float>) {
    write_values<float, std::uint32_t>(out, t.data());
  } else {
    write_values<double, std::uint64_t>(out, t.data());
  }
  if (!out) throw IoError("failed writing TCT1 tensor");
}

template <typename T>
Tensor<T> read_tct(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("not a TCT1 tensor (bad magic)");
  const auto rank = get_le<std::uint32_t>(in);
  if (rank > 16) throw IoError("implausible TCT1 rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
  const int code = in.get();
  if (!in) throw IoError("truncated TCT1 header");
  const auto n = static_cast<std::size_t>(numel(shape));
  std::vector<T> data(n);
  if (code == 4) {
    auto v = read_values<float, std::uint32_t>(in, n);
    std::transform(v.begin(), v.end(), data.begin(), [](float x) { return static_cast<T>(x); });
  } else if (code == 8) {
    auto v = read_values<double, std::uint64_t>(in, n);
    std::transform(v.begin(), v.end(), data.begin(), [](double x) { return static_cast<T>(x); });
  } else {
    throw IoError("unknown TCT1 precision code " + std::to_string(code));
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void save_tct(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tct(out, t);
}

template <typename T>
Tensor<T> load_tct(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tct<T>(in);
}

Precision peek_tct_precision(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("not a TCT1 tensor (bad magic)");
  const auto rank = get_le<std::uint32_t>(in);
  in.seekg(static_cast<std::streamoff>(rank) * 8, std::ios::cur);
  const int code = in.get();
  if (code != 4 && code != 8) throw IoError("unknown TCT1 precision code");
  return static_cast<Precision>(code);
}

template void write_tct(std::ostream&, const Tensor<float>&);
template void write_tct(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tct<float>(std::istream&);
template Tensor<double> read_tct<double>(std::istream&);
template void save_tct(const std::filesystem::path&, const Tensor<float>&);
template void save_tct(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tct<float>(const std::filesystem::path&);
template Tensor<double> load_tct<double>(const std::filesystem::path&);

}  // namespace tcvsr
