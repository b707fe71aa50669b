#include "tcvsr/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tcvsr/error.hpp"

namespace tcvsr {

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw InvalidArgument("uniform_int needs a positive bound");
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::int64_t>(v % un);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << seed_ << ' ' << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> seed_ >> engine_;
  if (!is) throw InvalidArgument("malformed generator state");
}

}  // namespace tcvsr
