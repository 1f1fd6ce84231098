#include "fedfc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedfc {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

Rng Rng::derive(std::uint64_t seed, std::string_view label) {
  Rng r(0);
  const std::uint64_t h = fnv1a(label);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  r.engine_.seed(seq);
  return r;
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::string_view label) {
  return derive(seed, label).engine_();
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::laplace_icdf(double u, double scale_b) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("laplace_icdf: u must lie in (0, 1)");
  if (scale_b < 0.0) throw std::invalid_argument("laplace_icdf: negative scale");
  const double d = u - 0.5;
  if (d == 0.0) return 0.0;
  const double mag = -scale_b * std::log1p(-2.0 * std::abs(d));
  return d > 0.0 ? mag : -mag;
}

double Rng::laplace(double scale_b) {
  return laplace_icdf(uniform_open(), scale_b);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t limit = ~0ull - ~0ull % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace fedfc
