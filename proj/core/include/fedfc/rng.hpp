#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fedfc {

// Every random draw in the library flows through this class so that a run is
// reproducible from its seed alone, independent of scheduling.  Named
// substreams (derive) let concurrent consumers draw without interfering.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream keyed by (seed, label).
  static Rng derive(std::uint64_t seed, std::string_view label);
  // Integer variant used to seed components that take a plain seed.
  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

  double uniform01();                          // [0, 1)
  double uniform_open();                       // (0, 1)
  double normal();                             // N(0, 1), Box-Muller
  double laplace(double scale_b);              // mean 0, scale b
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n), unbiased

  // Inverse CDF of the Laplace(0, b) distribution; u = 0.5 maps to 0 exactly.
  static double laplace_icdf(double u, double scale_b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedfc
