#pragma once

#include <cstdint>
#include <string>

#include "fedfc/rng.hpp"
#include "fedfc/types.hpp"

namespace fedfc::privacy {

enum class Mechanism { None, Gaussian, Laplace };

struct NoiseSpec {
  Mechanism mechanism = Mechanism::None;
  double alpha = 0.0;       // noise std as a fraction of the tensor's std
  std::uint64_t seed = 0;   // root of the per-tensor substreams
};

Mechanism parse_mechanism(const std::string& name);
std::string mechanism_name(Mechanism m);

// Adds elementwise noise scaled to the tensor itself: sigma is the population
// std of the entries, Gaussian noise has std alpha*sigma, Laplace noise scale
// alpha*sigma/sqrt(2) (equal std).  Identity when the mechanism is None,
// alpha is 0 or the tensor is constant; the rng is left untouched then.
Matrix perturb_tensor(const Matrix& tensor, const NoiseSpec& spec, Rng& rng);

}  // namespace fedfc::privacy
