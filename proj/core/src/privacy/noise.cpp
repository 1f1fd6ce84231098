#include "fedfc/privacy/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfc::privacy {

Mechanism parse_mechanism(const std::string& name) {
  if (name == "none") return Mechanism::None;
  if (name == "gaussian") return Mechanism::Gaussian;
  if (name == "laplace") return Mechanism::Laplace;
  throw std::invalid_argument("parse_mechanism: unknown mechanism '" + name + "'");
}

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::None: return "none";
    case Mechanism::Gaussian: return "gaussian";
    case Mechanism::Laplace: return "laplace";
  }
  throw std::logic_error("mechanism_name: bad enum");
}

Matrix perturb_tensor(const Matrix& tensor, const NoiseSpec& spec, Rng& rng) {
  if (spec.alpha < 0.0) throw std::invalid_argument("perturb_tensor: negative alpha");
  if (spec.mechanism == Mechanism::None || spec.alpha == 0.0 || tensor.size() == 0)
    return tensor;
  if (tensor.maxCoeff() == tensor.minCoeff()) return tensor;  // sigma = 0

  const double mean = tensor.mean();
  const double sigma =
      std::sqrt((tensor.array() - mean).square().sum() / static_cast<double>(tensor.size()));
  if (sigma == 0.0) return tensor;

  const double noise_std = spec.alpha * sigma;
  Matrix out(tensor.rows(), tensor.cols());
  if (spec.mechanism == Mechanism::Gaussian) {
    for (Index r = 0; r < out.rows(); ++r)
      for (Index c = 0; c < out.cols(); ++c)
        out(r, c) = tensor(r, c) + noise_std * rng.normal();
  } else {
    const double b = noise_std / std::sqrt(2.0);
    for (Index r = 0; r < out.rows(); ++r)
      for (Index c = 0; c < out.cols(); ++c)
        out(r, c) = tensor(r, c) + rng.laplace(b);
  }
  return out;
}

}  // namespace fedfc::privacy
