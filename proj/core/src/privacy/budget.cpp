#include "fedfc/privacy/budget.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfc::privacy {

PrivacyBudget gaussian_budget(double sigma_noise, double delta, double sensitivity) {
  if (sigma_noise <= 0.0) throw std::invalid_argument("gaussian_budget: sigma must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gaussian_budget: delta must lie in (0, 1)");
  if (sensitivity <= 0.0)
    throw std::invalid_argument("gaussian_budget: sensitivity must be positive");

  PrivacyBudget b;
  b.delta = delta;
  b.sensitivity = sensitivity;
  const double sigma_norm = sigma_noise / sensitivity;
  b.epsilon = std::sqrt(2.0 * std::log(5.0 / (4.0 * delta))) / sigma_norm;
  b.out_of_regime = b.epsilon >= 1.0;
  return b;
}

PrivacyBudget laplace_budget(double scale_b, double sensitivity) {
  if (scale_b <= 0.0) throw std::invalid_argument("laplace_budget: scale must be positive");
  if (sensitivity <= 0.0)
    throw std::invalid_argument("laplace_budget: sensitivity must be positive");

  PrivacyBudget b;
  b.epsilon = sensitivity / scale_b;
  b.delta = 0.0;
  b.sensitivity = sensitivity;
  b.out_of_regime = false;
  return b;
}

}  // namespace fedfc::privacy
