#pragma once

namespace fedfc::privacy {

// Nominal per-round budgets for the classical mechanisms; reported, not
// certified (no composition across rounds).
struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
  double sensitivity = 1.0;
  bool out_of_regime = false;  // Gaussian bound requires epsilon < 1
};

// Smallest epsilon of the Gaussian mechanism with noise std sigma_noise at
// the given delta: epsilon = sqrt(2 ln(5/(4 delta))) / sigma', with
// sigma' = sigma_noise / sensitivity.  Flagged when epsilon >= 1, where the
// closed form stops being valid.
PrivacyBudget gaussian_budget(double sigma_noise, double delta,
                              double sensitivity = 1.0);

// Laplace mechanism with scale b: epsilon = sensitivity / b, delta = 0.
PrivacyBudget laplace_budget(double scale_b, double sensitivity = 1.0);

}  // namespace fedfc::privacy
