#pragma once

#include <vector>

namespace fedfc::stats {

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p = 1.0;  // two-sided
};

// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom.  Identical constant samples give t = 0, p = 1 by convention;
// distinct constant samples give p = 0.
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided tail probability of Student's t distribution, evaluated through
// the regularized incomplete beta function.
double student_t_two_sided_p(double t, double dof);

// Continued-fraction evaluation (Lentz) of I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace fedfc::stats
