#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedfc/privacy/budget.hpp"
#include "fedfc/privacy/noise.hpp"
#include "support/oracles.hpp"

using namespace fedfc;
using namespace fedfc::privacy;

namespace {

double population_std(const Matrix& m) {
  const double mean = m.mean();
  return std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.size()));
}

// smallest eps with (5/4) exp(-(sigma' eps)^2 / 2) <= delta, by bisection
double gaussian_eps_oracle(double sigma_norm, double delta) {
  auto excess = [&](double eps) {
    return 1.25 * std::exp(-0.5 * sigma_norm * eps * sigma_norm * eps) - delta;
  };
  double lo = 0.0, hi = 1e4;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("identity cases leave the tensor and the rng untouched") {
  Rng rng(3);
  Matrix t = oracles::random_matrix(20, 10, rng);

  NoiseSpec off;
  off.mechanism = Mechanism::None;
  off.alpha = 0.5;
  Rng r1(7);
  CHECK((perturb_tensor(t, off, r1) - t).cwiseAbs().maxCoeff() == 0.0);

  NoiseSpec zero_alpha;
  zero_alpha.mechanism = Mechanism::Gaussian;
  zero_alpha.alpha = 0.0;
  Rng r2(7);
  CHECK((perturb_tensor(t, zero_alpha, r2) - t).cwiseAbs().maxCoeff() == 0.0);

  // rng stream untouched by the identity paths
  Rng probe1(7), probe2(7);
  CHECK(r1.uniform01() == probe1.uniform01());
  CHECK(r2.uniform01() == probe2.uniform01());

  NoiseSpec gauss;
  gauss.mechanism = Mechanism::Gaussian;
  gauss.alpha = 0.1;
  Matrix constant = Matrix::Constant(8, 8, 3.25);
  Rng r3(9);
  CHECK((perturb_tensor(constant, gauss, r3) - constant).cwiseAbs().maxCoeff() == 0.0);

  NoiseSpec lap;
  lap.mechanism = Mechanism::Laplace;
  lap.alpha = 0.1;
  Rng r4(9);
  CHECK((perturb_tensor(constant, lap, r4) - constant).cwiseAbs().maxCoeff() == 0.0);

  NoiseSpec bad;
  bad.mechanism = Mechanism::Gaussian;
  bad.alpha = -0.1;
  CHECK_THROWS_AS(perturb_tensor(t, bad, r3), std::invalid_argument);
}

TEST_CASE("noise magnitude tracks alpha times the tensor std") {
  Rng source(41);
  Matrix t = oracles::random_matrix(500, 400, source, 2.0);  // 200k entries
  const double sigma = population_std(t);

  for (Mechanism mech : {Mechanism::Gaussian, Mechanism::Laplace}) {
    for (double alpha : {0.01, 0.1}) {
      NoiseSpec spec;
      spec.mechanism = mech;
      spec.alpha = alpha;
      Rng rng(1234);
      Matrix noised = perturb_tensor(t, spec, rng);
      const double measured = population_std(noised - t);
      CHECK(std::abs(measured - alpha * sigma) < 0.02 * alpha * sigma);
      CHECK(std::abs((noised - t).mean()) < 3.0 * alpha * sigma / std::sqrt(200000.0));
    }
  }
}

TEST_CASE("perturbation is deterministic in the rng state") {
  Rng source(6);
  Matrix t = oracles::random_matrix(30, 30, source);
  NoiseSpec spec;
  spec.mechanism = Mechanism::Laplace;
  spec.alpha = 0.05;
  Rng r1(77), r2(77);
  Matrix a = perturb_tensor(t, spec, r1);
  Matrix b = perturb_tensor(t, spec, r2);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  Matrix c = perturb_tensor(t, spec, r1);  // advanced state, new draw
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mechanism names round trip") {
  for (Mechanism m : {Mechanism::None, Mechanism::Gaussian, Mechanism::Laplace})
    CHECK(parse_mechanism(mechanism_name(m)) == m);
  CHECK_THROWS_AS(parse_mechanism("fourier"), std::invalid_argument);
}

TEST_CASE("gaussian budget matches a root-finding oracle") {
  for (double sigma_norm : {0.5, 2.0, 10.0}) {
    for (double delta : {1e-5, 1e-2}) {
      PrivacyBudget b = gaussian_budget(sigma_norm, delta);
      const double oracle = gaussian_eps_oracle(sigma_norm, delta);
      CHECK(b.epsilon == doctest::Approx(oracle).epsilon(1e-10));
      CHECK(b.delta == delta);
    }
  }
}

TEST_CASE("gaussian budget frozen value and regime flag") {
  PrivacyBudget b = gaussian_budget(2.0, 0.8);
  CHECK(b.epsilon == doctest::Approx(0.47238072707743884).epsilon(1e-12));
  CHECK_FALSE(b.out_of_regime);

  // noise std exactly at the eps = 1 boundary
  const double boundary = std::sqrt(2.0 * std::log(5.0 / (4.0 * 1e-5)));
  PrivacyBudget at = gaussian_budget(boundary, 1e-5);
  CHECK(at.epsilon == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(at.out_of_regime);
  PrivacyBudget above = gaussian_budget(boundary * 1.01, 1e-5);
  CHECK_FALSE(above.out_of_regime);
  PrivacyBudget below = gaussian_budget(boundary * 0.5, 1e-5);
  CHECK(below.out_of_regime);
}

TEST_CASE("gaussian budget scales inversely with noise") {
  PrivacyBudget one = gaussian_budget(1.5, 1e-4);
  PrivacyBudget two = gaussian_budget(3.0, 1e-4);
  CHECK(two.epsilon == doctest::Approx(one.epsilon / 2.0).epsilon(1e-14));

  // sensitivity rescales sigma'
  PrivacyBudget sens = gaussian_budget(1.5, 1e-4, 3.0);
  CHECK(sens.epsilon == doctest::Approx(one.epsilon * 3.0).epsilon(1e-14));
}

TEST_CASE("gaussian budget validates inputs") {
  CHECK_THROWS_AS(gaussian_budget(0.0, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_budget(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_budget(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_budget(1.0, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_budget(1.0, 1e-5, 0.0), std::invalid_argument);
}

TEST_CASE("laplace budget is sensitivity over scale") {
  PrivacyBudget b = laplace_budget(0.1, 1.0);
  CHECK(b.epsilon == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(b.delta == 0.0);
  CHECK_FALSE(b.out_of_regime);

  for (double eps : {0.5, 2.0, 20.0}) {
    PrivacyBudget round = laplace_budget(1.0 / eps);
    CHECK(round.epsilon == doctest::Approx(eps).epsilon(1e-12));
  }
  CHECK_THROWS_AS(laplace_budget(0.0), std::invalid_argument);
  CHECK_THROWS_AS(laplace_budget(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("equal alpha gives equal noise std across mechanisms") {
  Rng source(88);
  Matrix t = oracles::random_matrix(400, 250, source);
  NoiseSpec g{Mechanism::Gaussian, 0.1, 0};
  NoiseSpec l{Mechanism::Laplace, 0.1, 0};
  Rng r1(5), r2(5);
  const double sg = population_std(perturb_tensor(t, g, r1) - t);
  const double sl = population_std(perturb_tensor(t, l, r2) - t);
  CHECK(std::abs(sg - sl) < 0.03 * sg);
}
