#include <doctest.h>

#include <cmath>

#include "mfrisk/errors.hpp"
#include "mfrisk/quadrature.hpp"

using namespace mfrisk;

TEST_SUITE("quadrature") {

TEST_CASE("Gauss-Hermite rules integrate Gaussian polynomial moments") {
  for (int n : {8, 64, 128}) {
    const auto& rule = gauss_hermite(n);
    CHECK(rule.nodes.size() == n);
    CHECK(rule.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
    const double m = 0.3, sd = 0.7;
    CHECK(gaussian_expectation([](double y) { return y; }, m, sd, n) ==
          doctest::Approx(m).epsilon(1e-13));
    CHECK(gaussian_expectation([](double y) { return y * y; }, m, sd, n) ==
          doctest::Approx(m * m + sd * sd).epsilon(1e-13));
    CHECK(gaussian_expectation([](double y) { return y * y * y * y; }, m, sd, n) ==
          doctest::Approx(std::pow(m, 4) + 6 * m * m * sd * sd + 3 * std::pow(sd, 4)).epsilon(1e-12));
  }
}

TEST_CASE("rules are symmetric and cached") {
  const auto& a = gauss_hermite(64);
  const auto& b = gauss_hermite(64);
  CHECK(&a == &b);
  for (Eigen::Index i = 0; i < 32; ++i) CHECK(a.nodes[i] == -a.nodes[63 - i]);
}

TEST_CASE("adaptive Gauss-Kronrod") {
  const auto r = integrate_adaptive([](double x) { return std::sin(x); }, 0.0, M_PI);
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-12));
  const auto peak = integrate_adaptive([](double x) { return 1.0 / (1e-4 + x * x); }, -1.0, 1.0);
  CHECK(peak.value == doctest::Approx(2.0 / 1e-2 * std::atan(1.0 / 1e-2)).epsilon(1e-10));
  CHECK_THROWS_AS(integrate_adaptive([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0,
                                     1e-14, 0.0, 5),
                  NumericalError);
}

}
