#include "hmtmf/optim.hpp"

#include <doctest.h>

#include <cmath>

using namespace hmtmf;

TEST_CASE("simplex search finds the Rosenbrock minimum") {
  auto rosen = [](const Vector& x) { return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2); };
  const MinimizeResult r = nelder_mead(rosen, (Vector(2) << -1.2, 1.0).finished(), {0.5, 1e-14, 1e-10, 5000});
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.value < 1e-8);
}

TEST_CASE("simplex search on a shifted quadratic and its budget") {
  auto quad = [](const Vector& x) { return (x.array() - 3.0).square().sum(); };
  const MinimizeResult r = nelder_mead(quad, Vector::Zero(4));
  CHECK((r.x.array() - 3.0).abs().maxCoeff() < 1e-4);

  const MinimizeResult capped = nelder_mead(quad, Vector::Zero(4), {1.0, 1e-300, 1e-300, 30});
  CHECK_FALSE(capped.converged);
  CHECK(capped.evaluations <= 31);
  CHECK(capped.value <= quad(Vector::Zero(4)));
}

TEST_CASE("golden section") {
  const MinimizeResult r = golden_section([](double x) { return std::pow(x - 0.3, 2); }, -1.0, 2.0);
  CHECK(r.x(0) == doctest::Approx(0.3).epsilon(1e-6));
  const MinimizeResult edge = golden_section([](double x) { return x; }, 1.0, 2.0);
  CHECK(edge.x(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("log grid search") {
  // Minimum of the log-space parabola at s = 1e-3.
  auto f = [](double s) { return std::pow(std::log10(s) + 3.0, 2); };
  const MinimizeResult r = log_grid_search(f, 1e-8, 1e2);
  CHECK(std::log10(r.x(0)) == doctest::Approx(-3.0).epsilon(1e-5));
  const MinimizeResult low = log_grid_search([](double s) { return s; }, 1e-6, 1.0);
  CHECK(low.x(0) == doctest::Approx(1e-6).epsilon(1e-6));
}
