#pragma once

#include "hmtmf/types.hpp"

#include <functional>

namespace hmtmf {

struct NelderMeadOptions {
  double initial_step = 1.0;
  double f_tol = 1e-10;  // spread of simplex values
  double x_tol = 1e-8;   // simplex diameter
  int max_evals = 2000;
};

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization (standard reflection, expansion,
/// contraction and shrink coefficients 1, 2, 1/2, 1/2).
MinimizeResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                           const NelderMeadOptions& opts = {});

/// Minimizes a unimodal function on [a, b].
MinimizeResult golden_section(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                              int max_iter = 200);

/// Evaluates f on `points` log-spaced values in [lo, hi] and refines the best
/// bracket by golden section in log space.
MinimizeResult log_grid_search(const std::function<double(double)>& f, double lo, double hi, int points = 20,
                               double tol = 1e-8);

}  // namespace hmtmf
