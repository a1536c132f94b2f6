#include "hmtmf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hmtmf {

namespace {

double guarded(const std::function<double(const Vector&)>& f, const Vector& x) {
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

MinimizeResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                           const NelderMeadOptions& opts) {
  const Index d = x0.size();
  if (d == 0) throw Error(ErrorCode::invalid_argument, "nelder_mead needs at least one variable");
  std::vector<Vector> simplex(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> values(simplex.size());
  for (Index i = 0; i < d; ++i) simplex[static_cast<std::size_t>(i + 1)](i) += opts.initial_step;
  MinimizeResult out;
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = guarded(f, simplex[i]);
  out.evaluations = static_cast<int>(simplex.size());

  std::vector<std::size_t> order(simplex.size());
  while (out.evaluations < opts.max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double diameter = 0.0;
    for (const auto& v : simplex) diameter = std::max(diameter, (v - simplex[best]).norm());
    if (std::abs(values[worst] - values[best]) <= opts.f_tol * (std::abs(values[best]) + opts.f_tol) &&
        diameter <= opts.x_tol * (simplex[best].norm() + 1.0)) {
      out.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(d);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(d);

    const Vector xr = centroid + (centroid - simplex[worst]);
    const double fr = guarded(f, xr);
    ++out.evaluations;
    if (fr < values[best]) {
      const Vector xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = guarded(f, xe);
      ++out.evaluations;
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid)) : Vector(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = guarded(f, xc);
    ++out.evaluations;
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = guarded(f, simplex[i]);
      ++out.evaluations;
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(it - values.begin())];
  out.value = *it;
  return out;
}

MinimizeResult golden_section(const std::function<double(double)>& f, double a, double b, double tol, int max_iter) {
  if (!(a < b)) throw Error(ErrorCode::invalid_argument, "golden_section needs a < b");
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  MinimizeResult out;
  out.evaluations = 2;
  for (int it = 0; it < max_iter; ++it) {
    if (b - a <= tol * (std::abs(a) + std::abs(b) + tol)) {
      out.converged = true;
      break;
    }
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
    ++out.evaluations;
  }
  out.x = Vector::Constant(1, fc <= fd ? c : d);
  out.value = std::min(fc, fd);
  return out;
}

MinimizeResult log_grid_search(const std::function<double(double)>& f, double lo, double hi, int points, double tol) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) throw Error(ErrorCode::invalid_argument, "log_grid_search range");
  const double a = std::log(lo), b = std::log(hi);
  std::vector<double> grid(static_cast<std::size_t>(points)), vals(grid.size());
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] = a + (b - a) * i / (points - 1);
    vals[static_cast<std::size_t>(i)] = f(std::exp(grid[static_cast<std::size_t>(i)]));
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  const double left = grid[best == 0 ? 0 : best - 1];
  const double right = grid[std::min(best + 1, grid.size() - 1)];
  MinimizeResult out = golden_section([&](double t) { return f(std::exp(t)); }, left, right, tol);
  out.evaluations += points;
  if (vals[best] < out.value) {
    out.value = vals[best];
    out.x(0) = grid[best];
  }
  out.x(0) = std::exp(out.x(0));
  return out;
}

}  // namespace hmtmf
