#pragma once

#include <cmath>
#include <vector>

#include "indist/correlation.hpp"

namespace indist {

struct GridConfig {
  int points = 400;               // samples per axis on the first attempt
  int max_points = 3200;          // refinement stops here
  double tail_fraction = 1e-6;    // excited population left at the horizon
  double refinement_tol = 1e-3;   // |I(n) - I(n/2)| acceptance
  double stretch = 25.0;          // T / (n-1) divided by the first step
  double max_horizon = 1e5;       // in units of 1/gamma
  PropagationMethod method = PropagationMethod::Auto;
};

/// Geometric grid on [0, T]: the first step is T / ((n-1) * stretch) and each
/// following step grows by a constant ratio.
inline std::vector<double> stretched_grid(double horizon, int n, double stretch) {
  if (n < 3) throw DomainError("stretched_grid: need at least 3 points");
  if (!(horizon > 0.0)) throw DomainError("stretched_grid: horizon must be > 0");
  const int steps = n - 1;
  std::vector<double> grid(n, 0.0);
  if (stretch <= 1.0) {
    for (int i = 0; i < n; ++i) grid[i] = horizon * i / steps;
    return grid;
  }
  const double h0 = horizon / (steps * stretch);
  // Solve h0 (r^steps - 1) / (r - 1) = T for r > 1.
  auto total = [&](double r) { return h0 * std::expm1(steps * std::log(r)) / (r - 1.0); };
  double lo = 1.0 + 1e-12;
  double hi = 2.0;
  while (total(hi) < horizon) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < horizon ? lo : hi) = mid;
  }
  const double r = 0.5 * (lo + hi);
  double h = h0;
  for (int i = 1; i < n; ++i) {
    grid[i] = grid[i - 1] + h;
    h *= r;
  }
  grid.back() = horizon;
  return grid;
}

/// Time (bisected to 1e-9 relative) at which the total excitation number left in the
/// system drops below `tail_fraction`.
inline double emission_horizon(const Propagator& prop, const SystemSpec& sys,
                               const CMatrix& rho0, double tail_fraction, double max_horizon) {
  CMatrix number = sys.a.adjoint() * sys.a;
  for (const auto& s : sys.sigma) number += s.adjoint() * s;
  const Eigen::RowVectorXcd f = trace_functional(number);
  const CVector x0 = vectorize(rho0);
  auto excited = [&](double t) { return (f * prop.apply(t, x0))(0).real(); };

  double hi = 1.0;
  while (excited(hi) >= tail_fraction) {
    hi *= 2.0;
    if (hi > max_horizon)
      throw NumericalError("emission_horizon: excitation does not decay below " +
                           std::to_string(tail_fraction) + " within t = " +
                           std::to_string(max_horizon));
  }
  double lo = hi / 2.0;
  if (excited(lo) < tail_fraction) return hi;  // decays within t <= 1
  while ((hi - lo) > 1e-9 * hi) {
    const double mid = 0.5 * (lo + hi);
    (excited(mid) < tail_fraction ? hi : lo) = mid;
  }
  return hi;
}

namespace detail {

inline std::vector<int> every_other(int n) {
  std::vector<int> idx;
  for (int i = 0; i < n; i += 2) idx.push_back(i);
  if (idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

}  // namespace detail

/// Photon indistinguishability of the cavity emission following the
/// relaxation of `initial`: horizon from the excitation tail, QRT correlation
/// on a stretched grid, and a halving check on the quadrature.
inline IndistinguishabilityResult simulate_indistinguishability(
    const SystemSpec& sys, const InitialState& initial = InitialState::symmetric(),
    const GridConfig& cfg = {}) {
  const Liouvillian L = build_liouvillian(sys);
  const Propagator prop(L, cfg.method);
  const CMatrix rho0 = initial_density(sys, initial);
  const double horizon =
      emission_horizon(prop, sys, rho0, cfg.tail_fraction, cfg.max_horizon);

  double last_delta = 0.0;
  for (int n = cfg.points; n <= cfg.max_points; n *= 2) {
    const std::vector<double> grid = stretched_grid(horizon, n, cfg.stretch);
    const CorrelationGrid corr = correlation_qrt(prop, sys.a, rho0, grid, grid);
    IndistinguishabilityResult full = indistinguishability_from_correlation(corr);
    const std::vector<int> half = detail::every_other(n);
    const IndistinguishabilityResult coarse =
        indistinguishability_from_correlation(corr.subsample(half, half));
    full.refinement_delta = std::abs(full.value - coarse.value);
    last_delta = full.refinement_delta;
    if (full.refinement_delta <= cfg.refinement_tol) return full;
  }
  throw NumericalError("simulate_indistinguishability: quadrature did not converge (last delta " +
                       std::to_string(last_delta) + ")");
}

}  // namespace indist
