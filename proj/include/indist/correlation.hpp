#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "indist/propagator.hpp"

namespace indist {

// Two-time cavity correlation on a (t, tau) grid.
//   g1(i, j)                 = <a^dag(t_i + tau_j) a(t_i)>
//   population(i)            = <a^dag a>(t_i)
//   population_shifted(i, j) = <a^dag a>(t_i + tau_j)
struct CorrelationGrid {
  std::vector<double> t_grid;
  std::vector<double> tau_grid;
  CMatrix g1;
  Eigen::VectorXd population;
  Eigen::MatrixXd population_shifted;

  /// Largest |g1|^2 - P(t) P(t+tau) over the grid (<= 0 when Cauchy-Schwarz holds).
  double cauchy_schwarz_excess() const {
    return (g1.cwiseAbs2() - population.asDiagonal() * population_shifted).maxCoeff();
  }

  /// Grid restricted to the given row/column indices.
  CorrelationGrid subsample(std::span<const int> t_idx, std::span<const int> tau_idx) const {
    CorrelationGrid out;
    const auto nt = static_cast<Eigen::Index>(t_idx.size());
    const auto ntau = static_cast<Eigen::Index>(tau_idx.size());
    out.g1.resize(nt, ntau);
    out.population.resize(nt);
    out.population_shifted.resize(nt, ntau);
    for (Eigen::Index i = 0; i < nt; ++i) {
      out.t_grid.push_back(t_grid[t_idx[i]]);
      out.population(i) = population(t_idx[i]);
      for (Eigen::Index j = 0; j < ntau; ++j) {
        out.g1(i, j) = g1(t_idx[i], tau_idx[j]);
        out.population_shifted(i, j) = population_shifted(t_idx[i], tau_idx[j]);
      }
    }
    for (int j : tau_idx) out.tau_grid.push_back(tau_grid[j]);
    return out;
  }
};

namespace detail {

inline void require_grid(std::span<const double> grid, const char* name) {
  if (grid.empty() || grid.front() != 0.0)
    throw DomainError(std::string("correlation_qrt: ") + name + " must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw DomainError(std::string("correlation_qrt: ") + name + " must be strictly increasing");
}

}  // namespace detail

/// Quantum regression: G1(t, tau) = Tr[a^dag e^{L tau}(a rho(t))].
inline CorrelationGrid correlation_qrt(const Propagator& prop, const CMatrix& a,
                                       const CMatrix& rho0, std::span<const double> t_grid,
                                       std::span<const double> tau_grid) {
  detail::require_grid(t_grid, "t_grid");
  detail::require_grid(tau_grid, "tau_grid");
  const auto nt = static_cast<Eigen::Index>(t_grid.size());
  const auto ntau = static_cast<Eigen::Index>(tau_grid.size());
  const Eigen::Index n2 = prop.generator().rows();

  const CMatrix n_op = a.adjoint() * a;
  const Eigen::RowVectorXcd f_g1 = trace_functional(a.adjoint());
  const Eigen::RowVectorXcd f_pop = trace_functional(n_op);
  const CMatrix apply_a = left_multiplication(a);

  // Columns: vec rho(t_i) and vec(a rho(t_i)).
  CMatrix states(n2, nt);
  const CVector x0 = vectorize(rho0);
  for (Eigen::Index i = 0; i < nt; ++i) states.col(i) = prop.apply(t_grid[i], x0);
  const CMatrix lowered = apply_a * states;

  // Rows: functionals evolved backwards by tau_j.
  CMatrix f_tau(ntau, n2);
  CMatrix p_tau(ntau, n2);
  for (Eigen::Index j = 0; j < ntau; ++j) {
    f_tau.row(j) = prop.apply_left(f_g1, tau_grid[j]);
    p_tau.row(j) = prop.apply_left(f_pop, tau_grid[j]);
  }

  CorrelationGrid grid;
  grid.t_grid.assign(t_grid.begin(), t_grid.end());
  grid.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  grid.g1 = (f_tau * lowered).transpose();
  grid.population = (f_pop * states).real().transpose();
  grid.population_shifted = (p_tau * states).real().transpose();
  // The tau = 0 column is <a^dag a>(t) by identity; pin it to the real part.
  for (Eigen::Index i = 0; i < nt; ++i) grid.g1(i, 0) = cplx(grid.g1(i, 0).real(), 0.0);
  return grid;
}

inline CorrelationGrid correlation_qrt(const SystemSpec& sys, const Liouvillian& L,
                                       const CMatrix& rho0, std::span<const double> t_grid,
                                       std::span<const double> tau_grid) {
  return correlation_qrt(Propagator(L), sys.a, rho0, t_grid, tau_grid);
}

struct IndistinguishabilityResult {
  double value = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  // Relative mass of the double integrals estimated to lie beyond the grid.
  double truncation_error_estimate = 0.0;
  // |I(n) - I(n/2)| from the halving check; 0 when evaluated on one grid only.
  double refinement_delta = 0.0;
  double horizon = 0.0;
  int points = 0;
};

/// Trapezoid weights of a (possibly non-uniform) grid.
inline Eigen::VectorXd trapezoid_weights(std::span<const double> grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = grid[i + 1] - grid[i];
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

/// I = int int |G1(t,tau)|^2 / int int P(t) P(t+tau), trapezoid in both
/// directions on the grid's own samples.
inline IndistinguishabilityResult indistinguishability_from_correlation(
    const CorrelationGrid& grid) {
  const Eigen::VectorXd wt = trapezoid_weights(grid.t_grid);
  const Eigen::VectorXd wtau = trapezoid_weights(grid.tau_grid);
  IndistinguishabilityResult r;
  r.numerator = wt.dot(grid.g1.cwiseAbs2() * wtau);
  r.denominator = wt.dot(grid.population.asDiagonal() * grid.population_shifted * wtau);
  if (!(r.denominator > 1e-12) || !std::isfinite(r.numerator))
    throw NoEmission("indistinguishability: no cavity emission on the grid");
  r.value = r.numerator / r.denominator;
  r.horizon = grid.t_grid.back();
  r.points = static_cast<int>(grid.t_grid.size());

  // Tail beyond the last sample, assuming the final log-slope persists.
  const auto n = grid.population.size();
  if (n >= 2) {
    const double p1 = std::max(grid.population(n - 1), 0.0);
    const double p0 = std::max(grid.population(n - 2), 0.0);
    const double dt = grid.t_grid[n - 1] - grid.t_grid[n - 2];
    const double mass = wt.dot(grid.population.cwiseMax(0.0));
    if (p1 > 0.0 && p0 > p1 && mass > 0.0) {
      const double rate = std::log(p0 / p1) / dt;
      r.truncation_error_estimate = 2.0 * (p1 / rate) / mass;
    } else if (p1 > 0.0 && mass > 0.0) {
      r.truncation_error_estimate = 1.0;
    }
  }
  return r;
}

}  // namespace indist
