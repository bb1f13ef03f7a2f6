#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "indist/errors.hpp"

namespace indist {

// Planar position in units of the emission wavelength.
struct Position {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// One two-level emitter. Rates are in units of the reference decay rate
// (gamma = 1 by convention), positions in units of lambda.
struct EmitterSpec {
  Position position;
  double gamma = 1.0;
  double gamma_star = 0.0;
  double detuning = 0.0;

  void validate() const {
    if (!(gamma > 0.0)) throw DomainError("emitter gamma must be > 0");
    if (!(gamma_star >= 0.0)) throw DomainError("emitter gamma_star must be >= 0");
    if (!std::isfinite(position.x) || !std::isfinite(position.y))
      throw DomainError("emitter position must be finite");
    if (!std::isfinite(detuning)) throw DomainError("emitter detuning must be finite");
  }
};

// kd for a distance given in units of lambda.
inline double kd_from_distance(double d_over_lambda) {
  return 2.0 * std::numbers::pi * d_over_lambda;
}

/// Near-field dipole-dipole shift 3 gamma / (4 (kd)^3).
inline double near_field_coupling(double kd, double gamma = 1.0) {
  if (!(kd > 0.0)) throw DomainError("near_field_coupling: kd must be > 0");
  return 3.0 * gamma / (4.0 * kd * kd * kd);
}

struct PairRates {
  double gamma_ij = 0.0;  // collective (cross) decay
  double omega_ij = 0.0;  // coherent exchange
};

/// Collective decay and exchange rates of two co-polarised dipoles oriented
/// perpendicular to their separation axis:
///
///   gamma_ij = (3 gamma / 2) [ sin x / x + cos x / x^2 - sin x / x^3 ]
///   Omega_ij = (3 gamma / 4) [ -cos x / x + sin x / x^2 + cos x / x^3 ]
///
/// with x = kd. For small x the bracketed sums lose digits to cancellation,
/// so the Taylor series is used below x = 1e-2.
inline PairRates lehmberg_rates(double kd, double gamma = 1.0) {
  if (!(kd > 0.0)) throw DomainError("lehmberg_rates: kd must be > 0");
  const double x = kd;
  PairRates r;
  if (x < 1e-2) {
    const double x2 = x * x;
    // 1 - x^2/5 + 3x^4/280
    r.gamma_ij = gamma * (1.0 - x2 / 5.0 + 3.0 * x2 * x2 / 280.0);
    // bracket = 1/x^3 - 1/(2x) + 3x/8 - 5x^3/144 + O(x^5)
    r.omega_ij = 0.75 * gamma * (1.0 / (x2 * x) - 1.0 / (2.0 * x) + 3.0 * x / 8.0 - 5.0 * x2 * x / 144.0);
    return r;
  }
  const double s = std::sin(x);
  const double c = std::cos(x);
  const double x2 = x * x;
  const double x3 = x2 * x;
  r.gamma_ij = 1.5 * gamma * (s / x + c / x2 - s / x3);
  r.omega_ij = 0.75 * gamma * (-c / x + s / x2 + c / x3);
  return r;
}

// Pairwise couplings of an emitter ensemble. Diagonal of gamma_cross holds each
// emitter's own decay rate; diagonal of omega is zero.
struct CouplingMatrix {
  int n = 0;
  Eigen::MatrixXd d;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd gamma_cross;
};

/// Assemble all C(n,2) pairs. `k` is the wavenumber in units of 1/lambda
/// (2 pi for distances measured in lambda).
inline CouplingMatrix coupling_matrix(std::span<const EmitterSpec> emitters,
                                      double k = 2.0 * std::numbers::pi) {
  const int n = static_cast<int>(emitters.size());
  if (n < 2) throw DomainError("coupling_matrix: need at least 2 emitters");
  if (!(k > 0.0)) throw DomainError("coupling_matrix: k must be > 0");
  for (const auto& e : emitters) e.validate();

  CouplingMatrix cm;
  cm.n = n;
  cm.d = Eigen::MatrixXd::Zero(n, n);
  cm.omega = Eigen::MatrixXd::Zero(n, n);
  cm.gamma_cross = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) cm.gamma_cross(i, i) = emitters[i].gamma;

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dij = distance(emitters[i].position, emitters[j].position);
      if (!(dij > 0.0))
        throw DegenerateGeometry("coupling_matrix: emitters " + std::to_string(i) + " and " +
                                 std::to_string(j) + " coincide");
      // Emitters of unequal gamma couple with the geometric mean.
      const double g = std::sqrt(emitters[i].gamma * emitters[j].gamma);
      const PairRates r = lehmberg_rates(k * dij, g);
      cm.d(i, j) = cm.d(j, i) = dij;
      cm.omega(i, j) = cm.omega(j, i) = r.omega_ij;
      cm.gamma_cross(i, j) = cm.gamma_cross(j, i) = r.gamma_ij;
    }
  }
  return cm;
}

}  // namespace indist
