#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "indist/dipole.hpp"
#include "indist/errors.hpp"

namespace indist {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

// Single cavity mode in the frame rotating at the emitter reference frequency.
struct CavitySpec {
  double g = 1.0;
  double kappa = 1.0;
  double delta = 0.0;
  double k = 2.0 * std::numbers::pi;

  void validate() const {
    if (!(g >= 0.0)) throw DomainError("cavity g must be >= 0");
    if (!(kappa >= 0.0)) throw DomainError("cavity kappa must be >= 0");
    if (!std::isfinite(delta)) throw DomainError("cavity delta must be finite");
  }
};

// Product state |emitter bitmask, photon number>.
struct BasisState {
  std::uint32_t excited = 0;
  int photons = 0;

  int excitations() const { return std::popcount(excited) + photons; }
  bool operator==(const BasisState&) const = default;
};

struct CollapseOperator {
  std::string label;
  CMatrix op;
};

// Hamiltonian and dissipators over an excitation-truncated basis. Immutable
// once built; share freely between threads.
struct SystemSpec {
  std::vector<EmitterSpec> emitters;
  CavitySpec cavity;
  CouplingMatrix couplings;
  std::vector<BasisState> basis;
  CMatrix hamiltonian;
  std::vector<CollapseOperator> collapse_ops;
  // Cavity annihilation operator and emitter lowering operators on `basis`.
  CMatrix a;
  std::vector<CMatrix> sigma;
  std::vector<std::string> warnings;

  int dimension() const { return static_cast<int>(basis.size()); }
  int n_emitters() const { return static_cast<int>(emitters.size()); }

  std::optional<int> index_of(const BasisState& s) const {
    for (int i = 0; i < dimension(); ++i)
      if (basis[i] == s) return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::vector<BasisState> truncated_basis(int n_emitters, int max_excitation) {
  std::vector<BasisState> basis;
  const std::uint32_t n_masks = 1u << n_emitters;
  for (int exc = 0; exc <= max_excitation; ++exc) {
    for (int photons = 0; photons <= exc; ++photons) {
      const int on = exc - photons;
      if (on > n_emitters) continue;
      for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
        if (std::popcount(mask) != on) continue;
        basis.push_back({mask, photons});
      }
    }
  }
  return basis;
}

inline int find_state(const std::vector<BasisState>& basis, const BasisState& s) {
  for (std::size_t i = 0; i < basis.size(); ++i)
    if (basis[i] == s) return static_cast<int>(i);
  return -1;
}

inline CMatrix lowering_operator(const std::vector<BasisState>& basis, int emitter) {
  const int dim = static_cast<int>(basis.size());
  CMatrix op = CMatrix::Zero(dim, dim);
  const std::uint32_t bit = 1u << emitter;
  for (int col = 0; col < dim; ++col) {
    if (!(basis[col].excited & bit)) continue;
    const int row = find_state(basis, {basis[col].excited & ~bit, basis[col].photons});
    if (row >= 0) op(row, col) = 1.0;
  }
  return op;
}

inline CMatrix annihilation_operator(const std::vector<BasisState>& basis) {
  const int dim = static_cast<int>(basis.size());
  CMatrix op = CMatrix::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    const int n = basis[col].photons;
    if (n == 0) continue;
    const int row = find_state(basis, {basis[col].excited, n - 1});
    if (row >= 0) op(row, col) = std::sqrt(static_cast<double>(n));
  }
  return op;
}

inline CouplingMatrix single_emitter_couplings(const EmitterSpec& e) {
  CouplingMatrix cm;
  cm.n = 1;
  cm.d = Eigen::MatrixXd::Zero(1, 1);
  cm.omega = Eigen::MatrixXd::Zero(1, 1);
  cm.gamma_cross = Eigen::MatrixXd::Constant(1, 1, e.gamma);
  return cm;
}

inline bool is_hermitian(const CMatrix& h, double rel_tol) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  return (h - h.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// Collective radiative channels from the real symmetric decay matrix.
inline std::vector<CollapseOperator> radiative_channels(const Eigen::MatrixXd& gamma_cross,
                                                        const std::vector<CMatrix>& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma_cross);
  if (es.info() != Eigen::Success) throw NumericalError("decay matrix eigensolver failed");
  const Eigen::VectorXd& mu = es.eigenvalues();
  const double scale = std::max(1.0, mu.cwiseAbs().maxCoeff());
  std::vector<CollapseOperator> out;
  for (int k = 0; k < mu.size(); ++k) {
    if (mu(k) < -1e-12)
      throw DomainError("decay matrix is not positive semidefinite (eigenvalue " +
                        std::to_string(mu(k)) + ")");
    if (mu(k) <= 1e-14 * scale) continue;
    CMatrix op = CMatrix::Zero(sigma.front().rows(), sigma.front().cols());
    for (int i = 0; i < mu.size(); ++i) op += es.eigenvectors()(i, k) * sigma[i];
    out.push_back({"radiative_" + std::to_string(k), std::sqrt(mu(k)) * op});
  }
  return out;
}

inline SystemSpec assemble(std::vector<EmitterSpec> emitters, const CavitySpec& cavity,
                           CouplingMatrix couplings, int max_excitation) {
  const int n = static_cast<int>(emitters.size());
  if (n > 20) throw DomainError("build_system: at most 20 emitters supported");

  SystemSpec sys;
  sys.basis = truncated_basis(n, max_excitation);
  sys.a = annihilation_operator(sys.basis);
  for (int i = 0; i < n; ++i) sys.sigma.push_back(lowering_operator(sys.basis, i));

  const CMatrix& a = sys.a;
  CMatrix h = cavity.delta * (a.adjoint() * a);
  for (int i = 0; i < n; ++i) {
    const CMatrix& s = sys.sigma[i];
    h += emitters[i].detuning * (s.adjoint() * s);
    h += kI * cavity.g * (a.adjoint() * s - s.adjoint() * a);
    for (int j = i + 1; j < n; ++j) {
      const CMatrix hop = s.adjoint() * sys.sigma[j];
      h += couplings.omega(i, j) * (hop + hop.adjoint());
    }
  }
  if (!is_hermitian(h, 1e-12)) throw NumericalError("assembled Hamiltonian is not Hermitian");
  sys.hamiltonian = h;

  if (cavity.kappa > 0.0)
    sys.collapse_ops.push_back({"cavity", std::sqrt(cavity.kappa) * a});
  for (auto& c : radiative_channels(couplings.gamma_cross, sys.sigma))
    sys.collapse_ops.push_back(std::move(c));
  for (int i = 0; i < n; ++i) {
    if (emitters[i].gamma_star > 0.0) {
      const CMatrix& s = sys.sigma[i];
      sys.collapse_ops.push_back({"dephasing_" + std::to_string(i),
                                  std::sqrt(emitters[i].gamma_star) * (s.adjoint() * s)});
    }
  }
  sys.emitters = std::move(emitters);
  sys.cavity = cavity;
  sys.couplings = std::move(couplings);
  return sys;
}

}  // namespace detail

/// Emitters plus cavity, truncated to at most `max_excitation` quanta.
/// A single emitter is allowed (no pair couplings).
inline SystemSpec build_system(std::span<const EmitterSpec> emitters, const CavitySpec& cavity,
                               int max_excitation = 1) {
  if (max_excitation < 1) throw DomainError("build_system: max_excitation must be >= 1");
  if (emitters.empty()) throw DomainError("build_system: need at least one emitter");
  cavity.validate();
  for (const auto& e : emitters) e.validate();
  CouplingMatrix cm = emitters.size() == 1 ? detail::single_emitter_couplings(emitters[0])
                                           : coupling_matrix(emitters, cavity.k);
  return detail::assemble({emitters.begin(), emitters.end()}, cavity, std::move(cm),
                          max_excitation);
}

// How the pair shift and the superradiant decay of the effective emitter are
// obtained.
enum class PairCouplingModel {
  NearField,  // shift 3 gamma / 4 (kd)^3, decay exactly 2 gamma
  Lehmberg,   // shift Omega_12(kd), decay gamma + gamma_12(kd)
};

enum class EffectiveDephasing {
  Collective,          // sqrt(gamma*) sigma_+^dag sigma_+
  PerEmitterProjected  // sqrt(gamma*) sigma_i^dag sigma_i projected on {|gg>, |+>}
};

struct EffectiveOptions {
  PairCouplingModel coupling = PairCouplingModel::NearField;
  EffectiveDephasing dephasing = EffectiveDephasing::Collective;
  double k = 2.0 * std::numbers::pi;
};

/// Two closely spaced emitters reduced to their superradiant state |+>,
/// coupled to the cavity with sqrt(2) g. Basis {|gg,0>, |+,0>, |gg,1>}.
/// The pair shift sits on |+><+|; relative to it the cavity is detuned by
/// -Omega_12.
inline SystemSpec effective_two_emitter(double d, double gamma, double gamma_star, double g,
                                        double kappa, const EffectiveOptions& opt = {}) {
  if (!(d > 0.0)) throw DomainError("effective_two_emitter: d must be > 0");
  const double kd = opt.k * d;
  std::vector<std::string> warnings;
  if (kd >= 0.6)
    warnings.push_back("effective_two_emitter: kd = " + std::to_string(kd) +
                       " is outside the kd << 1 regime (>= 0.6)");

  double shift = 0.0;
  double decay = 0.0;
  if (opt.coupling == PairCouplingModel::NearField) {
    shift = near_field_coupling(kd, gamma);
    decay = 2.0 * gamma;
  } else {
    const PairRates r = lehmberg_rates(kd, gamma);
    shift = r.omega_ij;
    decay = gamma + r.gamma_ij;
  }

  EmitterSpec plus;
  plus.gamma = decay;
  plus.gamma_star = opt.dephasing == EffectiveDephasing::Collective ? gamma_star : 0.0;
  plus.detuning = shift;
  CavitySpec cav{std::sqrt(2.0) * g, kappa, 0.0, opt.k};
  std::vector<EmitterSpec> one{plus};
  SystemSpec sys = build_system(one, cav, 1);
  if (opt.dephasing == EffectiveDephasing::PerEmitterProjected && gamma_star > 0.0) {
    // sigma_i^dag sigma_i restricted to the symmetric manifold is |+><+| / 2.
    const CMatrix n_plus = sys.sigma[0].adjoint() * sys.sigma[0];
    for (int i = 0; i < 2; ++i)
      sys.collapse_ops.push_back(
          {"dephasing_" + std::to_string(i), 0.5 * std::sqrt(gamma_star) * n_plus});
  }
  sys.warnings = std::move(warnings);
  return sys;
}

enum class InitialKind { Symmetric, SingleEmitter };

struct InitialState {
  InitialKind kind = InitialKind::Symmetric;
  int emitter = 0;

  static InitialState symmetric() { return {}; }
  static InitialState single(int i) { return {InitialKind::SingleEmitter, i}; }
};

/// Density operator with one excitation shared by the emitters and an empty
/// cavity.
inline CMatrix initial_density(const SystemSpec& sys, const InitialState& init) {
  const int dim = sys.dimension();
  const int n = sys.n_emitters();
  CVector psi = CVector::Zero(dim);
  if (init.kind == InitialKind::Symmetric) {
    for (int i = 0; i < n; ++i) {
      const auto idx = sys.index_of({1u << i, 0});
      psi(*idx) = 1.0 / std::sqrt(static_cast<double>(n));
    }
  } else {
    if (init.emitter < 0 || init.emitter >= n)
      throw DomainError("initial_density: emitter index out of range");
    psi(*sys.index_of({1u << init.emitter, 0})) = 1.0;
  }
  return psi * psi.adjoint();
}

}  // namespace indist
