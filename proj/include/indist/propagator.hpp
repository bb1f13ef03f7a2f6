#pragma once

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

#include "indist/errors.hpp"
#include "indist/liouvillian.hpp"

namespace indist {

enum class PropagationMethod {
  Auto,             // spectral when the eigenbasis is well conditioned
  Spectral,         // e^{Lt} = V e^{Lambda t} V^-1
  PadeExponential,  // scaling-and-squaring Pade, one exponential per time
};

// Time evolution e^{Lt} of a fixed generator.
class Propagator {
 public:
  explicit Propagator(const Liouvillian& L, PropagationMethod method = PropagationMethod::Auto)
      : dim_(L.dim), generator_(L.generator) {
    if (method == PropagationMethod::PadeExponential) return;
    if (try_spectral() || method == PropagationMethod::Auto) return;
    throw NumericalError("Propagator: Liouvillian eigenbasis is ill conditioned (residual " +
                         std::to_string(residual_) + ", condition " +
                         std::to_string(condition_) + ")");
  }

  bool is_spectral() const { return spectral_; }
  int dim() const { return dim_; }
  const CMatrix& generator() const { return generator_; }
  // Eigenvalues of the generator; empty unless is_spectral().
  const CVector& eigenvalues() const { return lambda_; }
  const CMatrix& right_vectors() const { return v_; }
  const CMatrix& left_vectors() const { return v_inv_; }

  CMatrix matrix(double t) const {
    if (t == 0.0) return CMatrix::Identity(generator_.rows(), generator_.cols());
    if (spectral_) return v_ * phases(t).asDiagonal() * v_inv_;
    return (generator_ * t).exp();
  }

  /// e^{Lt} x
  CVector apply(double t, const CVector& x) const {
    if (t == 0.0) return x;
    if (spectral_) return v_ * (phases(t).cwiseProduct(v_inv_ * x));
    return matrix(t) * x;
  }

  /// f e^{Lt} for a row functional f.
  Eigen::RowVectorXcd apply_left(const Eigen::RowVectorXcd& f, double t) const {
    if (t == 0.0) return f;
    if (spectral_) return ((f * v_).cwiseProduct(phases(t).transpose())) * v_inv_;
    return f * matrix(t);
  }

  CVector phases(double t) const { return (lambda_ * t).array().exp().matrix(); }

 private:
  bool try_spectral() {
    Eigen::ComplexEigenSolver<CMatrix> es(generator_);
    if (es.info() != Eigen::Success) return false;
    CMatrix v = es.eigenvectors();
    Eigen::PartialPivLU<CMatrix> lu(v);
    CMatrix v_inv = lu.inverse();
    const double scale = std::max(1.0, generator_.cwiseAbs().maxCoeff());
    residual_ = (v * es.eigenvalues().asDiagonal() * v_inv - generator_).cwiseAbs().maxCoeff() /
                scale;
    condition_ = v.cwiseAbs().rowwise().sum().maxCoeff() *
                 v_inv.cwiseAbs().rowwise().sum().maxCoeff();
    if (!std::isfinite(residual_) || residual_ > 1e-10 || !(condition_ < 1e8)) return false;
    lambda_ = es.eigenvalues();
    v_ = std::move(v);
    v_inv_ = std::move(v_inv);
    spectral_ = true;
    return true;
  }

  int dim_ = 0;
  CMatrix generator_;
  bool spectral_ = false;
  CVector lambda_;
  CMatrix v_;
  CMatrix v_inv_;
  double residual_ = 0.0;
  double condition_ = 0.0;
};

struct DensityChecks {
  double trace_error = 0.0;
  double hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;
};

inline DensityChecks check_density(const CMatrix& rho) {
  DensityChecks c;
  c.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
  c.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  const CMatrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  return c;
}

/// rho(t) = e^{Lt} rho0. Trace, hermiticity and positivity are checked on
/// both ends; violations raise DomainError (input) or NumericalError (output).
inline CMatrix propagate(const Propagator& prop, const CMatrix& rho0, double t) {
  if (!(t >= 0.0)) throw DomainError("propagate: t must be >= 0");
  const DensityChecks in = check_density(rho0);
  if (in.trace_error > 1e-10 || in.hermiticity_error > 1e-10 || in.min_eigenvalue < -1e-10)
    throw DomainError("propagate: rho0 is not a density operator");
  if (t == 0.0) return rho0;
  CMatrix rho = unvectorize(prop.apply(t, vectorize(rho0)), prop.dim());
  const DensityChecks out = check_density(rho);
  if (out.trace_error > 1e-8 || out.hermiticity_error > 1e-8 || out.min_eigenvalue < -1e-8)
    throw NumericalError("propagate: state left the density-operator set (trace error " +
                         std::to_string(out.trace_error) + ", min eigenvalue " +
                         std::to_string(out.min_eigenvalue) + ")");
  return 0.5 * (rho + rho.adjoint());
}

inline CMatrix propagate(const Liouvillian& L, const CMatrix& rho0, double t) {
  return propagate(Propagator(L), rho0, t);
}

}  // namespace indist
