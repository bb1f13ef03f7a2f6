#pragma once

#include <unsupported/Eigen/KroneckerProduct>

#include "indist/system.hpp"

namespace indist {

// Generator of the master equation acting on column-stacked density
// operators: vec(A X B) = (B^T kron A) vec(X).
struct Liouvillian {
  int dim = 0;  // Hilbert-space dimension d; generator is d^2 x d^2
  CMatrix generator;
};

inline CVector vectorize(const CMatrix& rho) {
  return Eigen::Map<const CVector>(rho.data(), rho.size());
}

inline CMatrix unvectorize(const CVector& v, int dim) {
  return Eigen::Map<const CMatrix>(v.data(), dim, dim);
}

// Row functional f with f . vec(X) = Tr(A X).
inline Eigen::RowVectorXcd trace_functional(const CMatrix& A) {
  const CMatrix at = A.transpose();
  return Eigen::Map<const Eigen::RowVectorXcd>(at.data(), at.size());
}

// Superoperator of X -> A X.
inline CMatrix left_multiplication(const CMatrix& A) {
  return Eigen::kroneckerProduct(CMatrix::Identity(A.rows(), A.cols()), A);
}

/// -i[H, rho] + sum_n (D rho D^dag - {D^dag D, rho} / 2)
inline Liouvillian build_liouvillian(const SystemSpec& sys) {
  const int d = sys.dimension();
  const CMatrix id = CMatrix::Identity(d, d);
  const CMatrix& h = sys.hamiltonian;
  CMatrix gen = -kI * (Eigen::kroneckerProduct(id, h) - Eigen::kroneckerProduct(h.transpose(), id))
                         .eval();
  for (const auto& c : sys.collapse_ops) {
    const CMatrix& D = c.op;
    const CMatrix dd = D.adjoint() * D;
    gen += Eigen::kroneckerProduct(D.conjugate(), D);
    gen -= 0.5 * Eigen::kroneckerProduct(id, dd);
    gen -= 0.5 * Eigen::kroneckerProduct(dd.transpose(), id);
  }
  return {d, std::move(gen)};
}

}  // namespace indist
