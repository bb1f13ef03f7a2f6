#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "indist/errors.hpp"

namespace indist {

// ---------------------------------------------------------------------------
// Transfer rates
// ---------------------------------------------------------------------------

/// Incoherent emitter -> cavity rate 4 g^2 / Gamma.
inline double transfer_rate_single(double g, double Gamma) {
  if (!(Gamma > 0.0)) throw DomainError("transfer_rate_single: Gamma must be > 0");
  if (!(g >= 0.0)) throw DomainError("transfer_rate_single: g must be >= 0");
  return 4.0 * g * g / Gamma;
}

/// Rate for a dipole-coupled pair: 4 g^2 Gamma / (Gamma^2 + gamma^2 / (kd)^6).
inline double transfer_rate_two_emitter(double g, double Gamma, double gamma, double kd) {
  if (!(Gamma > 0.0)) throw DomainError("transfer_rate_two_emitter: Gamma must be > 0");
  if (!(kd > 0.0)) throw DomainError("transfer_rate_two_emitter: kd must be > 0");
  const double kd3 = kd * kd * kd;
  const double dip = gamma / kd3;
  return 4.0 * g * g * Gamma / (Gamma * Gamma + dip * dip);
}

/// g << Gamma, checked as 10 g <= Gamma.
inline bool is_incoherent_regime(double g, double Gamma) { return 10.0 * g <= Gamma; }

// ---------------------------------------------------------------------------
// Rate networks
// ---------------------------------------------------------------------------

// Linear population dynamics dP/dt = M P.
struct RateNetwork {
  std::vector<std::string> labels;
  Eigen::MatrixXd matrix;
  // Optional sampled trajectory, one column per time.
  Eigen::MatrixXd populations;

  void validate() const {
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (matrix.rows() != n || matrix.cols() != n)
      throw DomainError("RateNetwork: matrix size does not match labels");
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && matrix(i, j) < 0.0)
          throw DomainError("RateNetwork: negative off-diagonal rate");
      if (matrix.col(i).sum() > 1e-12 * std::max(1.0, matrix.col(i).cwiseAbs().sum()))
        throw DomainError("RateNetwork: column sum > 0 (population created)");
    }
  }

  /// P(t) = e^{Mt} P0 on the given times; stored in `populations`.
  void integrate(const Eigen::VectorXd& p0, std::span<const double> times) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(matrix);
    const Eigen::MatrixXcd v = es.eigenvectors();
    const Eigen::VectorXcd c = v.partialPivLu().solve(p0.cast<std::complex<double>>());
    populations.resize(matrix.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
      const Eigen::VectorXcd ph = (es.eigenvalues() * times[k]).array().exp().matrix();
      populations.col(static_cast<Eigen::Index>(k)) = (v * ph.cwiseProduct(c)).real();
    }
  }
};

inline RateNetwork rate_matrix_single(double gamma, double kappa, double R) {
  if (!(gamma >= 0.0) || !(R >= 0.0)) throw DomainError("rate_matrix_single: rates must be >= 0");
  if (!(kappa > 0.0)) throw DomainError("rate_matrix_single: kappa must be > 0");
  RateNetwork net;
  net.labels = {"emitter", "cavity"};
  net.matrix.resize(2, 2);
  net.matrix << -(gamma + R), R, R, -(kappa + R);
  return net;
}

inline RateNetwork rate_matrix_cascaded(double gamma, double kappa1, double kappa2, double R1,
                                        double R2) {
  if (!(gamma >= 0.0) || !(R1 >= 0.0) || !(R2 >= 0.0))
    throw DomainError("rate_matrix_cascaded: rates must be >= 0");
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0))
    throw DomainError("rate_matrix_cascaded: cavity decay rates must be > 0");
  RateNetwork net;
  net.labels = {"emitter", "cavity1", "cavity2"};
  net.matrix.resize(3, 3);
  net.matrix << -(gamma + R1), R1, 0.0,
                R1, -(kappa1 + R1 + R2), R2,
                0.0, R2, -(kappa2 + R2);
  return net;
}

// ---------------------------------------------------------------------------
// Stability metric
// ---------------------------------------------------------------------------

enum class NormalizationRule {
  SingleQE,    // theta_max = kappa + R
  TwoEmitter,  // as SingleQE; the emitter row carries the pair decay 2 gamma
  Cascaded,    // theta_max chosen so theta_bar reproduces the cascaded closed form
  Raw,         // theta_max = 1
};

struct StabilityResult {
  double det = 0.0;    // det(-M)
  double trace = 0.0;  // tr(-M)
  double theta = 0.0;
  double theta_max = 1.0;
  double theta_bar = 0.0;
};

/// theta = det(-M) / tr(-M), normalised per network family.
inline StabilityResult stability_metric(const RateNetwork& net, NormalizationRule rule) {
  net.validate();
  const Eigen::MatrixXd neg = -net.matrix;
  StabilityResult s;
  s.trace = neg.trace();
  if (!(s.trace > 0.0)) throw DomainError("stability_metric: trace of -M must be > 0");
  s.det = neg.determinant();
  s.theta = s.det / s.trace;

  switch (rule) {
    case NormalizationRule::Raw:
      s.theta_max = 1.0;
      break;
    case NormalizationRule::SingleQE:
    case NormalizationRule::TwoEmitter: {
      if (net.matrix.rows() != 2) throw DomainError("stability_metric: expected a 2x2 network");
      const double R = net.matrix(0, 1);
      const double kappa = -net.matrix.col(1).sum();
      s.theta_max = kappa + R;
      break;
    }
    case NormalizationRule::Cascaded: {
      if (net.matrix.rows() != 3) throw DomainError("stability_metric: expected a 3x3 network");
      const double R2 = net.matrix(1, 2);
      const double kappa1 = -net.matrix.col(1).sum();
      const double kappa2 = -net.matrix.col(2).sum();
      // The closed form depends only on the cavity pair: its numerator is the
      // determinant of the C1-C2 block, its denominator carries
      // (kappa2 + R2)(kappa1 + 2 kappa2 + 3 R2).
      const double pair_det = kappa1 * kappa2 + kappa1 * R2 + kappa2 * R2;
      if (!(pair_det > 0.0)) throw DomainError("stability_metric: degenerate cavity pair");
      s.theta_max = s.theta * (kappa2 + R2) * (kappa1 + 2.0 * kappa2 + 3.0 * R2) / pair_det;
      break;
    }
  }
  if (!(s.theta_max > 0.0)) throw DomainError("stability_metric: theta_max must be > 0");
  s.theta_bar = s.theta / s.theta_max;
  return s;
}

/// P(0) / P'(0) of the characteristic polynomial P(lambda) = det(lambda - M).
/// P'(0) is the sum of the principal (n-1)-minors of -M, which equals the
/// trace only for n = 2.
inline double characteristic_ratio(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  const Eigen::MatrixXd neg = -m;
  double slope = 0.0;
  if (n == 1) {
    slope = 1.0;
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::MatrixXd minor(n - 1, n - 1);
      for (Eigen::Index i = 0, r = 0; i < n; ++i) {
        if (i == k) continue;
        for (Eigen::Index j = 0, c = 0; j < n; ++j) {
          if (j == k) continue;
          minor(r, c++) = neg(i, j);
        }
        ++r;
      }
      slope += minor.determinant();
    }
  }
  return neg.determinant() / slope;
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// (gamma + kappa R / (kappa + R)) / (kappa + 2R + gamma)
inline double indist_single_closed(double gamma, double kappa, double R) {
  if (!(gamma >= 0.0) || !(kappa >= 0.0) || !(R >= 0.0))
    throw DomainError("indist_single_closed: rates must be >= 0");
  if (!(kappa + R > 0.0)) throw DomainError("indist_single_closed: kappa + R must be > 0");
  return (gamma + kappa * R / (kappa + R)) / (kappa + 2.0 * R + gamma);
}

/// (kappa1/2 + kappa2 R2 / (2 (kappa2 + R2))) / (kappa1/2 + kappa2 + 3 R2 / 2),
/// rates in units of gamma.
inline double indist_cascaded_closed(double kappa1, double kappa2, double R2) {
  if (!(kappa1 >= 0.0) || !(kappa2 >= 0.0) || !(R2 >= 0.0))
    throw DomainError("indist_cascaded_closed: rates must be >= 0");
  if (!(kappa2 + R2 > 0.0)) throw DomainError("indist_cascaded_closed: kappa2 + R2 must be > 0");
  return (0.5 * kappa1 + kappa2 * R2 / (2.0 * (kappa2 + R2))) /
         (0.5 * kappa1 + kappa2 + 1.5 * R2);
}

/// Inter-cavity transfer rate of two modes coupled with strength g_c:
/// adiabatic elimination of their coherence, which decays at (kappa1+kappa2)/2.
inline double transfer_rate_cavities(double g_c, double kappa1, double kappa2) {
  return transfer_rate_single(g_c, kappa1 + kappa2);
}

struct TwoEmitterClosedForm {
  double value = 0.0;
  double transfer_rate = 0.0;
  double Gamma = 0.0;
  bool incoherent = true;
};

/// Two dipole-coupled emitters in the incoherent regime, via the stability
/// metric of the 2x2 network {superradiant emitter (decay 2 gamma), cavity}.
/// The superradiant state couples to the cavity with sqrt(2) g, and the
/// transfer rate is evaluated at that coupling. Gamma = gamma + gamma* + kappa.
inline TwoEmitterClosedForm indist_two_emitter_detail(double gamma, double gamma_star,
                                                      double kappa, double g, double kd) {
  if (!(gamma > 0.0) || !(gamma_star >= 0.0) || !(kappa > 0.0) || !(g >= 0.0))
    throw DomainError("indist_two_emitter_closed: invalid rates");
  TwoEmitterClosedForm out;
  out.Gamma = gamma + gamma_star + kappa;
  out.incoherent = is_incoherent_regime(g, out.Gamma);
  out.transfer_rate = transfer_rate_two_emitter(std::sqrt(2.0) * g, out.Gamma, gamma, kd);
  const RateNetwork net = rate_matrix_single(2.0 * gamma, kappa, out.transfer_rate);
  out.value = stability_metric(net, NormalizationRule::TwoEmitter).theta_bar;
  return out;
}

inline double indist_two_emitter_closed(double gamma, double gamma_star, double kappa, double g,
                                        double kd) {
  return indist_two_emitter_detail(gamma, gamma_star, kappa, g, kd).value;
}

/// Literal transcription of the printed two-emitter expression, with
/// Omega_12 = 3 gamma / 4 (kd)^3. Dimensionally inconsistent; diagnostic only.
inline double indist_two_emitter_printed(double gamma, double gamma_star, double kappa, double g,
                                         double kd) {
  if (!(kd > 0.0)) throw DomainError("indist_two_emitter_printed: kd must be > 0");
  const double G = gamma + gamma_star + kappa;
  const double om = 3.0 * gamma / (4.0 * kd * kd * kd);
  const double g2 = g * g;
  const double num = gamma * kappa * (G * G * G + om) +
                     (4.0 * g2 * (gamma + 1.0) + om * kappa * gamma / G) * (G * G + om);
  const double den = (G * G + om + 8.0 * g2) * (kappa * G * G + om + 4.0 * g2 * G);
  return num / den;
}

/// |<a^dag(t+tau) a(t)>|^2 ~ Pc(t)^2 exp(-tau (kappa + R)) with R the
/// dipole-pair transfer rate.
inline double envelope_incoherent(double pc_t, double tau, double kappa, double g, double Gamma,
                                  double gamma, double kd) {
  if (!(tau >= 0.0)) throw DomainError("envelope_incoherent: tau must be >= 0");
  const double R = transfer_rate_two_emitter(g, Gamma, gamma, kd);
  return pc_t * pc_t * std::exp(-tau * (kappa + R));
}

// ---------------------------------------------------------------------------
// Divergence map
// ---------------------------------------------------------------------------

inline constexpr int kBounded = -1;

/// Escape count of lambda <- lambda^2 + (kappa + 2R + 1) lambda + (kappa R + kappa + R)
/// started at 0: the 1-based iteration at which |lambda| first exceeds `bound`,
/// or kBounded.
inline int escape_count(std::complex<double> kappa, double R, int max_iter = 200,
                        double bound = 1e6) {
  if (max_iter < 1) throw DomainError("divergence_map: max_iter must be >= 1");
  if (!(bound > 0.0)) throw DomainError("divergence_map: bound must be > 0");
  const std::complex<double> b = kappa + 2.0 * R + 1.0;
  const std::complex<double> c = kappa * R + kappa + R;
  std::complex<double> lam = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    lam = lam * lam + b * lam + c;
    if (std::abs(lam) > bound || !std::isfinite(lam.real()) || !std::isfinite(lam.imag()))
      return it;
  }
  return kBounded;
}

// Rectangular sample of the complex kappa plane; rows run over the imaginary
// part, columns over the real part.
struct ComplexGrid {
  double re_min = -4.0;
  double re_max = 2.0;
  double im_min = -3.0;
  double im_max = 3.0;
  int n_re = 200;
  int n_im = 200;

  std::complex<double> at(int row, int col) const {
    const double re = n_re > 1 ? re_min + (re_max - re_min) * col / (n_re - 1) : re_min;
    const double im = n_im > 1 ? im_min + (im_max - im_min) * row / (n_im - 1) : im_min;
    return {re, im};
  }
};

inline Eigen::MatrixXi divergence_map(double R, const ComplexGrid& grid, int max_iter = 200,
                                      double bound = 1e6) {
  if (grid.n_re < 1 || grid.n_im < 1) throw DomainError("divergence_map: empty grid");
  Eigen::MatrixXi out(grid.n_im, grid.n_re);
  for (int r = 0; r < grid.n_im; ++r)
    for (int c = 0; c < grid.n_re; ++c) out(r, c) = escape_count(grid.at(r, c), R, max_iter, bound);
  return out;
}

}  // namespace indist
