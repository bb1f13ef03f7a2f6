#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "indist/errors.hpp"
#include "indist/geometry.hpp"
#include "indist/parallel.hpp"

namespace indist {

/// n independent normal(0, sigma^2) emitter detunings. No tail truncation.
inline std::vector<double> sample_detunings(double sigma, int n_emitters, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw DomainError("sample_detunings: sigma must be >= 0");
  if (n_emitters < 0) throw DomainError("sample_detunings: negative emitter count");
  std::vector<double> d(static_cast<std::size_t>(n_emitters), 0.0);
  if (sigma == 0.0) return d;
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& x : d) x = normal(rng);
  return d;
}

struct TrialDraw {
  std::vector<double> detunings;
  double indist = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

struct SigmaResult {
  double sigma = 0.0;
  double mean = 0.0;
  double stderr_mean = 0.0;  // sample std / sqrt(successful trials)
  int trials = 0;
  int failures = 0;
  std::vector<TrialDraw> draws;
};

struct DetuningStudy {
  Omega geometry;
  PhysicalParams params;
  std::uint64_t rng_seed = 0;
  int trials_per_sigma = 0;
  std::vector<SigmaResult> results;  // sigma ascending, sigma = 0 first
};

/// Mean and standard error of I over `trials` detuning draws. Trial k draws
/// from its own stream derive_seed(seed, detuning, k); the same stream is
/// reused at every sigma, so curves over sigma share their random numbers.
inline SigmaResult mean_indistinguishability(const Omega& omega, const PhysicalParams& p,
                                             double sigma, int trials, std::uint64_t seed,
                                             const GridConfig& grid = {}, int jobs = 0) {
  if (trials < 1) throw DomainError("mean_indistinguishability: trials must be >= 1");
  if (!(sigma >= 0.0)) throw DomainError("mean_indistinguishability: sigma must be >= 0");
  const int n = static_cast<int>(omega.size() / 2);
  SigmaResult out;
  out.sigma = sigma;
  out.trials = trials;
  out.draws.resize(static_cast<std::size_t>(trials));

  if (sigma == 0.0) {
    // Deterministic: one evaluation stands for every trial.
    TrialDraw d;
    d.detunings.assign(static_cast<std::size_t>(n), 0.0);
    d.indist = verify_geometry(omega, p, grid).value;
    d.ok = true;
    std::fill(out.draws.begin(), out.draws.end(), d);
    out.mean = d.indist;
    return out;
  }

  parallel_for(out.draws.size(), jobs, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, kStreamDetuning, k));
    TrialDraw& d = out.draws[k];
    d.detunings = sample_detunings(sigma, n, rng);
    try {
      d.indist = simulate_indistinguishability(system_from_omega(omega, p, d.detunings),
                                               InitialState::symmetric(), grid)
                     .value;
      d.ok = true;
    } catch (const Error& e) {
      d.error = e.what();
    }
  });

  double sum = 0.0;
  int ok = 0;
  for (const auto& d : out.draws)
    if (d.ok) {
      sum += d.indist;
      ++ok;
    }
  out.failures = trials - ok;
  if (out.failures > 0.05 * trials)
    throw StudyError("mean_indistinguishability: " + std::to_string(out.failures) + " of " +
                     std::to_string(trials) + " trials failed at sigma " + std::to_string(sigma));
  out.mean = sum / ok;
  if (ok > 1) {
    double ss = 0.0;
    for (const auto& d : out.draws)
      if (d.ok) ss += (d.indist - out.mean) * (d.indist - out.mean);
    out.stderr_mean = std::sqrt(ss / (ok - 1)) / std::sqrt(static_cast<double>(ok));
  }
  return out;
}

/// Mean I for sigma_n = n * gamma, n = 0..n_max.
inline DetuningStudy robustness_curve(const Omega& omega, const PhysicalParams& p, int n_max = 20,
                                      int trials = 50, std::uint64_t seed = 0,
                                      const GridConfig& grid = {}, int jobs = 0) {
  if (n_max < 0) throw DomainError("robustness_curve: n_max must be >= 0");
  DetuningStudy s;
  s.geometry = omega;
  s.params = p;
  s.rng_seed = seed;
  s.trials_per_sigma = trials;
  for (int k = 0; k <= n_max; ++k)
    s.results.push_back(mean_indistinguishability(omega, p, k * p.gamma, trials, seed, grid, jobs));
  return s;
}

/// Largest violation of a non-increasing curve, in units of the combined
/// standard error of consecutive points: max over k of
/// (mean[k+1] - mean[k]) / sqrt(se[k]^2 + se[k+1]^2). Non-positive means
/// strictly monotone; zero-error pairs count as infinite on any increase.
inline double monotonicity_violation(const DetuningStudy& s) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < s.results.size(); ++k) {
    const double rise = s.results[k + 1].mean - s.results[k].mean;
    const double se = std::hypot(s.results[k].stderr_mean, s.results[k + 1].stderr_mean);
    const double v = se > 0.0 ? rise / se
                              : (rise > 0.0 ? std::numeric_limits<double>::infinity() : -1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline void write_curve_csv(std::ostream& os, const DetuningStudy& s) {
  const auto old = os.precision(17);
  os << "sigma,mean_I,stderr,trials,failures\n";
  for (const auto& r : s.results)
    os << r.sigma << ',' << r.mean << ',' << r.stderr_mean << ',' << r.trials << ','
       << r.failures << '\n';
  os.precision(old);
}

inline void write_draws_csv(std::ostream& os, const DetuningStudy& s) {
  const auto old = os.precision(17);
  const std::size_t n = s.geometry.size() / 2;
  os << "sigma,trial,I";
  for (std::size_t i = 0; i < n; ++i) os << ",delta_" << i;
  os << ",error\n";
  for (const auto& r : s.results)
    for (std::size_t k = 0; k < r.draws.size(); ++k) {
      const auto& d = r.draws[k];
      os << r.sigma << ',' << k << ',';
      if (d.ok)
        os << d.indist;
      else
        os << "nan";
      for (double x : d.detunings) os << ',' << x;
      os << ',' << csv_quote(d.error) << '\n';
    }
  os.precision(old);
}

}  // namespace indist
