#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "indist/parallel.hpp"
#include "indist/simulate.hpp"

namespace indist {

// Emitter coordinates flattened as (x0, y0, x1, y1, ...), units of lambda.
using Omega = std::vector<double>;

// Physical parameters shared by every geometry of a study.
struct PhysicalParams {
  double g = 1.0;
  double kappa = 10.0;
  double gamma = 1.0;
  double gamma_star = 1e4;
};

struct Bounds {
  double x_min = 0.0;
  double x_max = 0.5;
  double y_min = 0.0;
  double y_max = 0.5;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

struct GeometryConstraints {
  int n_emitters = 5;
  Bounds bounds;
  double min_separation = 0.05;

  void validate() const {
    if (n_emitters < 1) throw DomainError("geometry: need at least one emitter");
    if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
      throw DomainError("geometry: empty bounds");
    if (!(min_separation > 0.0)) throw DomainError("geometry: min_separation must be > 0");
    // Disks of radius min_separation/2 must fit by area at least.
    const double r = 0.5 * min_separation;
    const double need = n_emitters * std::numbers::pi * r * r;
    const double have = (bounds.width() + min_separation) * (bounds.height() + min_separation);
    if (need > have) throw DomainError("geometry: bounds too small for the requested packing");
  }
};

inline Position emitter_position(const Omega& omega, int i) {
  return {omega[2 * i], omega[2 * i + 1]};
}

inline double min_pair_distance(const Omega& omega) {
  const int n = static_cast<int>(omega.size() / 2);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      best = std::min(best, distance(emitter_position(omega, i), emitter_position(omega, j)));
  return best;
}

inline bool in_bounds(const Omega& omega, const Bounds& b) {
  for (std::size_t k = 0; k < omega.size(); k += 2)
    if (omega[k] < b.x_min || omega[k] > b.x_max || omega[k + 1] < b.y_min ||
        omega[k + 1] > b.y_max)
      return false;
  return true;
}

inline bool is_feasible(const Omega& omega, const GeometryConstraints& c) {
  return static_cast<int>(omega.size()) == 2 * c.n_emitters && in_bounds(omega, c.bounds) &&
         min_pair_distance(omega) >= c.min_separation;
}

/// Uniform draw over the feasible set: whole configurations are drawn
/// uniformly in the bounds and rejected until every pair is far enough apart.
inline Omega sample_geometry(const GeometryConstraints& c, std::mt19937_64& rng) {
  c.validate();
  std::uniform_real_distribution<double> ux(c.bounds.x_min, c.bounds.x_max);
  std::uniform_real_distribution<double> uy(c.bounds.y_min, c.bounds.y_max);
  Omega omega(2 * c.n_emitters);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (int i = 0; i < c.n_emitters; ++i) {
      omega[2 * i] = ux(rng);
      omega[2 * i + 1] = uy(rng);
    }
    if (c.n_emitters == 1 || min_pair_distance(omega) >= c.min_separation) return omega;
  }
  throw PackingError("sample_geometry: 10000 consecutive rejections");
}

inline std::vector<EmitterSpec> emitters_from_omega(const Omega& omega, const PhysicalParams& p,
                                                    std::span<const double> detunings = {}) {
  if (omega.size() % 2 != 0 || omega.empty()) throw DomainError("omega must hold (x, y) pairs");
  const std::size_t n = omega.size() / 2;
  if (!detunings.empty() && detunings.size() != n)
    throw DomainError("detuning vector length does not match the emitter count");
  std::vector<EmitterSpec> es(n);
  for (std::size_t i = 0; i < n; ++i) {
    es[i].position = {omega[2 * i], omega[2 * i + 1]};
    es[i].gamma = p.gamma;
    es[i].gamma_star = p.gamma_star;
    es[i].detuning = detunings.empty() ? 0.0 : detunings[i];
  }
  return es;
}

inline SystemSpec system_from_omega(const Omega& omega, const PhysicalParams& p,
                                    std::span<const double> detunings = {}) {
  const std::vector<EmitterSpec> es = emitters_from_omega(omega, p, detunings);
  return build_system(es, CavitySpec{p.g, p.kappa, 0.0});
}

/// Exact evaluation of a geometry. This, not a surrogate estimate, is the
/// number reported for any optimised geometry.
inline IndistinguishabilityResult verify_geometry(const Omega& omega, const PhysicalParams& p,
                                                  const GridConfig& grid = {}) {
  return simulate_indistinguishability(system_from_omega(omega, p), InitialState::symmetric(),
                                       grid);
}

// ---------------------------------------------------------------------------
// Dataset

struct GeometrySample {
  Omega omega;
  double indist = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
  double horizon = 0.0;
  int points = 0;
  double refinement_delta = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  static constexpr int kSchemaVersion = 1;
  std::vector<GeometrySample> samples;
  PhysicalParams params;
  GeometryConstraints constraints;
  std::uint64_t rng_seed = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.ok ? 0 : 1;
    return n;
  }
  // Index of the largest successful I, or -1.
  int best_index() const {
    int best = -1;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].ok && (best < 0 || samples[i].indist > samples[best].indist))
        best = static_cast<int>(i);
    return best;
  }
};

inline GeometrySample evaluate_sample(const Omega& omega, const PhysicalParams& p,
                                      const GridConfig& grid) {
  GeometrySample s;
  s.omega = omega;
  try {
    const IndistinguishabilityResult r = verify_geometry(omega, p, grid);
    s.indist = r.value;
    s.horizon = r.horizon;
    s.points = r.points;
    s.refinement_delta = r.refinement_delta;
    s.ok = true;
  } catch (const Error& e) {
    s.error = e.what();
  }
  return s;
}

/// n independent (omega, I) samples. Sample i uses its own seed derived from
/// (seed, i), so the dataset is identical for any worker count.
inline Dataset build_dataset(int n, const PhysicalParams& p, const GeometryConstraints& c,
                             std::uint64_t seed, const GridConfig& grid = {}, int jobs = 0) {
  if (n < 1) throw DomainError("build_dataset: n must be >= 1");
  c.validate();
  Dataset ds;
  ds.params = p;
  ds.constraints = c;
  ds.rng_seed = seed;
  ds.samples.resize(n);
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, kStreamDataset, i);
    std::mt19937_64 rng(s);
    ds.samples[i] = evaluate_sample(sample_geometry(c, rng), p, grid);
    ds.samples[i].seed = s;
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const PhysicalParams& p) {
  return {{"g", p.g}, {"kappa", p.kappa}, {"gamma", p.gamma}, {"gamma_star", p.gamma_star}};
}

inline PhysicalParams physical_params_from_json(const nlohmann::json& j) {
  return {j.at("g").get<double>(), j.at("kappa").get<double>(), j.at("gamma").get<double>(),
          j.at("gamma_star").get<double>()};
}

inline nlohmann::json to_json(const GeometryConstraints& c) {
  return {{"n_emitters", c.n_emitters},
          {"bounds", {c.bounds.x_min, c.bounds.x_max, c.bounds.y_min, c.bounds.y_max}},
          {"min_separation", c.min_separation}};
}

inline GeometryConstraints constraints_from_json(const nlohmann::json& j) {
  GeometryConstraints c;
  c.n_emitters = j.at("n_emitters").get<int>();
  const auto b = j.at("bounds").get<std::array<double, 4>>();
  c.bounds = {b[0], b[1], b[2], b[3]};
  c.min_separation = j.at("min_separation").get<double>();
  return c;
}

inline nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    nlohmann::json row = {{"omega", s.omega},
                          {"ok", s.ok},
                          {"horizon", s.horizon},
                          {"points", s.points},
                          {"refinement_delta", s.refinement_delta},
                          {"seed", s.seed}};
    // JSON has no NaN; failed samples carry null plus the reason.
    row["indist"] = s.ok ? nlohmann::json(s.indist) : nlohmann::json(nullptr);
    if (!s.ok) row["error"] = s.error;
    samples.push_back(std::move(row));
  }
  return {{"schema", "indist.dataset"},
          {"schema_version", Dataset::kSchemaVersion},
          {"params", to_json(ds.params)},
          {"constraints", to_json(ds.constraints)},
          {"rng_seed", ds.rng_seed},
          {"size", ds.samples.size()},
          {"samples", std::move(samples)}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "indist.dataset" ||
      j.value("schema_version", 0) != Dataset::kSchemaVersion)
    throw ConfigError("dataset file: unknown schema or version");
  Dataset ds;
  ds.params = physical_params_from_json(j.at("params"));
  ds.constraints = constraints_from_json(j.at("constraints"));
  ds.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  for (const auto& row : j.at("samples")) {
    GeometrySample s;
    s.omega = row.at("omega").get<Omega>();
    s.ok = row.at("ok").get<bool>();
    if (s.ok) s.indist = row.at("indist").get<double>();
    s.error = row.value("error", "");
    s.horizon = row.at("horizon").get<double>();
    s.points = row.at("points").get<int>();
    s.refinement_delta = row.at("refinement_delta").get<double>();
    s.seed = row.at("seed").get<std::uint64_t>();
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != j.at("size").get<std::size_t>())
    throw ConfigError("dataset file: sample count does not match recorded size");
  return ds;
}

// ---------------------------------------------------------------------------
// Positioning tolerance

struct ToleranceResult {
  double radius = 0.0;                 // worst case over directions
  std::array<double, 8> per_direction{};
  bool capped = false;                 // some direction never dropped below threshold
  int evaluations = 0;
};

/// Largest displacement r of emitter `index` such that moving it by r along
/// each of 8 directions keeps I above `threshold`; bisection to `resolution`.
/// Displacements where the evaluation fails (e.g. coincident emitters) count
/// as failures.
inline ToleranceResult tolerance_radius(const Omega& omega_star, int index, double threshold,
                                        const PhysicalParams& p, const GridConfig& grid = {},
                                        double resolution = 1e-3, double max_radius = 0.5) {
  const int n = static_cast<int>(omega_star.size() / 2);
  if (index < 0 || index >= n) throw DomainError("tolerance_radius: emitter index out of range");
  ToleranceResult out;
  auto above = [&](double r, double angle) {
    Omega w = omega_star;
    w[2 * index] += r * std::cos(angle);
    w[2 * index + 1] += r * std::sin(angle);
    ++out.evaluations;
    try {
      return verify_geometry(w, p, grid).value > threshold;
    } catch (const Error&) {
      // Coincident or nearly coincident emitters: I cannot be certified.
      return false;
    }
  };
  const double base = verify_geometry(omega_star, p, grid).value;
  if (!(base > threshold))
    throw DomainError("tolerance_radius: base geometry I = " + std::to_string(base) +
                      " is not above the threshold");

  out.radius = max_radius;
  for (int k = 0; k < 8; ++k) {
    const double angle = k * std::numbers::pi / 4.0;
    // First failing point on a doubling ladder, then bisect the bracket.
    double lo = 0.0;
    double hi = std::min(4.0 * resolution, max_radius);
    bool found = false;
    while (true) {
      if (!above(hi, angle)) {
        found = true;
        break;
      }
      lo = hi;
      if (hi >= max_radius) break;
      hi = std::min(2.0 * hi, max_radius);
    }
    if (!found) {
      out.capped = true;
      out.per_direction[k] = max_radius;
      continue;
    }
    while (hi - lo > resolution) {
      const double mid = 0.5 * (lo + hi);
      (above(mid, angle) ? lo : hi) = mid;
    }
    out.per_direction[k] = lo;
    out.radius = std::min(out.radius, lo);
  }
  return out;
}

}  // namespace indist
