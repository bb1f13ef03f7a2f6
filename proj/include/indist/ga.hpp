#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "indist/geometry.hpp"
#include "indist/parallel.hpp"

namespace indist {

struct GaConfig {
  int population_size = 300;
  int parent_matings = 150;  // parents kept for mating each generation (best first)
  int generations = 60;
  double mutation_probability = 0.1;  // per gene
  double mutation_amplitude = 0.05;   // uniform in [-a, a], units of lambda
  int elitism = 1;
  std::uint64_t seed = 0;
  int jobs = 1;  // fitness workers for pointwise fitness functions

  void validate() const {
    if (population_size < 2) throw DomainError("GaConfig: population_size must be >= 2");
    if (parent_matings < 1 || parent_matings > population_size)
      throw DomainError("GaConfig: parent_matings must be in [1, population_size]");
    if (generations < 0) throw DomainError("GaConfig: generations must be >= 0");
    if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0))
      throw DomainError("GaConfig: mutation_probability must be in [0, 1]");
    if (!(mutation_amplitude >= 0.0)) throw DomainError("GaConfig: mutation_amplitude must be >= 0");
    if (elitism < 0 || elitism >= population_size)
      throw DomainError("GaConfig: elitism must be in [0, population_size)");
  }
};

struct GaGeneration {
  double best = 0.0;
  double mean = 0.0;
  int penalized = 0;
};

struct GaResult {
  Omega best;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<GaGeneration> history;  // one entry per evaluated generation
  long evaluations = 0;
  int repairs_failed = 0;
};

inline constexpr double kGaPenalty = -1.0;

using BatchFitness = std::function<std::vector<double>(const std::vector<Omega>&)>;
using PointFitness = std::function<double(const Omega&)>;

/// Pointwise fitness evaluated over `jobs` workers; exceptions become the
/// penalty value.
inline BatchFitness batch_fitness(PointFitness f, int jobs) {
  return [f = std::move(f), jobs](const std::vector<Omega>& pop) {
    std::vector<double> out(pop.size(), kGaPenalty);
    parallel_for(pop.size(), jobs, [&](std::size_t i) {
      try {
        out[i] = f(pop[i]);
      } catch (const std::exception&) {
        out[i] = kGaPenalty;
      }
    });
    return out;
  };
}

namespace detail {

inline void clip_to_bounds(Omega& w, const Bounds& b) {
  for (std::size_t k = 0; k < w.size(); k += 2) {
    w[k] = std::clamp(w[k], b.x_min, b.x_max);
    w[k + 1] = std::clamp(w[k + 1], b.y_min, b.y_max);
  }
}

// Later emitter of the first pair closer than min_separation, or -1.
inline int crowded_emitter(const Omega& w, double min_separation) {
  const int n = static_cast<int>(w.size() / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (distance(emitter_position(w, i), emitter_position(w, j)) < min_separation) return j;
  return -1;
}

/// Project into the bounds, then re-mutate crowded emitters; false when the
/// separation is still violated after 10 attempts.
inline bool repair(Omega& w, const GeometryConstraints& c, double amplitude,
                   std::mt19937_64& rng) {
  clip_to_bounds(w, c.bounds);
  std::uniform_real_distribution<double> step(-amplitude, amplitude);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const int e = crowded_emitter(w, c.min_separation);
    if (e < 0) return true;
    w[2 * e] += step(rng);
    w[2 * e + 1] += step(rng);
    clip_to_bounds(w, c.bounds);
  }
  return crowded_emitter(w, c.min_separation) < 0;
}

}  // namespace detail

/// Generational genetic search: the best `parent_matings` individuals mate by
/// one-point crossover, children get uniform per-gene mutation and are
/// repaired into the feasible set, and the best `elitism` individuals survive
/// unchanged. Individuals whose repair fails keep the penalty fitness.
inline GaResult ga_optimize(const BatchFitness& fitness, const GeometryConstraints& c,
                            const GaConfig& cfg) {
  cfg.validate();
  c.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamGa, 0));
  const int genes = 2 * c.n_emitters;
  const int P = cfg.population_size;

  std::vector<Omega> pop(P);
  std::vector<char> feasible(P, 1);
  for (int i = 0; i < P; ++i) pop[i] = sample_geometry(c, rng);

  GaResult out;
  auto evaluate = [&](const std::vector<Omega>& xs, const std::vector<char>& ok) {
    std::vector<double> f = fitness(xs);
    if (f.size() != xs.size()) throw DomainError("ga_optimize: fitness returned wrong length");
    out.evaluations += static_cast<long>(xs.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      if (!ok[i] || !std::isfinite(f[i])) f[i] = kGaPenalty;
    return f;
  };
  std::vector<double> fit = evaluate(pop, feasible);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> step(-cfg.mutation_amplitude, cfg.mutation_amplitude);
  std::uniform_int_distribution<int> pick(0, cfg.parent_matings - 1);
  std::uniform_int_distribution<int> cut_at(1, std::max(1, genes - 1));

  for (int gen = 0;; ++gen) {
    std::vector<int> rank(P);
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return fit[a] > fit[b]; });

    GaGeneration g;
    g.best = fit[rank[0]];
    g.mean = std::accumulate(fit.begin(), fit.end(), 0.0) / P;
    g.penalized = static_cast<int>(std::count(feasible.begin(), feasible.end(), 0));
    out.history.push_back(g);
    if (fit[rank[0]] > out.best_fitness) {
      out.best_fitness = fit[rank[0]];
      out.best = pop[rank[0]];
    }
    if (gen == cfg.generations) break;

    std::vector<Omega> next;
    std::vector<char> next_ok;
    std::vector<double> next_fit;
    next.reserve(P);
    for (int e = 0; e < cfg.elitism; ++e) {
      next.push_back(pop[rank[e]]);
      next_ok.push_back(feasible[rank[e]]);
      next_fit.push_back(fit[rank[e]]);
    }
    std::vector<Omega> children;
    std::vector<char> children_ok;
    while (static_cast<int>(next.size() + children.size()) < P) {
      const Omega& a = pop[rank[pick(rng)]];
      const Omega& b = pop[rank[pick(rng)]];
      const int cut = cut_at(rng);
      Omega child(a.begin(), a.begin() + cut);
      child.insert(child.end(), b.begin() + cut, b.end());
      for (double& x : child)
        if (unit(rng) < cfg.mutation_probability) x += step(rng);
      const bool ok = detail::repair(child, c, cfg.mutation_amplitude, rng);
      if (!ok) ++out.repairs_failed;
      children.push_back(std::move(child));
      children_ok.push_back(ok ? 1 : 0);
    }
    const std::vector<double> child_fit = evaluate(children, children_ok);
    for (std::size_t k = 0; k < children.size(); ++k) {
      next.push_back(std::move(children[k]));
      next_ok.push_back(children_ok[k]);
      next_fit.push_back(child_fit[k]);
    }
    pop = std::move(next);
    feasible = std::move(next_ok);
    fit = std::move(next_fit);
  }
  return out;
}

inline GaResult ga_optimize(const PointFitness& fitness, const GeometryConstraints& c,
                            const GaConfig& cfg) {
  return ga_optimize(batch_fitness(fitness, cfg.jobs), c, cfg);
}

}  // namespace indist
