#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "indist/ga.hpp"
#include "indist/geometry.hpp"
#include "indist/surrogate.hpp"

namespace indist {

// dataset -> surrogate -> GA on the surrogate -> exact verification ->
// positioning tolerances.
struct PipelineConfig {
  PhysicalParams params;
  GeometryConstraints constraints;
  GridConfig grid;
  int dataset_size = 300;
  TrainConfig train;
  GaConfig ga;
  bool tolerance = true;
  double tolerance_threshold = 0.9;
  // Optional refinement loop: top-k GA candidates are evaluated exactly,
  // appended to the dataset, and the surrogate and GA are rerun.
  int active_learning_rounds = 0;
  int active_top_k = 10;
  std::uint64_t seed = 0;
  int jobs = 0;
};

struct PipelineResult {
  Dataset dataset;
  SurrogateModel model;
  GaResult ga;
  Omega best;
  IndistinguishabilityResult verified;
  double surrogate_estimate = 0.0;
  double surrogate_error = 0.0;  // |verified - surrogate|
  double dataset_best = 0.0;
  bool improved = false;         // verified I strictly above the dataset maximum
  std::vector<std::optional<ToleranceResult>> tolerance;
  std::vector<std::string> notes;
};

using ProgressFn = std::function<void(const std::string&)>;

inline TrainConfig seeded(TrainConfig t, std::uint64_t master) {
  t.seed = derive_seed(master, kStreamTraining, 1);
  return t;
}

inline GaConfig seeded(GaConfig g, std::uint64_t master, int round) {
  g.seed = derive_seed(master, kStreamGa, static_cast<std::uint64_t>(round));
  return g;
}

/// Everything after the dataset. `ds` may come from a previous run.
inline PipelineResult run_pipeline_from(Dataset ds, const PipelineConfig& cfg,
                                        const ProgressFn& progress = {}) {
  auto log = [&](const std::string& s) {
    if (progress) progress(s);
  };
  PipelineResult r;
  const int best_idx = ds.best_index();
  if (best_idx < 0) throw NumericalError("pipeline: dataset has no successful samples");
  r.dataset_best = ds.samples[best_idx].indist;
  if (ds.failures() > 0)
    r.notes.push_back(std::to_string(ds.failures()) + " dataset samples failed and were skipped");

  std::vector<GeometrySample> exact_extra;
  for (int round = 0;; ++round) {
    log("training surrogate (round " + std::to_string(round) + ")");
    r.model = train_surrogate(ds, seeded(cfg.train, cfg.seed));
    const SurrogateModel& model = r.model;
    BatchFitness fitness = [&model](const std::vector<Omega>& xs) {
      return predict_batch(model, xs);
    };
    log("genetic search (round " + std::to_string(round) + ")");
    r.ga = ga_optimize(fitness, ds.constraints, seeded(cfg.ga, cfg.seed, round));
    if (round >= cfg.active_learning_rounds) break;

    // Re-evaluate distinct top candidates of the final population exactly.
    std::vector<Omega> top{r.ga.best};
    std::mt19937_64 rng(derive_seed(cfg.seed, kStreamGa, 1000 + round));
    while (static_cast<int>(top.size()) < cfg.active_top_k) {
      Omega w = r.ga.best;
      std::uniform_real_distribution<double> step(-cfg.ga.mutation_amplitude,
                                                  cfg.ga.mutation_amplitude);
      for (double& x : w) x += step(rng);
      if (detail::repair(w, ds.constraints, cfg.ga.mutation_amplitude, rng)) top.push_back(w);
    }
    std::vector<GeometrySample> extra(top.size());
    parallel_for(top.size(), cfg.jobs,
                 [&](std::size_t i) { extra[i] = evaluate_sample(top[i], ds.params, cfg.grid); });
    for (auto& s : extra) {
      exact_extra.push_back(s);
      ds.samples.push_back(std::move(s));
    }
    log("active learning added " + std::to_string(top.size()) + " exact samples");
  }

  r.best = r.ga.best;
  r.surrogate_estimate = predict(r.model, r.best);
  log("verifying best geometry");
  r.verified = verify_geometry(r.best, ds.params, cfg.grid);
  r.surrogate_error = std::abs(r.verified.value - r.surrogate_estimate);
  // The reported winner is always the final GA result; exact active-learning
  // samples only inform the surrogate.
  for (const auto& a : exact_extra)
    if (a.ok && a.indist > r.verified.value) {
      r.notes.push_back("an active-learning sample scored higher than the GA winner");
      break;
    }
  r.improved = r.verified.value > r.dataset_best;
  if (!r.improved) r.notes.push_back("REGRESSED: verified I does not exceed the dataset maximum");

  const int n = ds.constraints.n_emitters;
  r.tolerance.assign(n, std::nullopt);
  if (cfg.tolerance) {
    if (r.verified.value > cfg.tolerance_threshold) {
      for (int i = 0; i < n; ++i) {
        log("tolerance radius of emitter " + std::to_string(i));
        r.tolerance[i] =
            tolerance_radius(r.best, i, cfg.tolerance_threshold, ds.params, cfg.grid);
      }
    } else {
      r.notes.push_back("tolerance radii skipped: verified I " +
                        std::to_string(r.verified.value) + " is not above the threshold " +
                        std::to_string(cfg.tolerance_threshold));
    }
  }
  r.dataset = std::move(ds);
  return r;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const ProgressFn& progress = {}) {
  if (progress) progress("building dataset of " + std::to_string(cfg.dataset_size));
  Dataset ds = build_dataset(cfg.dataset_size, cfg.params, cfg.constraints, cfg.seed, cfg.grid,
                             cfg.jobs);
  return run_pipeline_from(std::move(ds), cfg, progress);
}

}  // namespace indist
