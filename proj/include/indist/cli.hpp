#pragma once

// Run modes behind the command-line tool. Each mode reads its keys from a
// Config, writes plot-ready CSV/JSON into an output directory, and leaves a
// manifest (resolved config, version, seed, input and output checksums).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "indist/config.hpp"
#include "indist/errors.hpp"
#include "indist/geometry.hpp"
#include "indist/pipeline.hpp"
#include "indist/rate_theory.hpp"
#include "indist/robustness.hpp"
#include "indist/simulate.hpp"
#include "indist/surrogate.hpp"
#include "indist/system.hpp"

#ifndef INDIST_VERSION
#define INDIST_VERSION "0.0.0"
#endif

namespace indist::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitRegression = 3;

inline const std::vector<std::string>& modes() {
  static const std::vector<std::string> m{"sweep2",  "analytic-compare", "cascade",
                                          "stability-map", "dataset", "train",
                                          "optimize", "tolerance", "robustness"};
  return m;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct RunContext {
  Config cfg;
  fs::path out = "out";
  int jobs = 0;
  bool resume = false;
  std::ostream* log = &std::cerr;

  // Filled during the run.
  std::string mode;
  std::uint64_t seed = 0;
  bool paper_scale = false;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::string> outputs;
  std::vector<std::string> notes;

  void info(const std::string& s) const {
    if (log) *log << s << std::endl;
  }

  void add_input(const fs::path& p, const std::string& bytes) {
    inputs.emplace_back(p.string(), sha256_hex(bytes));
  }

  std::string load_input(const fs::path& p) {
    const std::string bytes = read_file(p);
    add_input(p, bytes);
    return bytes;
  }

  void write(const std::string& name, const std::string& bytes) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (out / name).string());
    f << bytes;
    if (!f) throw ConfigError("write failed for " + (out / name).string());
    outputs.push_back(name);
  }
};

// ---------------------------------------------------------------------------
// Config readers

inline PhysicalParams read_params(Config& c) {
  PhysicalParams p;
  p.g = c.get_double("params.g", p.g);
  p.kappa = c.get_double("params.kappa", p.kappa);
  p.gamma = c.get_double("params.gamma", p.gamma);
  p.gamma_star = c.get_double("params.gamma_star", p.gamma_star);
  if (!(p.gamma > 0.0) || !(p.gamma_star >= 0.0) || !(p.kappa >= 0.0) || !(p.g >= 0.0))
    throw ConfigError("params: need gamma > 0 and g, kappa, gamma_star >= 0");
  return p;
}

inline GridConfig read_grid(Config& c) {
  GridConfig g;
  g.points = c.get_int("grid.points", g.points);
  g.max_points = c.get_int("grid.max_points", g.max_points);
  g.tail_fraction = c.get_double("grid.tail_fraction", g.tail_fraction);
  g.refinement_tol = c.get_double("grid.refinement_tol", g.refinement_tol);
  g.stretch = c.get_double("grid.stretch", g.stretch);
  g.max_horizon = c.get_double("grid.max_horizon", g.max_horizon);
  const std::string m = c.get_choice("grid.method", "auto", {"auto", "spectral", "pade"});
  g.method = m == "spectral" ? PropagationMethod::Spectral
             : m == "pade"   ? PropagationMethod::PadeExponential
                             : PropagationMethod::Auto;
  if (g.points < 3 || g.max_points < g.points)
    throw ConfigError("grid: need points >= 3 and max_points >= points");
  return g;
}

inline GeometryConstraints read_constraints(Config& c) {
  GeometryConstraints k;
  k.n_emitters = c.get_int("constraints.n_emitters", k.n_emitters);
  k.bounds.x_min = c.get_double("constraints.x_min", k.bounds.x_min);
  k.bounds.x_max = c.get_double("constraints.x_max", k.bounds.x_max);
  k.bounds.y_min = c.get_double("constraints.y_min", k.bounds.y_min);
  k.bounds.y_max = c.get_double("constraints.y_max", k.bounds.y_max);
  k.min_separation = c.get_double("constraints.min_separation", k.min_separation);
  try {
    k.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("constraints: ") + e.what());
  }
  return k;
}

inline TrainConfig read_train(Config& c) {
  TrainConfig t;
  const auto hidden = c.get_list("train.hidden", "200, 200, 200, 200");
  t.hidden.clear();
  for (double h : hidden) {
    if (!(h >= 1.0) || h != std::floor(h)) throw ConfigError("train.hidden: widths must be integers >= 1");
    t.hidden.push_back(static_cast<int>(h));
  }
  t.epochs = c.get_int("train.epochs", t.epochs);
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = c.get_int("train.batch_size", t.batch_size);
  t.validation_fraction = c.get_double("train.validation_fraction", t.validation_fraction);
  t.method = c.get_choice("train.method", "adam", {"adam", "sgd"}) == "sgd" ? GradientMethod::Sgd
                                                                           : GradientMethod::Adam;
  t.standardize_targets = c.get_bool("train.standardize_targets", t.standardize_targets);
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.keep_best_validation = c.get_bool("train.keep_best_validation", t.keep_best_validation);
  t.permute_emitters = c.get_bool("train.permute_emitters", t.permute_emitters);
  return t;
}

inline GaConfig read_ga(Config& c, bool full_scale) {
  GaConfig g;
  g.population_size = c.get_int("ga.population_size", full_scale ? 5000 : 300);
  g.parent_matings = c.get_int("ga.parent_matings", g.population_size / 2);
  g.generations = c.get_int("ga.generations", full_scale ? 216 : 60);
  g.mutation_probability = c.get_double("ga.mutation_probability", g.mutation_probability);
  g.mutation_amplitude = c.get_double("ga.mutation_amplitude", g.mutation_amplitude);
  g.elitism = c.get_int("ga.elitism", g.elitism);
  try {
    g.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("ga: ") + e.what());
  }
  return g;
}

/// Geometry from geometry.file (JSON with an "omega" array, e.g. the
/// optimizer's geometry.json) or an inline geometry.omega list.
inline Omega read_geometry(RunContext& ctx) {
  const std::string file = ctx.cfg.get_string("geometry.file", "");
  const auto inline_omega = ctx.cfg.get_list("geometry.omega", "", true);
  if (!file.empty() && !inline_omega.empty())
    throw ConfigError("geometry: give either geometry.file or geometry.omega, not both");
  Omega w;
  if (!file.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ctx.load_input(file));
      w = j.at("omega").get<Omega>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("geometry.file " + file + ": " + e.what());
    }
  } else {
    w = inline_omega;
  }
  if (w.empty() || w.size() % 2 != 0)
    throw ConfigError("geometry: need a non-empty list of (x, y) pairs in units of lambda");
  return w;
}

// ---------------------------------------------------------------------------
// Small output helpers

inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  return Config::format(x);
}

struct PointOutcome {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string reason;
};

template <class F>
PointOutcome guarded(F&& f) {
  PointOutcome o;
  try {
    o.value = f();
  } catch (const Error& e) {
    o.reason = e.what();
  }
  return o;
}

inline SystemSpec two_emitter_full(double d, const PhysicalParams& p) {
  std::vector<EmitterSpec> es(2);
  for (int i = 0; i < 2; ++i) {
    es[i].gamma = p.gamma;
    es[i].gamma_star = p.gamma_star;
  }
  es[1].position = {d, 0.0};
  return build_system(es, CavitySpec{p.g, p.kappa, 0.0});
}

/// Largest grid g with I > threshold, and the linear-interpolated crossing
/// between it and the next grid point (NaN when the contour leaves the grid).
inline std::pair<double, double> contour_point(const std::vector<double>& g,
                                               const std::vector<double>& I, double threshold) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  int last = -1;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (I[k] > threshold) last = static_cast<int>(k);
  if (last < 0) return {nan, nan};
  if (last + 1 >= static_cast<int>(g.size()) || std::isnan(I[last + 1])) return {g[last], nan};
  const double t = (I[last] - threshold) / (I[last] - I[last + 1]);
  return {g[last], g[last] + t * (g[last + 1] - g[last])};
}

// ---------------------------------------------------------------------------
// Modes

inline int run_sweep2(RunContext& ctx) {
  Config& c = ctx.cfg;
  PhysicalParams p = read_params(c);
  const GridConfig grid = read_grid(c);
  const auto ds = c.get_list("sweep.d", "0.069, 0.07, 0.072");
  const auto gs = c.get_list("sweep.g", "1:30:30");
  const auto ks = c.get_list("sweep.kappa", "1");
  const std::string model = c.get_choice("sweep.model", "effective", {"effective", "full"});
  const double threshold = c.get_double("sweep.threshold", 0.9);
  c.finish();

  const std::size_t n = ds.size() * ks.size() * gs.size();
  std::vector<PointOutcome> qrt(n), closed(n);
  ctx.info("sweep2: " + std::to_string(n) + " points, model " + model);
  parallel_for(n, ctx.jobs, [&](std::size_t idx) {
    const std::size_t ig = idx % gs.size();
    const std::size_t ik = (idx / gs.size()) % ks.size();
    const std::size_t id = idx / (gs.size() * ks.size());
    PhysicalParams q = p;
    q.g = gs[ig];
    q.kappa = ks[ik];
    const double d = ds[id];
    qrt[idx] = guarded([&] {
      const SystemSpec sys =
          model == "full" ? two_emitter_full(d, q)
                          : effective_two_emitter(d, q.gamma, q.gamma_star, q.g, q.kappa);
      return simulate_indistinguishability(sys, InitialState::symmetric(), grid).value;
    });
    closed[idx] = guarded([&] {
      return indist_two_emitter_closed(q.gamma, q.gamma_star, q.kappa, q.g, kd_from_distance(d));
    });
  });

  std::ostringstream csv, contour;
  csv << "d,g_over_gamma,kappa_over_gamma,I_qrt,I_closed_form,reason\n";
  contour << "d,kappa_over_gamma,threshold,g_max_qrt,g_cross_qrt,g_max_closed,g_cross_closed\n";
  int failures = 0;
  for (std::size_t id = 0; id < ds.size(); ++id)
    for (std::size_t ik = 0; ik < ks.size(); ++ik) {
      std::vector<double> Iq, Ic;
      for (std::size_t ig = 0; ig < gs.size(); ++ig) {
        const std::size_t idx = (id * ks.size() + ik) * gs.size() + ig;
        std::string reason = qrt[idx].reason;
        if (!closed[idx].reason.empty())
          reason += (reason.empty() ? "" : "; ") + closed[idx].reason;
        failures += reason.empty() ? 0 : 1;
        csv << num(ds[id]) << ',' << num(gs[ig]) << ',' << num(ks[ik]) << ','
            << num(qrt[idx].value) << ',' << num(closed[idx].value) << ',' << csv_quote(reason)
            << '\n';
        Iq.push_back(qrt[idx].value);
        Ic.push_back(closed[idx].value);
      }
      const auto [gq, xq] = contour_point(gs, Iq, threshold);
      const auto [gc, xc] = contour_point(gs, Ic, threshold);
      contour << num(ds[id]) << ',' << num(ks[ik]) << ',' << num(threshold) << ',' << num(gq)
              << ',' << num(xq) << ',' << num(gc) << ',' << num(xc) << '\n';
    }
  ctx.write("sweep.csv", csv.str());
  ctx.write("contour.csv", contour.str());
  if (failures > 0) ctx.notes.push_back(std::to_string(failures) + " sweep points failed (NaN rows)");
  return kExitOk;
}

inline int run_analytic_compare(RunContext& ctx) {
  Config& c = ctx.cfg;
  const PhysicalParams p = read_params(c);
  const GridConfig grid = read_grid(c);
  const auto single_k = c.get_list("analytic.kappa", "0.1, 1, 10");
  const auto single_g = c.get_list("analytic.g", "1");
  const auto pair_d = c.get_list("analytic.pair_d", "0.069, 0.07, 0.072");
  const auto pair_g = c.get_list("analytic.pair_g", "1, 3, 10, 20, 30");
  const auto pair_k = c.get_list("analytic.pair_kappa", "1");
  c.finish();

  struct Row {
    std::string kind;
    double d, g, k;
    PointOutcome qrt, closed, printed;
  };
  std::vector<Row> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double k : single_k)
    for (double g : single_g) rows.push_back({"single", nan, g, k, {}, {}, {}});
  for (double d : pair_d)
    for (double k : pair_k)
      for (double g : pair_g) rows.push_back({"pair", d, g, k, {}, {}, {}});

  parallel_for(rows.size(), ctx.jobs, [&](std::size_t i) {
    Row& r = rows[i];
    if (r.kind == "single") {
      r.qrt = guarded([&] {
        EmitterSpec e;
        e.gamma = p.gamma;
        e.gamma_star = p.gamma_star;
        std::vector<EmitterSpec> one{e};
        return simulate_indistinguishability(build_system(one, CavitySpec{r.g, r.k, 0.0}),
                                             InitialState::symmetric(), grid)
            .value;
      });
      r.closed = guarded([&] {
        const double R = transfer_rate_single(r.g, p.gamma + p.gamma_star + r.k);
        return indist_single_closed(p.gamma, r.k, R);
      });
    } else {
      r.qrt = guarded([&] {
        return simulate_indistinguishability(
                   effective_two_emitter(r.d, p.gamma, p.gamma_star, r.g, r.k),
                   InitialState::symmetric(), grid)
            .value;
      });
      const double kd = kd_from_distance(r.d);
      r.closed = guarded([&] { return indist_two_emitter_closed(p.gamma, p.gamma_star, r.k, r.g, kd); });
      r.printed = guarded([&] { return indist_two_emitter_printed(p.gamma, p.gamma_star, r.k, r.g, kd); });
    }
  });

  std::ostringstream csv;
  csv << "case,d,g_over_gamma,kappa_over_gamma,gamma_star_over_gamma,I_qrt,I_closed,I_printed,"
         "abs_diff,reason\n";
  double worst = 0.0;
  for (const auto& r : rows) {
    const double diff = std::abs(r.qrt.value - r.closed.value);
    if (!std::isnan(diff)) worst = std::max(worst, diff);
    std::string reason = r.qrt.reason;
    if (!r.closed.reason.empty()) reason += (reason.empty() ? "" : "; ") + r.closed.reason;
    csv << r.kind << ',' << num(r.d) << ',' << num(r.g) << ',' << num(r.k) << ','
        << num(p.gamma_star) << ',' << num(r.qrt.value) << ',' << num(r.closed.value) << ','
        << num(r.printed.value) << ',' << num(diff) << ',' << csv_quote(reason) << '\n';
  }
  ctx.write("analytic.csv", csv.str());
  ctx.info("analytic-compare: largest |I_qrt - I_closed| = " + num(worst));
  return kExitOk;
}

inline int run_cascade(RunContext& ctx) {
  Config& c = ctx.cfg;
  const double kappa1 = c.get_double("cascade.kappa1", 1.0);
  const auto k2 = c.get_list("cascade.kappa2", "0.01:1000:51:log");
  const auto g1 = c.get_list("cascade.g1", "1, 2, 3");
  c.finish();
  std::ostringstream csv;
  csv << "g1_over_gamma,kappa1_over_gamma,kappa2_over_gamma,R2_over_gamma,I_closed,reason\n";
  for (double g : g1)
    for (double k : k2) {
      const double R2 = transfer_rate_cavities(g, kappa1, k);
      const PointOutcome o = guarded([&] { return indist_cascaded_closed(kappa1, k, R2); });
      csv << num(g) << ',' << num(kappa1) << ',' << num(k) << ',' << num(R2) << ','
          << num(o.value) << ',' << csv_quote(o.reason) << '\n';
    }
  ctx.write("cascade.csv", csv.str());
  return kExitOk;
}

inline int run_stability_map(RunContext& ctx) {
  Config& c = ctx.cfg;
  const double R = c.get_double("stability.R", 1.0);
  ComplexGrid grid;
  grid.re_min = c.get_double("stability.re_min", grid.re_min);
  grid.re_max = c.get_double("stability.re_max", grid.re_max);
  grid.im_min = c.get_double("stability.im_min", grid.im_min);
  grid.im_max = c.get_double("stability.im_max", grid.im_max);
  grid.n_re = c.get_int("stability.n_re", grid.n_re);
  grid.n_im = c.get_int("stability.n_im", grid.n_im);
  const int max_iter = c.get_int("stability.max_iter", 200);
  const double bound = c.get_double("stability.bound", 1e6);
  c.finish();
  if (grid.n_re < 1 || grid.n_im < 1) throw ConfigError("stability: grid sizes must be >= 1");
  if (max_iter < 1 || !(bound > 0.0)) throw ConfigError("stability: need max_iter >= 1, bound > 0");

  const Eigen::MatrixXi m = divergence_map(R, grid, max_iter, bound);
  std::ostringstream csv, pgm;
  csv << "row,col,re_kappa,im_kappa,escape_count\n";
  for (int r = 0; r < grid.n_im; ++r)
    for (int col = 0; col < grid.n_re; ++col) {
      const auto z = grid.at(r, col);
      csv << r << ',' << col << ',' << num(z.real()) << ',' << num(z.imag()) << ',' << m(r, col)
          << '\n';
    }
  // Bounded points black; escaping points brighter the faster they escape.
  // Image rows run from the largest imaginary part down.
  pgm << "P2\n" << grid.n_re << ' ' << grid.n_im << "\n255\n";
  for (int r = grid.n_im - 1; r >= 0; --r) {
    for (int col = 0; col < grid.n_re; ++col) {
      const int e = m(r, col);
      const int v = e == kBounded ? 0 : std::max(1, 255 - (255 * (e - 1)) / max_iter);
      pgm << v << (col + 1 < grid.n_re ? ' ' : '\n');
    }
  }
  ctx.write("stability.csv", csv.str());
  ctx.write("stability.pgm", pgm.str());
  return kExitOk;
}

// Dataset from dataset.file, an existing <out>/dataset.json under --resume,
// or a fresh build (written immediately so later failures keep it).
inline Dataset obtain_dataset(RunContext& ctx, const PhysicalParams& p,
                              const GeometryConstraints& k, const GridConfig& grid, int size,
                              const std::string& file) {
  fs::path src = file;
  if (src.empty() && ctx.resume && fs::exists(ctx.out / "dataset.json")) src = ctx.out / "dataset.json";
  if (!src.empty()) {
    Dataset ds;
    try {
      ds = dataset_from_json(nlohmann::json::parse(ctx.load_input(src)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(src.string() + ": " + e.what());
    }
    if (to_json(ds.params) != to_json(p) || to_json(ds.constraints) != to_json(k))
      throw ConfigError(src.string() + ": dataset params or constraints differ from the config");
    ctx.info("dataset: loaded " + std::to_string(ds.size()) + " samples from " + src.string());
    if (src != ctx.out / "dataset.json") ctx.write("dataset.json", to_json(ds).dump(1));
    return ds;
  }
  ctx.info("dataset: building " + std::to_string(size) + " samples");
  Dataset ds = build_dataset(size, p, k, ctx.seed, grid, ctx.jobs);
  ctx.write("dataset.json", to_json(ds).dump(1));
  return ds;
}

inline void write_training(RunContext& ctx, const SurrogateModel& m) {
  ctx.write("model.json", to_json(m).dump());
  std::ostringstream csv;
  csv << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < m.history.loss.size(); ++e)
    csv << e + 1 << ',' << num(m.history.loss[e]) << ',' << num(m.history.val_loss[e]) << '\n';
  ctx.write("training.csv", csv.str());
  for (const auto& w : m.history.warnings) ctx.notes.push_back(w);
}

inline int run_dataset(RunContext& ctx) {
  Config& c = ctx.cfg;
  const PhysicalParams p = read_params(c);
  const GridConfig grid = read_grid(c);
  const GeometryConstraints k = read_constraints(c);
  const int size = c.get_int("dataset.size", ctx.paper_scale ? 2000 : 300);
  c.finish();
  if (size < 1) throw ConfigError("dataset.size must be >= 1");
  const Dataset ds = obtain_dataset(ctx, p, k, grid, size, "");
  if (ds.failures() > 0)
    ctx.notes.push_back(std::to_string(ds.failures()) + " dataset samples failed (kept with error)");
  return kExitOk;
}

inline int run_train(RunContext& ctx) {
  Config& c = ctx.cfg;
  const std::string file = c.get_string("dataset.file", (ctx.out / "dataset.json").string());
  TrainConfig t = read_train(c);
  c.finish();
  Dataset ds;
  try {
    ds = dataset_from_json(nlohmann::json::parse(ctx.load_input(file)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file + ": " + e.what());
  }
  const SurrogateModel m = train_surrogate(ds, seeded(t, ctx.seed));
  write_training(ctx, m);
  const int e = m.history.best_epoch >= 0 ? m.history.best_epoch
                                          : static_cast<int>(m.history.loss.size()) - 1;
  if (e >= 0)
    ctx.info("train: epoch " + std::to_string(e + 1) + " train MSE " + num(m.history.loss[e]) +
             ", validation MSE " + num(m.history.val_loss[e]));
  return kExitOk;
}

inline std::string tolerance_csv(const std::vector<int>& emitters,
                                 const std::vector<std::optional<ToleranceResult>>& r,
                                 double threshold) {
  std::ostringstream csv;
  csv << "emitter,threshold,radius,capped,evaluations";
  for (int k = 0; k < 8; ++k) csv << ",r_dir" << k;
  csv << '\n';
  for (std::size_t i = 0; i < emitters.size(); ++i) {
    if (!r[i]) continue;
    csv << emitters[i] << ',' << num(threshold) << ',' << num(r[i]->radius) << ','
        << (r[i]->capped ? 1 : 0) << ',' << r[i]->evaluations;
    for (double x : r[i]->per_direction) csv << ',' << num(x);
    csv << '\n';
  }
  return csv.str();
}

inline int run_optimize(RunContext& ctx) {
  Config& c = ctx.cfg;
  PipelineConfig pc;
  pc.params = read_params(c);
  pc.grid = read_grid(c);
  pc.constraints = read_constraints(c);
  pc.dataset_size = c.get_int("dataset.size", ctx.paper_scale ? 2000 : 300);
  const std::string file = c.get_string("dataset.file", "");
  pc.train = read_train(c);
  pc.ga = read_ga(c, ctx.paper_scale);
  pc.tolerance = c.get_bool("optimize.tolerance", true);
  pc.tolerance_threshold = c.get_double("optimize.tolerance_threshold", 0.9);
  pc.active_learning_rounds = c.get_int("optimize.active_learning_rounds", 0);
  pc.active_top_k = c.get_int("optimize.active_top_k", 10);
  c.finish();
  pc.seed = ctx.seed;
  pc.jobs = ctx.jobs;
  pc.ga.jobs = ctx.jobs;

  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = obtain_dataset(ctx, pc.params, pc.constraints, pc.grid, pc.dataset_size, file);
  const PipelineResult r =
      run_pipeline_from(std::move(ds), pc, [&](const std::string& s) { ctx.info(s); });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (r.dataset.size() != static_cast<std::size_t>(pc.dataset_size) || pc.active_learning_rounds > 0)
    ctx.write("dataset.json", to_json(r.dataset).dump(1));
  write_training(ctx, r.model);

  std::ostringstream ga;
  ga << "generation,best_fitness,mean_fitness,penalized\n";
  for (std::size_t k = 0; k < r.ga.history.size(); ++k)
    ga << k << ',' << num(r.ga.history[k].best) << ',' << num(r.ga.history[k].mean) << ','
       << r.ga.history[k].penalized << '\n';
  ctx.write("ga_history.csv", ga.str());

  std::vector<int> all(pc.constraints.n_emitters);
  for (int i = 0; i < pc.constraints.n_emitters; ++i) all[i] = i;
  nlohmann::json radii = nlohmann::json::array();
  for (const auto& t : r.tolerance) radii.push_back(t ? nlohmann::json(t->radius) : nlohmann::json());
  nlohmann::json geo = {{"omega", r.best},
                        {"units", "lambda"},
                        {"verified_I", r.verified.value},
                        {"refinement_delta", r.verified.refinement_delta},
                        {"surrogate_I", r.surrogate_estimate},
                        {"surrogate_error", r.surrogate_error},
                        {"dataset_best_I", r.dataset_best},
                        {"improved", r.improved},
                        {"tolerance_threshold", pc.tolerance_threshold},
                        {"tolerance_radius", radii},
                        {"ga_evaluations", r.ga.evaluations},
                        {"ga_repairs_failed", r.ga.repairs_failed},
                        {"duration_seconds", secs},
                        {"notes", r.notes}};
  ctx.write("geometry.json", geo.dump(1));
  if (std::any_of(r.tolerance.begin(), r.tolerance.end(), [](const auto& t) { return t.has_value(); }))
    ctx.write("tolerance.csv", tolerance_csv(all, r.tolerance, pc.tolerance_threshold));
  for (const auto& n : r.notes) ctx.notes.push_back(n);
  ctx.info("optimize: verified I " + num(r.verified.value) + " (dataset best " +
           num(r.dataset_best) + ", surrogate " + num(r.surrogate_estimate) + ") in " +
           num(secs) + " s");
  return r.improved ? kExitOk : kExitRegression;
}

inline int run_tolerance(RunContext& ctx) {
  Config& c = ctx.cfg;
  const PhysicalParams p = read_params(c);
  const GridConfig grid = read_grid(c);
  const Omega w = read_geometry(ctx);
  const double threshold = c.get_double("tolerance.threshold", 0.9);
  const int n = static_cast<int>(w.size() / 2);
  std::string all;
  for (int i = 0; i < n; ++i) all += (i ? ", " : "") + std::to_string(i);
  const auto which = c.get_list("tolerance.emitters", all);
  const double resolution = c.get_double("tolerance.resolution", 1e-3);
  const double max_radius = c.get_double("tolerance.max_radius", 0.5);
  c.finish();
  std::vector<int> emitters;
  for (double x : which) {
    if (x != std::floor(x) || x < 0 || x >= n) throw ConfigError("tolerance.emitters: bad index");
    emitters.push_back(static_cast<int>(x));
  }
  std::vector<std::optional<ToleranceResult>> res(emitters.size());
  parallel_for(emitters.size(), ctx.jobs, [&](std::size_t i) {
    res[i] = tolerance_radius(w, emitters[i], threshold, p, grid, resolution, max_radius);
  });
  ctx.write("tolerance.csv", tolerance_csv(emitters, res, threshold));
  return kExitOk;
}

inline int run_robustness(RunContext& ctx) {
  Config& c = ctx.cfg;
  const PhysicalParams p = read_params(c);
  const GridConfig grid = read_grid(c);
  const Omega w = read_geometry(ctx);
  const int n_max = c.get_int("robustness.n_max", 20);
  const int trials = c.get_int("robustness.trials", ctx.paper_scale ? 200 : 50);
  c.finish();
  if (n_max < 0 || trials < 1) throw ConfigError("robustness: need n_max >= 0 and trials >= 1");
  const DetuningStudy s = robustness_curve(w, p, n_max, trials, ctx.seed, grid, ctx.jobs);
  std::ostringstream curve, draws;
  write_curve_csv(curve, s);
  write_draws_csv(draws, s);
  ctx.write("robustness.csv", curve.str());
  ctx.write("robustness_draws.csv", draws.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline void write_manifest(RunContext& ctx, int code, const std::string& error, double secs) {
  nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
  for (const auto& [path, sum] : ctx.inputs) in.push_back({{"path", path}, {"sha256", sum}});
  for (const auto& name : ctx.outputs)
    out.push_back({{"file", name}, {"sha256", sha256_hex(read_file(ctx.out / name))}});
  const nlohmann::json m = {{"tool", "indist"},
                            {"version", INDIST_VERSION},
                            {"mode", ctx.mode},
                            {"seed", ctx.seed},
                            {"jobs", resolve_jobs(ctx.jobs)},
                            {"paper_scale", ctx.paper_scale},
                            {"exit_code", code},
                            {"error", error},
                            {"notes", ctx.notes},
                            {"config", ctx.cfg.resolved()},
                            {"config_file", "resolved.conf"},
                            {"inputs", in},
                            {"outputs", out},
                            {"duration_seconds", secs}};
  std::ofstream(ctx.out / "resolved.conf") << ctx.cfg.to_text();
  std::ofstream(ctx.out / "manifest.json") << m.dump(1) << '\n';
}

/// Resolve mode and seed, run, and always leave a manifest behind once the
/// output directory exists. Returns the process exit code.
inline int run(RunContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string error;
  bool have_out = false;
  try {
    ctx.mode = ctx.cfg.get_choice("mode", "", modes());
    ctx.seed = ctx.cfg.get_uint64("seed", 0);
    ctx.paper_scale = ctx.cfg.get_bool("paper_scale", false);
    fs::create_directories(ctx.out);
    have_out = true;
    if (ctx.mode == "sweep2") code = run_sweep2(ctx);
    else if (ctx.mode == "analytic-compare") code = run_analytic_compare(ctx);
    else if (ctx.mode == "cascade") code = run_cascade(ctx);
    else if (ctx.mode == "stability-map") code = run_stability_map(ctx);
    else if (ctx.mode == "dataset") code = run_dataset(ctx);
    else if (ctx.mode == "train") code = run_train(ctx);
    else if (ctx.mode == "optimize") code = run_optimize(ctx);
    else if (ctx.mode == "tolerance") code = run_tolerance(ctx);
    else code = run_robustness(ctx);
    if (code == kExitRegression) error = "REGRESSED: verified I does not exceed the dataset maximum";
  } catch (const ConfigError& e) {
    code = kExitConfig;
    error = e.what();
  } catch (const fs::filesystem_error& e) {
    code = kExitConfig;
    error = e.what();
  } catch (const Error& e) {
    code = kExitNumerical;
    error = e.what();
  }
  if (!error.empty()) ctx.info("error: " + error);
  if (have_out) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
      write_manifest(ctx, code, error, secs);
    } catch (const std::exception& e) {
      ctx.info(std::string("error: manifest: ") + e.what());
      if (code == kExitOk) code = kExitConfig;
    }
  }
  return code;
}

}  // namespace indist::cli
