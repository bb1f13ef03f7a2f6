#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "indist/ga.hpp"
#include "indist/geometry.hpp"
#include "indist/pipeline.hpp"
#include "indist/surrogate.hpp"

using namespace indist;

namespace {

// Synthetic smooth target used to check the regressor.
double bump(const Omega& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); k += 2)
    s += (w[k] - 0.25) * (w[k] - 0.25) + (w[k + 1] - 0.25) * (w[k + 1] - 0.25);
  return std::exp(-s);
}

void synthetic(int n, std::uint64_t seed, Eigen::MatrixXd& X, Eigen::RowVectorXd& y) {
  std::mt19937_64 rng(seed);
  GeometryConstraints c;
  X.resize(10, n);
  y.resize(n);
  for (int k = 0; k < n; ++k) {
    const Omega w = sample_geometry(c, rng);
    for (int r = 0; r < 10; ++r) X(r, k) = w[r];
    y(k) = bump(w);
  }
}

// Spread-out geometry used as the reference optimum below.
const Omega kCornersCenter{0, 0, 0.5, 0, 0, 0.5, 0.5, 0.5, 0.25, 0.25};

}  // namespace

TEST(Sampling, ReproducibleAndFeasible) {
  GeometryConstraints c;
  std::mt19937_64 a(42), b(42);
  for (int k = 0; k < 200; ++k) {
    const Omega w = sample_geometry(c, a);
    EXPECT_EQ(w, sample_geometry(c, b));
    ASSERT_EQ(w.size(), 10u);
    EXPECT_GE(min_pair_distance(w), c.min_separation);
    EXPECT_TRUE(in_bounds(w, c.bounds));
  }
}

TEST(Sampling, CoordinatesUniformChiSquare) {
  GeometryConstraints c;
  std::mt19937_64 rng(7);
  constexpr int kBins = 10, kDraws = 1000;
  // 99th percentile of chi-square with 9 degrees of freedom.
  constexpr double kCritical = 21.666;
  std::vector<std::vector<int>> counts(10, std::vector<int>(kBins, 0));
  for (int k = 0; k < kDraws; ++k) {
    const Omega w = sample_geometry(c, rng);
    for (int r = 0; r < 10; ++r)
      ++counts[r][std::min(kBins - 1, static_cast<int>(w[r] / 0.5 * kBins))];
  }
  for (int r = 0; r < 10; ++r) {
    double chi2 = 0.0;
    const double expect = static_cast<double>(kDraws) / kBins;
    for (int n : counts[r]) chi2 += (n - expect) * (n - expect) / expect;
    EXPECT_LT(chi2, kCritical) << "coordinate " << r;
  }
}

TEST(Sampling, ImpossiblePackingThrows) {
  GeometryConstraints c;
  c.min_separation = 0.3;  // passes the area check but 5 such points do not fit
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_geometry(c, rng), PackingError);
  c.min_separation = 2.0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Dataset, DeterministicAndIndependentOfJobs) {
  PhysicalParams p;
  GeometryConstraints c;
  const Dataset a = build_dataset(6, p, c, 11, {}, 1);
  const Dataset b = build_dataset(6, p, c, 11, {}, 3);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  for (const auto& s : a.samples) {
    ASSERT_TRUE(s.ok) << s.error;
    EXPECT_GE(s.indist, 0.0);
    EXPECT_LE(s.indist, 1.0 + 1e-3);
    EXPECT_TRUE(is_feasible(s.omega, c));
  }
  const Dataset d = build_dataset(6, p, c, 12, {}, 1);
  EXPECT_NE(a.samples[0].omega, d.samples[0].omega);
}

TEST(Dataset, JsonRoundTripAndFailures) {
  PhysicalParams p;
  GeometryConstraints c;
  Dataset ds = build_dataset(3, p, c, 5, {}, 1);
  ds.samples[1].ok = false;
  ds.samples[1].indist = std::nan("");
  ds.samples[1].error = "NoEmission: test";
  const Dataset back = dataset_from_json(to_json(ds));
  EXPECT_EQ(to_json(back).dump(), to_json(ds).dump());
  EXPECT_EQ(back.failures(), 1u);
  EXPECT_FALSE(back.samples[1].ok);
  EXPECT_THROW(dataset_from_json(nlohmann::json{{"schema", "other"}}), ConfigError);
}

TEST(Surrogate, SyntheticTargetR2) {
  Eigen::MatrixXd X, Xt;
  Eigen::RowVectorXd y, yt;
  synthetic(2000, 3, X, y);
  synthetic(500, 4, Xt, yt);
  TrainConfig cfg;
  cfg.seed = 9;
  const SurrogateModel m = train_surrogate(X, y, cfg);
  EXPECT_GE(r_squared(m, Xt, yt), 0.9);
  ASSERT_EQ(m.widths, (std::vector<int>{10, 200, 200, 200, 200, 1}));
  EXPECT_EQ(m.history.loss.size(), 200u);
  EXPECT_EQ(m.history.n_train, 1600u);
  EXPECT_EQ(m.history.n_val, 400u);
  // Overfitting guard at the kept epoch.
  const int e = m.history.best_epoch;
  ASSERT_GE(e, 0);
  EXPECT_LE(m.history.val_loss[e], 10.0 * m.history.loss[e]);
  EXPECT_TRUE(m.history.warnings.empty());

  // On the training points the mean error is bounded by the recorded loss.
  double err = 0.0;
  for (std::size_t c : m.history.train_columns) {
    const Omega w(X.col(static_cast<Eigen::Index>(c)).data(),
                  X.col(static_cast<Eigen::Index>(c)).data() + 10);
    err += std::abs(predict(m, w) - y(static_cast<Eigen::Index>(c)));
  }
  err /= static_cast<double>(m.history.train_columns.size());
  EXPECT_LE(err, 2.0 * std::sqrt(m.history.loss[e]));
}

TEST(Surrogate, SameSeedSameWeights) {
  Eigen::MatrixXd X;
  Eigen::RowVectorXd y;
  synthetic(300, 1, X, y);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 2;
  const SurrogateModel a = train_surrogate(X, y, cfg);
  const SurrogateModel b = train_surrogate(X, y, cfg);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    EXPECT_EQ(a.weights[l], b.weights[l]);
    EXPECT_EQ(a.biases[l], b.biases[l]);
  }
  cfg.seed = 3;
  const SurrogateModel c = train_surrogate(X, y, cfg);
  EXPECT_NE(a.weights[0], c.weights[0]);
  // Fewer samples than 10 batches.
  EXPECT_FALSE(a.history.warnings.empty());
}

TEST(Surrogate, BatchEqualsPointwiseAndClamped) {
  Eigen::MatrixXd X;
  Eigen::RowVectorXd y;
  synthetic(200, 1, X, y);
  TrainConfig cfg;
  cfg.epochs = 3;
  const SurrogateModel m = train_surrogate(X, y, cfg);
  std::mt19937_64 rng(3);
  std::vector<Omega> xs;
  for (int k = 0; k < 17; ++k) xs.push_back(sample_geometry(GeometryConstraints{}, rng));
  const std::vector<double> batch = predict_batch(m, xs);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    EXPECT_EQ(batch[k], predict(m, xs[k]));
    EXPECT_GE(batch[k], 0.0);
    EXPECT_LE(batch[k], 1.0);
  }
  EXPECT_THROW(predict(m, Omega(4, 0.1)), DomainError);
}

TEST(Surrogate, JsonRoundTrip) {
  Eigen::MatrixXd X;
  Eigen::RowVectorXd y;
  synthetic(200, 1, X, y);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.hidden = {8, 8};
  const SurrogateModel m = train_surrogate(X, y, cfg);
  const SurrogateModel back = surrogate_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.widths, m.widths);
  for (int k = 0; k < 10; ++k) {
    const Omega w(X.col(k).data(), X.col(k).data() + 10);
    EXPECT_EQ(predict(back, w), predict(m, w));
  }
  EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
  EXPECT_THROW(surrogate_from_json(nlohmann::json{{"schema", "indist.surrogate"}}), ConfigError);
}

TEST(Surrogate, DivergenceThrows) {
  Eigen::MatrixXd X;
  Eigen::RowVectorXd y;
  synthetic(200, 1, X, y);
  TrainConfig cfg;
  cfg.method = GradientMethod::Sgd;
  cfg.learning_rate = 1e6;
  cfg.epochs = 20;
  EXPECT_THROW(train_surrogate(X, y, cfg), TrainingError);
}

TEST(Ga, RecoversAnalyticOptimum) {
  const Omega target{0.1, 0.1, 0.4, 0.1, 0.25, 0.25, 0.1, 0.4, 0.4, 0.4};
  PointFitness f = [&](const Omega& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += (w[k] - target[k]) * (w[k] - target[k]);
    return -s;
  };
  GaConfig cfg;
  cfg.population_size = 200;
  cfg.parent_matings = 100;
  cfg.generations = 100;
  cfg.seed = 5;
  const GaResult r = ga_optimize(f, GeometryConstraints{}, cfg);
  ASSERT_EQ(r.best.size(), target.size());
  for (std::size_t k = 0; k < target.size(); ++k) EXPECT_NEAR(r.best[k], target[k], 1e-2) << k;
}

TEST(Ga, MonotoneBestAndFeasiblePopulation) {
  std::vector<std::size_t> sizes;
  const GeometryConstraints c;
  BatchFitness f = [&](const std::vector<Omega>& pop) {
    sizes.push_back(pop.size());
    std::vector<double> out;
    for (const auto& w : pop) {
      EXPECT_TRUE(in_bounds(w, c.bounds));
      out.push_back(min_pair_distance(w));
    }
    return out;
  };
  GaConfig cfg;
  cfg.population_size = 40;
  cfg.parent_matings = 20;
  cfg.generations = 30;
  cfg.seed = 1;
  const GaResult r = ga_optimize(f, c, cfg);
  ASSERT_EQ(r.history.size(), 31u);
  for (std::size_t k = 1; k < r.history.size(); ++k)
    EXPECT_GE(r.history[k].best, r.history[k - 1].best);
  // First call evaluates the whole population, later ones all but the elite.
  ASSERT_EQ(sizes.size(), 31u);
  EXPECT_EQ(sizes[0], 40u);
  for (std::size_t k = 1; k < sizes.size(); ++k) EXPECT_EQ(sizes[k] + cfg.elitism, 40u);
  EXPECT_EQ(r.evaluations, 40 + 30 * 39);
  EXPECT_TRUE(is_feasible(r.best, c));
}

TEST(Ga, ThrowingFitnessGetsPenalty) {
  PointFitness f = [](const Omega& w) -> double {
    if (w[0] < 0.25) throw NumericalError("boom");
    return w[0];
  };
  GaConfig cfg;
  cfg.population_size = 30;
  cfg.parent_matings = 15;
  cfg.generations = 10;
  const GaResult r = ga_optimize(f, GeometryConstraints{}, cfg);
  EXPECT_GE(r.best[0], 0.25);
  EXPECT_GT(r.history.front().penalized + 1, 0);
  EXPECT_LT(r.history.front().mean, 0.5);
}

TEST(Ga, ConfigValidation) {
  GaConfig cfg;
  cfg.population_size = 1;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.mutation_probability = 1.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.parent_matings = cfg.population_size + 1;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(Ga, RepairKeepsSeparation) {
  GeometryConstraints c;
  std::mt19937_64 rng(3);
  Omega w{0.6, -0.1, 0.1, 0.1, 0.1, 0.11, 0.3, 0.3, 0.4, 0.1};
  ASSERT_TRUE(detail::repair(w, c, 0.05, rng));
  EXPECT_TRUE(is_feasible(w, c));
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(w[1], 0.0);
}

TEST(Verify, PerturbingSpreadGeometryLowersI) {
  const PhysicalParams p;
  const double base = verify_geometry(kCornersCenter, p).value;
  // Move the central emitter 0.05 lambda along each axis.
  for (auto [dx, dy] : {std::pair{0.05, 0.0}, {-0.05, 0.0}, {0.0, 0.05}, {0.0, -0.05}}) {
    Omega w = kCornersCenter;
    w[8] += dx;
    w[9] += dy;
    EXPECT_LT(verify_geometry(w, p).value, base);
  }
  // And a corner emitter inward.
  Omega w = kCornersCenter;
  w[0] += 0.05;
  EXPECT_LT(verify_geometry(w, p).value, base);
}

TEST(Tolerance, FiniteNestedAndGuarded) {
  // Broad cavity, strong coupling and weak dephasing: the spread geometry sits
  // near I = 0.957, where moving one emitter matters at the 0.95 level.
  PhysicalParams p;
  p.kappa = 50.0;
  p.g = 5.0;
  p.gamma_star = 1.0;
  const double base = verify_geometry(kCornersCenter, p).value;
  ASSERT_GT(base, 0.95);
  const ToleranceResult loose = tolerance_radius(kCornersCenter, 4, 0.9, p);
  const ToleranceResult tight = tolerance_radius(kCornersCenter, 4, 0.95, p);
  EXPECT_GE(tight.radius, 0.0);
  EXPECT_LE(tight.radius, loose.radius);
  for (int k = 0; k < 8; ++k) EXPECT_LE(tight.per_direction[k], loose.per_direction[k]);
  // Diagonal moves approach a corner emitter, so the tight radius is finite.
  EXPECT_GT(tight.radius, 1e-2);
  EXPECT_LT(tight.radius, 0.5);
  EXPECT_FALSE(tight.per_direction[1] == 0.5);
  EXPECT_THROW(tolerance_radius(kCornersCenter, 4, 0.99, p), DomainError);
  EXPECT_THROW(tolerance_radius(kCornersCenter, 7, 0.9, p), DomainError);
}

TEST(Tolerance, CoincidentEmittersCountAsFailure) {
  PhysicalParams p;
  p.kappa = 50.0;
  p.g = 5.0;
  p.gamma_star = 1.0;
  // Along +x the corner emitter at the origin meets the one at (0.5, 0).
  const ToleranceResult r = tolerance_radius(kCornersCenter, 0, 0.95, p);
  EXPECT_LT(r.per_direction[0], 0.5);
}

TEST(Pipeline, BitReproducible) {
  PipelineConfig cfg;
  cfg.dataset_size = 30;
  cfg.train.epochs = 10;
  cfg.train.hidden = {16, 16};
  cfg.ga.population_size = 20;
  cfg.ga.parent_matings = 10;
  cfg.ga.generations = 5;
  cfg.seed = 77;
  cfg.jobs = 1;
  const PipelineResult a = run_pipeline(cfg);
  cfg.jobs = 3;
  const PipelineResult b = run_pipeline(cfg);
  EXPECT_EQ(to_json(a.dataset).dump(), to_json(b.dataset).dump());
  EXPECT_EQ(to_json(a.model).dump(), to_json(b.model).dump());
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.verified.value, b.verified.value);
  EXPECT_EQ(a.improved, a.verified.value > a.dataset_best);
  EXPECT_NEAR(a.surrogate_error, std::abs(a.verified.value - a.surrogate_estimate), 0.0);
  if (!a.improved) {
    EXPECT_NE(std::find_if(a.notes.begin(), a.notes.end(),
                           [](const std::string& s) { return s.rfind("REGRESSED", 0) == 0; }),
              a.notes.end());
  }
}

TEST(Pipeline, ActiveLearningAddsSamples) {
  PipelineConfig cfg;
  cfg.dataset_size = 20;
  cfg.train.epochs = 5;
  cfg.train.hidden = {8};
  cfg.ga.population_size = 10;
  cfg.ga.parent_matings = 5;
  cfg.ga.generations = 3;
  cfg.active_learning_rounds = 1;
  cfg.active_top_k = 4;
  cfg.jobs = 1;
  const PipelineResult r = run_pipeline(cfg);
  EXPECT_EQ(r.dataset.size(), 24u);
}
