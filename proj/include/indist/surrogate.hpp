#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "indist/errors.hpp"
#include "indist/geometry.hpp"
#include "indist/parallel.hpp"

namespace indist {

enum class GradientMethod { Sgd, Adam };

struct TrainConfig {
  std::vector<int> hidden{200, 200, 200, 200};
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 100;
  double validation_fraction = 0.2;
  // Plain SGD at lr 1e-3 barely moves a 4x200 network in 200 epochs
  // (validation R^2 ~ 0.05 on smooth targets); Adam at the same rate fits.
  GradientMethod method = GradientMethod::Adam;
  // Fit (y - mean) / std instead of y. Needed when the targets vary over a
  // tiny band, e.g. 1e-5 around 0.09.
  bool standardize_targets = true;
  // L2 penalty on the weights (not biases), added to the gradient.
  double weight_decay = 0.0;
  // Keep the weights of the epoch with the lowest validation loss.
  bool keep_best_validation = true;
  // Inputs are (x, y) pairs of interchangeable emitters: shuffle the pair
  // order of every training sample each epoch, and pool the input scaling
  // over pairs so the shuffle commutes with it.
  bool permute_emitters = true;
  std::uint64_t seed = 0;
};

struct TrainingHistory {
  // Per epoch, mean squared error in the original target units.
  std::vector<double> loss;
  std::vector<double> val_loss;
  std::vector<std::string> warnings;
  int best_epoch = -1;  // set when keep_best_validation restored an earlier epoch
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<std::size_t> train_columns;  // columns of X used for training; not serialized
};

// Fully connected regressor: ReLU hidden layers, linear scalar output.
struct SurrogateModel {
  static constexpr int kSchemaVersion = 1;
  std::vector<int> widths;  // input, hidden..., output
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
  TrainingHistory history;
  TrainConfig config;

  int input_dim() const { return widths.empty() ? 0 : widths.front(); }

  /// Unclamped predictions for the columns of X.
  Eigen::RowVectorXd predict_raw(const Eigen::MatrixXd& X) const {
    if (X.rows() != input_dim()) throw DomainError("surrogate: input dimension mismatch");
    Eigen::MatrixXd a = (X.colwise() - x_mean).array().colwise() / x_scale.array();
    const std::size_t L = weights.size();
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::MatrixXd z = weights[l] * a;
      z.colwise() += biases[l];
      a = l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return (a.row(0).array() * y_scale + y_mean).matrix();
  }

  double predict_raw(const Omega& omega) const {
    return predict_raw(Eigen::Map<const Eigen::VectorXd>(omega.data(),
                                                         static_cast<Eigen::Index>(omega.size())))(0);
  }
};

/// Surrogate estimate clamped to [0, 1] for use as a fitness.
inline double predict(const SurrogateModel& m, const Omega& omega) {
  if (static_cast<int>(omega.size()) != m.input_dim())
    throw DomainError("predict: omega length does not match the model input");
  return std::clamp(m.predict_raw(omega), 0.0, 1.0);
}

// Evaluated one column at a time: a matrix-matrix product may round
// differently from the matrix-vector product used by predict().
inline std::vector<double> predict_batch(const SurrogateModel& m, const std::vector<Omega>& xs) {
  std::vector<double> out(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) out[k] = predict(m, xs[k]);
  return out;
}

inline double mean_squared_error(const SurrogateModel& m, const Eigen::MatrixXd& X,
                                 const Eigen::RowVectorXd& y) {
  if (X.cols() == 0) return 0.0;
  return (m.predict_raw(X) - y).squaredNorm() / static_cast<double>(X.cols());
}

inline double r_squared(const SurrogateModel& m, const Eigen::MatrixXd& X,
                        const Eigen::RowVectorXd& y) {
  const double var = (y.array() - y.mean()).square().sum();
  const double res = (m.predict_raw(X) - y).squaredNorm();
  return var > 0.0 ? 1.0 - res / var : 0.0;
}

namespace detail {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;
};

}  // namespace detail

/// Mini-batch gradient descent on the mean squared error. Columns of X are
/// samples. The split, the initial weights and the batch order all follow
/// from config.seed.
inline SurrogateModel train_surrogate(const Eigen::MatrixXd& X, const Eigen::RowVectorXd& y,
                                      const TrainConfig& cfg) {
  const Eigen::Index n = X.cols();
  if (n < 2) throw DomainError("train_surrogate: need at least 2 samples");
  if (y.size() != n) throw DomainError("train_surrogate: X and y sizes differ");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0))
    throw DomainError("train_surrogate: invalid training configuration");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
    throw DomainError("train_surrogate: validation_fraction must be in [0, 1)");

  SurrogateModel m;
  m.config = cfg;
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamTraining, 0));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<Eigen::Index>(std::floor(cfg.validation_fraction * n));
  const Eigen::Index n_train = n - n_val;
  Eigen::MatrixXd Xt(X.rows(), n_train), Xv(X.rows(), n_val);
  Eigen::RowVectorXd yt(n_train), yv(n_val);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k < n_train) {
      Xt.col(k) = X.col(order[k]);
      yt(k) = y(order[k]);
    } else {
      Xv.col(k - n_train) = X.col(order[k]);
      yv(k - n_train) = y(order[k]);
    }
  }
  m.history.n_train = static_cast<std::size_t>(n_train);
  m.history.train_columns.assign(order.begin(), order.begin() + n_train);
  m.history.n_val = static_cast<std::size_t>(n_val);
  if (n < 10 * cfg.batch_size)
    m.history.warnings.push_back("train_surrogate: " + std::to_string(n) +
                                 " samples is below 10x the batch size");

  // Standardisation from the training split only.
  m.x_mean = Xt.rowwise().mean();
  m.x_scale = ((Xt.colwise() - m.x_mean).array().square().rowwise().sum() /
               static_cast<double>(n_train))
                  .sqrt()
                  .matrix();
  if (cfg.permute_emitters) {
    if (X.rows() % 2 != 0) throw DomainError("train_surrogate: permute_emitters needs (x, y) pairs");
    const Eigen::Index pairs = X.rows() / 2;
    for (int axis = 0; axis < 2; ++axis) {
      double mean = 0.0, sq = 0.0;
      for (Eigen::Index e = 0; e < pairs; ++e) mean += Xt.row(2 * e + axis).mean();
      mean /= static_cast<double>(pairs);
      for (Eigen::Index e = 0; e < pairs; ++e)
        sq += (Xt.row(2 * e + axis).array() - mean).square().mean();
      const double sd = std::sqrt(sq / static_cast<double>(pairs));
      for (Eigen::Index e = 0; e < pairs; ++e) {
        m.x_mean(2 * e + axis) = mean;
        m.x_scale(2 * e + axis) = sd;
      }
    }
  }
  for (Eigen::Index r = 0; r < m.x_scale.size(); ++r)
    if (!(m.x_scale(r) > 0.0)) m.x_scale(r) = 1.0;
  if (cfg.standardize_targets) {
    m.y_mean = yt.mean();
    const double sd = std::sqrt((yt.array() - m.y_mean).square().mean());
    m.y_scale = sd > 0.0 ? sd : 1.0;
  }

  m.widths.push_back(static_cast<int>(X.rows()));
  for (int w : cfg.hidden) {
    if (w < 1) throw DomainError("train_surrogate: hidden widths must be >= 1");
    m.widths.push_back(w);
  }
  m.widths.push_back(1);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases. He-scaled
  // normal initialisation generalises far worse on smooth targets at this depth.
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    const int fan_in = m.widths[l];
    const int fan_out = m.widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd W(fan_out, fan_in);
    for (Eigen::Index c = 0; c < W.cols(); ++c)
      for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = u(rng);
    Eigen::VectorXd b(fan_out);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = u(rng);
    m.weights.push_back(std::move(W));
    m.biases.push_back(std::move(b));
  }

  const std::size_t L = m.weights.size();
  detail::AdamState adam;
  if (cfg.method == GradientMethod::Adam) {
    for (std::size_t l = 0; l < L; ++l) {
      adam.mw.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
      adam.vw.push_back(adam.mw.back());
      adam.mb.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
      adam.vb.push_back(adam.mb.back());
    }
  }

  // Standardised inputs and targets are fixed for the whole run.
  const Eigen::MatrixXd Zt = (Xt.colwise() - m.x_mean).array().colwise() / m.x_scale.array();
  const Eigen::RowVectorXd ty = (yt.array() - m.y_mean) / m.y_scale;

  std::vector<Eigen::Index> idx(n_train);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Eigen::MatrixXd> act(L + 1);
  std::vector<Eigen::MatrixXd> gw(L);
  std::vector<Eigen::VectorXd> gb(L);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(X.rows() / 2));
  std::iota(perm.begin(), perm.end(), 0);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<Eigen::MatrixXd> best_w;
  std::vector<Eigen::VectorXd> best_b;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index start = 0; start < n_train; start += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n_train - start);
      act[0].resize(Zt.rows(), bs);
      Eigen::RowVectorXd target(bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        act[0].col(k) = Zt.col(idx[start + k]);
        target(k) = ty(idx[start + k]);
        if (cfg.permute_emitters) {
          std::shuffle(perm.begin(), perm.end(), rng);
          for (std::size_t e = 0; e < perm.size(); ++e) {
            act[0](2 * e, k) = Zt(2 * perm[e], idx[start + k]);
            act[0](2 * e + 1, k) = Zt(2 * perm[e] + 1, idx[start + k]);
          }
        }
      }
      for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = m.weights[l] * act[l];
        z.colwise() += m.biases[l];
        act[l + 1] = l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
      }
      // d(mean sq. error)/d(output)
      Eigen::MatrixXd delta = (2.0 / static_cast<double>(bs)) * (act[L].row(0) - target);
      for (std::size_t l = L; l-- > 0;) {
        gw[l] = delta * act[l].transpose();
        if (cfg.weight_decay > 0.0) gw[l] += cfg.weight_decay * m.weights[l];
        gb[l] = delta.rowwise().sum();
        if (l > 0) {
          Eigen::MatrixXd back = m.weights[l].transpose() * delta;
          delta = back.cwiseProduct((act[l].array() > 0.0).cast<double>().matrix());
        }
      }
      if (cfg.method == GradientMethod::Sgd) {
        for (std::size_t l = 0; l < L; ++l) {
          m.weights[l] -= cfg.learning_rate * gw[l];
          m.biases[l] -= cfg.learning_rate * gb[l];
        }
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++adam.step;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
        for (std::size_t l = 0; l < L; ++l) {
          adam.mw[l] = b1 * adam.mw[l] + (1.0 - b1) * gw[l];
          adam.vw[l] = b2 * adam.vw[l] + (1.0 - b2) * gw[l].cwiseAbs2();
          adam.mb[l] = b1 * adam.mb[l] + (1.0 - b1) * gb[l];
          adam.vb[l] = b2 * adam.vb[l] + (1.0 - b2) * gb[l].cwiseAbs2();
          m.weights[l].array() -= cfg.learning_rate * (adam.mw[l].array() / c1) /
                                  ((adam.vw[l].array() / c2).sqrt() + eps);
          m.biases[l].array() -= cfg.learning_rate * (adam.mb[l].array() / c1) /
                                 ((adam.vb[l].array() / c2).sqrt() + eps);
        }
      }
    }
    const double loss = mean_squared_error(m, Xt, yt);
    const double val = n_val > 0 ? mean_squared_error(m, Xv, yv) : loss;
    if (!std::isfinite(loss) || !std::isfinite(val))
      throw TrainingError("train_surrogate: loss diverged at epoch " + std::to_string(epoch + 1));
    m.history.loss.push_back(loss);
    m.history.val_loss.push_back(val);
    if (cfg.keep_best_validation && n_val > 0 && val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best_w = m.weights;
      best_b = m.biases;
    }
  }
  if (best_epoch >= 0) {
    m.weights = std::move(best_w);
    m.biases = std::move(best_b);
    m.history.best_epoch = best_epoch;
  }
  if (!m.history.loss.empty()) {
    const int e = best_epoch >= 0 ? best_epoch : static_cast<int>(m.history.loss.size()) - 1;
    if (m.history.val_loss[e] > 10.0 * m.history.loss[e])
      m.history.warnings.push_back("train_surrogate: validation MSE exceeds 10x training MSE");
  }
  return m;
}

/// Train on the successful samples of a dataset.
inline SurrogateModel train_surrogate(const Dataset& ds, const TrainConfig& cfg) {
  std::vector<const GeometrySample*> ok;
  for (const auto& s : ds.samples)
    if (s.ok) ok.push_back(&s);
  if (ok.empty()) throw DomainError("train_surrogate: dataset has no successful samples");
  const auto dim = static_cast<Eigen::Index>(ok.front()->omega.size());
  Eigen::MatrixXd X(dim, static_cast<Eigen::Index>(ok.size()));
  Eigen::RowVectorXd y(static_cast<Eigen::Index>(ok.size()));
  for (std::size_t k = 0; k < ok.size(); ++k) {
    for (Eigen::Index r = 0; r < dim; ++r) X(r, static_cast<Eigen::Index>(k)) = ok[k]->omega[r];
    y(static_cast<Eigen::Index>(k)) = ok[k]->indist;
  }
  return train_surrogate(X, y, cfg);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const SurrogateModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const Eigen::MatrixXd& W = m.weights[l];
    std::vector<double> w(W.data(), W.data() + W.size());  // column-major
    std::vector<double> b(m.biases[l].data(), m.biases[l].data() + m.biases[l].size());
    layers.push_back({{"rows", W.rows()}, {"cols", W.cols()}, {"weights", w}, {"bias", b}});
  }
  const auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return {{"schema", "indist.surrogate"},
          {"schema_version", SurrogateModel::kSchemaVersion},
          {"widths", m.widths},
          {"activation", "relu"},
          {"layers", std::move(layers)},
          {"x_mean", vec(m.x_mean)},
          {"x_scale", vec(m.x_scale)},
          {"y_mean", m.y_mean},
          {"y_scale", m.y_scale},
          {"train",
           {{"epochs", m.config.epochs},
            {"learning_rate", m.config.learning_rate},
            {"batch_size", m.config.batch_size},
            {"validation_fraction", m.config.validation_fraction},
            {"method", m.config.method == GradientMethod::Sgd ? "sgd" : "adam"},
            {"standardize_targets", m.config.standardize_targets},
            {"weight_decay", m.config.weight_decay},
            {"keep_best_validation", m.config.keep_best_validation},
            {"permute_emitters", m.config.permute_emitters},
            {"seed", m.config.seed}}},
          {"history",
           {{"loss", m.history.loss},
            {"val_loss", m.history.val_loss},
            {"n_train", m.history.n_train},
            {"n_val", m.history.n_val},
            {"best_epoch", m.history.best_epoch},
            {"warnings", m.history.warnings}}}};
}

inline SurrogateModel surrogate_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "indist.surrogate" ||
      j.value("schema_version", 0) != SurrogateModel::kSchemaVersion)
    throw ConfigError("model file: unknown schema or version");
  SurrogateModel m;
  m.widths = j.at("widths").get<std::vector<int>>();
  for (const auto& layer : j.at("layers")) {
    const auto rows = layer.at("rows").get<Eigen::Index>();
    const auto cols = layer.at("cols").get<Eigen::Index>();
    const auto w = layer.at("weights").get<std::vector<double>>();
    const auto b = layer.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows)
      throw ConfigError("model file: layer size mismatch");
    m.weights.push_back(Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols));
    m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
  }
  const auto xm = j.at("x_mean").get<std::vector<double>>();
  const auto xs = j.at("x_scale").get<std::vector<double>>();
  m.x_mean = Eigen::Map<const Eigen::VectorXd>(xm.data(), static_cast<Eigen::Index>(xm.size()));
  m.x_scale = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  m.y_mean = j.at("y_mean").get<double>();
  m.y_scale = j.at("y_scale").get<double>();
  const auto& t = j.at("train");
  m.config.epochs = t.at("epochs").get<int>();
  m.config.learning_rate = t.at("learning_rate").get<double>();
  m.config.batch_size = t.at("batch_size").get<int>();
  m.config.validation_fraction = t.at("validation_fraction").get<double>();
  m.config.method = t.at("method").get<std::string>() == "adam" ? GradientMethod::Adam
                                                                : GradientMethod::Sgd;
  m.config.standardize_targets = t.at("standardize_targets").get<bool>();
  m.config.weight_decay = t.value("weight_decay", 0.0);
  m.config.keep_best_validation = t.value("keep_best_validation", true);
  m.config.permute_emitters = t.value("permute_emitters", true);
  m.config.seed = t.at("seed").get<std::uint64_t>();
  m.config.hidden.assign(m.widths.begin() + 1, m.widths.end() - 1);
  const auto& h = j.at("history");
  m.history.loss = h.at("loss").get<std::vector<double>>();
  m.history.val_loss = h.at("val_loss").get<std::vector<double>>();
  m.history.n_train = h.at("n_train").get<std::size_t>();
  m.history.n_val = h.at("n_val").get<std::size_t>();
  m.history.best_epoch = h.value("best_epoch", -1);
  m.history.warnings = h.at("warnings").get<std::vector<std::string>>();
  if (m.weights.size() + 1 != m.widths.size())
    throw ConfigError("model file: layer count does not match widths");
  return m;
}

}  // namespace indist
