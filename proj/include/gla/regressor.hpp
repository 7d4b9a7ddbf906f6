#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gla/errors.hpp"
#include "gla/geometry.hpp"
#include "gla/rng.hpp"
#include "gla/simulator.hpp"

// The trainable gaze model G = W(F(x)): a one-hidden-layer tanh extractor F
// and an affine head W that emits polar gaze angles, converted to degrees at
// the interface. The head's raw output is radian-scale, which keeps SGD
// steps and weight magnitudes O(1). Trained with minibatch SGD on the
// surrogate loss 1 - cos(angle(prediction, label)), which shares its
// minimizer with the angular error but keeps a bounded gradient at perfect
// alignment. Reported metrics are always angular errors in degrees.

namespace gla {

struct Extractor {
  Eigen::MatrixXd w;  // hidden_dim x feature_dim
  Eigen::VectorXd b;  // hidden_dim
};

struct Head {
  Eigen::MatrixXd w;  // 2 x hidden_dim
  Eigen::VectorXd b;  // 2
};

struct ModelParams {
  Extractor extractor;
  Head head;

  int feature_dim() const { return static_cast<int>(extractor.w.cols()); }
  int hidden_dim() const { return static_cast<int>(extractor.w.rows()); }
};

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 30;
  // Head-only retraining is nearly convex but sharper (fixed, saturated
  // hidden units), so it needs more epochs at the same stable rate.
  int head_epochs = 100;
  int batch_size = 126;
  std::uint64_t seed = 0;
  int hidden_dim = 64;
  bool cosine_lr = false;  // optional cosine-annealed schedule, default off
};

namespace detail {

inline Eigen::MatrixXd uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace detail

/// Fresh parameters, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Extractor init_extractor(int feature_dim, int hidden_dim, Rng& rng) {
  Extractor e;
  e.w = detail::uniform_init(rng, hidden_dim, feature_dim, feature_dim);
  e.b = detail::uniform_init(rng, hidden_dim, 1, feature_dim);
  return e;
}

inline Head init_head(int hidden_dim, Rng& rng) {
  Head h;
  h.w = detail::uniform_init(rng, 2, hidden_dim, hidden_dim);
  h.b = detail::uniform_init(rng, 2, 1, hidden_dim);
  return h;
}

/// Hidden activations for a feature batch (columns are samples).
inline Eigen::MatrixXd extract(const Extractor& e, const Eigen::MatrixXd& x) {
  return ((e.w * x).colwise() + e.b).array().tanh().matrix();
}

/// Raw head output (theta, phi) in radians, one column per sample.
inline Eigen::MatrixXd head_angles(const Head& h, const Eigen::MatrixXd& hidden) {
  return (h.w * hidden).colwise() + h.b;
}

struct PredictStats {
  int clamped = 0;  // predictions with |theta| >= 90 clamped to 89.9
};

/// Predicted unit gaze directions for a feature batch. A polar pitch at or
/// beyond the pole is clamped to +-89.9 deg and counted instead of failing.
inline Eigen::Matrix3Xd predict_batch(const ModelParams& m,
                                      const Eigen::MatrixXd& x,
                                      PredictStats* stats = nullptr) {
  const Eigen::MatrixXd p = head_angles(m.head, extract(m.extractor, x));
  Eigen::Matrix3Xd out(3, p.cols());
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    double theta = rad2deg(p(0, i));
    if (std::abs(theta) >= 90.0) {
      theta = theta > 0 ? 89.9 : -89.9;
      if (stats) ++stats->clamped;
    }
    out.col(i) = polar_to_vector(PolarGaze{theta, rad2deg(p(1, i))}).v;
  }
  return out;
}

inline UnitGaze predict(const ModelParams& m, const Eigen::VectorXd& x,
                        PredictStats* stats = nullptr) {
  return UnitGaze{predict_batch(m, x, stats).col(0)};
}

/// Mean angular error (degrees) of the model against reference directions.
inline double mean_angular_error(const ModelParams& m, const Eigen::MatrixXd& x,
                                 const Eigen::Matrix3Xd& ref) {
  const Eigen::Matrix3Xd pred = predict_batch(m, x);
  double sum = 0;
  for (Eigen::Index i = 0; i < pred.cols(); ++i)
    sum += angular_error_deg(UnitGaze{pred.col(i)}, UnitGaze{ref.col(i)});
  return sum / static_cast<double>(pred.cols());
}

namespace detail {

/// Surrogate loss and its gradient in the radian (theta, phi) plane for one
/// batch. Returns the mean loss; writes dL/d(theta,phi) into g_angles.
inline double angle_loss_grad(const Eigen::MatrixXd& angles,
                              const Eigen::Matrix3Xd& labels,
                              Eigen::MatrixXd& g_angles) {
  const Eigen::Index n = angles.cols();
  g_angles.resize(2, n);
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = angles(0, i);
    const double f = angles(1, i);
    const double st = std::sin(t), ct = std::cos(t);
    const double sf = std::sin(f), cf = std::cos(f);
    const Vec3 pred(-ct * sf, -st, -ct * cf);
    const Vec3 y = labels.col(i);
    loss += 1.0 - pred.dot(y);
    const Vec3 dpred_dt(st * sf, -ct, st * cf);
    const Vec3 dpred_df(-ct * cf, 0.0, ct * sf);
    g_angles(0, i) = -dpred_dt.dot(y) / static_cast<double>(n);
    g_angles(1, i) = -dpred_df.dot(y) / static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

}  // namespace detail

struct Gradients {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

/// Mean surrogate loss over (x, labels) and its analytic gradient for every
/// parameter. Exposed so tests can diff it against finite differences.
inline double loss_and_gradient(const ModelParams& m, const Eigen::MatrixXd& x,
                                const Eigen::Matrix3Xd& labels, Gradients& g) {
  const Eigen::MatrixXd hidden = extract(m.extractor, x);
  const Eigen::MatrixXd angles = head_angles(m.head, hidden);
  Eigen::MatrixXd g_angles;
  const double loss = detail::angle_loss_grad(angles, labels, g_angles);
  g.w2 = g_angles * hidden.transpose();
  g.b2 = g_angles.rowwise().sum();
  const Eigen::MatrixXd g_hidden = m.head.w.transpose() * g_angles;
  const Eigen::MatrixXd g_pre =
      (g_hidden.array() * (1.0 - hidden.array().square())).matrix();
  g.w1 = g_pre * x.transpose();
  g.b1 = g_pre.rowwise().sum();
  return loss;
}

namespace detail {

inline double full_loss(const ModelParams& m, const Eigen::MatrixXd& x,
                        const Eigen::Matrix3Xd& labels) {
  Eigen::MatrixXd scratch;
  return angle_loss_grad(head_angles(m.head, extract(m.extractor, x)), labels,
                         scratch);
}

/// Joint SGD over extractor and head at rate `lr`. Returns false if an epoch
/// ends with the loss non-finite or far above the starting loss (diverged).
/// Throws NonFiniteLoss when a batch itself produces a non-finite loss.
inline bool sgd_loop(ModelParams& m, const Eigen::MatrixXd& x,
                     const Eigen::Matrix3Xd& labels, const TrainConfig& cfg,
                     double lr) {
  const Eigen::Index n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const double start_loss = full_loss(m, x, labels);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, {stream::kTrain, 1,
                                             static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(order);
    const double epoch_lr =
        cfg.cosine_lr
            ? lr * 0.5 * (1.0 + std::cos(kPi * epoch / std::max(1, cfg.epochs)))
            : lr;

    for (Eigen::Index start = 0, batch = 0; start < n;
         start += cfg.batch_size, ++batch) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(x.rows(), b);
      Eigen::Matrix3Xd yb(3, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        xb.col(i) = x.col(order[static_cast<std::size_t>(start + i)]);
        yb.col(i) = labels.col(order[static_cast<std::size_t>(start + i)]);
      }
      Gradients g;
      const double loss = loss_and_gradient(m, xb, yb, g);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(batch));
      }
      m.extractor.w -= epoch_lr * g.w1;
      m.extractor.b -= epoch_lr * g.b1;
      m.head.w -= epoch_lr * g.w2;
      m.head.b -= epoch_lr * g.b2;
    }
    const double epoch_loss = full_loss(m, x, labels);
    if (!std::isfinite(epoch_loss) || epoch_loss > 2.0 * start_loss + 1e-9)
      return false;
  }
  return true;
}

}  // namespace detail

/// Trains extractor and head jointly from a fresh initialization. A run that
/// diverges at the nominal rate deterministically restarts from the same
/// initialization at a quarter of the rate.
inline ModelParams train_full(const Eigen::MatrixXd& x,
                              const Eigen::Matrix3Xd& labels,
                              const TrainConfig& cfg) {
  Rng init_rng = Rng::stream(cfg.seed, {stream::kTrain, 0});
  ModelParams init;
  init.extractor = init_extractor(static_cast<int>(x.rows()), cfg.hidden_dim, init_rng);
  init.head = init_head(cfg.hidden_dim, init_rng);

  double lr = cfg.learning_rate;
  ModelParams m = init;
  for (int attempt = 0; attempt < 6; ++attempt) {
    m = init;
    if (detail::sgd_loop(m, x, labels, cfg, lr)) return m;
    lr *= 0.25;
  }
  return m;
}

namespace detail {

inline double head_loss(const Head& h, const Eigen::MatrixXd& hidden,
                        const Eigen::Matrix3Xd& labels) {
  Eigen::MatrixXd scratch;
  return angle_loss_grad(head_angles(h, hidden), labels, scratch);
}

/// SGD over the head only, on precomputed hidden activations. Returns false
/// if the run diverged (epoch loss non-finite or far above the start).
inline bool head_sgd(Head& head, const Eigen::MatrixXd& hidden,
                     const Eigen::Matrix3Xd& labels, const TrainConfig& cfg,
                     double lr) {
  const Eigen::Index n = hidden.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const double start_loss = head_loss(head, hidden, labels);

  for (int epoch = 0; epoch < cfg.head_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, {stream::kTrain, 1,
                                             static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(order);
    for (Eigen::Index start = 0, batch = 0; start < n;
         start += cfg.batch_size, ++batch) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd hb(hidden.rows(), b);
      Eigen::Matrix3Xd yb(3, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        hb.col(i) = hidden.col(order[static_cast<std::size_t>(start + i)]);
        yb.col(i) = labels.col(order[static_cast<std::size_t>(start + i)]);
      }
      Eigen::MatrixXd g_angles;
      const double loss = angle_loss_grad(head_angles(head, hb), yb, g_angles);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(batch));
      }
      head.w -= lr * (g_angles * hb.transpose());
      head.b -= lr * g_angles.rowwise().sum();
    }
    const double epoch_loss = head_loss(head, hidden, labels);
    if (!std::isfinite(epoch_loss) || epoch_loss > 2.0 * start_loss + 1e-9)
      return false;  // diverged; caller retries at a smaller rate
  }
  return true;
}

}  // namespace detail

/// Trains a fresh head on top of a frozen extractor; the extractor weights
/// are never touched. Runs cfg.head_epochs epochs on the (fixed) hidden
/// activations. Frozen saturated hidden units can make the nominal rate
/// unstable for some datasets, so a diverging run deterministically restarts
/// from the same initialization at a quarter of the rate.
inline Head train_head(const Extractor& frozen, const Eigen::MatrixXd& x,
                       const Eigen::Matrix3Xd& labels, const TrainConfig& cfg) {
  const Eigen::MatrixXd hidden = extract(frozen, x);
  Rng init_rng = Rng::stream(cfg.seed, {stream::kTrain, 2});
  const Head init = init_head(static_cast<int>(frozen.w.rows()), init_rng);

  double lr = cfg.learning_rate;
  Head head = init;
  for (int attempt = 0; attempt < 6; ++attempt) {
    head = init;
    if (detail::head_sgd(head, hidden, labels, cfg, lr)) return head;
    lr *= 0.25;
  }
  return head;  // best effort at the smallest rate
}

/// Pooled index list with the same number of samples per domain: the size of
/// the smallest one, drawn without replacement from each.
struct PooledIndex {
  int domain = 0;
  int sample = 0;
};

inline std::vector<PooledIndex> resample_balanced(
    const std::vector<const SyntheticDataset*>& datasets, Rng& rng) {
  std::size_t quota = datasets.empty() ? 0 : datasets[0]->samples.size();
  for (const SyntheticDataset* d : datasets)
    quota = std::min(quota, d->samples.size());

  std::vector<PooledIndex> pooled;
  pooled.reserve(quota * datasets.size());
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    std::vector<int> idx(datasets[di]->samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < quota; ++i)
      pooled.push_back({static_cast<int>(di), idx[i]});
  }
  return pooled;
}

/// Feature matrix (columns = samples) of a dataset.
inline Eigen::MatrixXd features_of(const SyntheticDataset& ds) {
  if (ds.samples.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd x(ds.samples[0].features.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = ds.samples[i].features;
  return x;
}

inline Eigen::Matrix3Xd directions_of(const std::vector<UnitGaze>& gazes) {
  Eigen::Matrix3Xd y(3, gazes.size());
  for (std::size_t i = 0; i < gazes.size(); ++i)
    y.col(static_cast<Eigen::Index>(i)) = gazes[i].v;
  return y;
}

}  // namespace gla
