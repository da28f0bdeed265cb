#pragma once

// Continuous, differentiable regressors of the RULA score and the REBA
// Table C score: fully connected ReLU networks trained with mean squared error
// on the integer worksheet labels.

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <vector>

#include "ergokit/artifact.hpp"
#include "ergokit/datagen.hpp"
#include "ergokit/rules.hpp"

namespace ergokit {

inline constexpr int kModelVersion = 1;

// Task-parameter block appended after the joint angles, in this order.
inline constexpr std::string_view kEncodingOrder =
    "q1..qn;load_kg/15;motion_frequency/10;load_type[static,intermittent,repeated,shock];"
    "coupling[good,fair,poor,unacceptable];arm_supported;legs_supported;static;repeated;rapid";
inline constexpr std::size_t kTaskParamWidth = 15;

inline std::size_t encoded_width(BodyMode mode, bool task_params) {
  return joint_count(mode) + (task_params ? kTaskParamWidth : 0);
}

template <typename Out>
inline void encode_into(const Posture& q, const TaskContext& ctx, bool task_params, Out&& x) {
  const std::size_t n = q.size();
  for (std::size_t j = 0; j < n; ++j) x[static_cast<Eigen::Index>(j)] = q[j];
  if (!task_params) return;
  auto at = [&](std::size_t k) -> decltype(auto) { return x[static_cast<Eigen::Index>(n + k)]; };
  for (std::size_t k = 0; k < kTaskParamWidth; ++k) at(k) = 0.0;
  at(0) = ctx.load_kg / kMaxLoadKg;
  at(1) = ctx.motion_frequency / kMaxMotionFrequency;
  at(2 + static_cast<std::size_t>(ctx.load_type)) = 1.0;
  at(6 + static_cast<std::size_t>(ctx.coupling)) = 1.0;
  at(10) = ctx.arm_supported;
  at(11) = ctx.legs_supported;
  at(12) = ctx.posture_static_over_1min;
  at(13) = ctx.repeated_4x_per_min;
  at(14) = ctx.rapid_large_range_change;
}

struct ModelSpec {
  Scheme scheme = Scheme::Rula;  // Rula or RebaTableC
  bool task_params = true;
  std::vector<int> hidden = {124, 124, 124, 7};

  static ModelSpec for_scheme(Scheme s, bool task_params = true) {
    ModelSpec m;
    m.scheme = s == Scheme::Reba ? Scheme::RebaTableC : s;
    m.task_params = task_params;
    m.hidden = {124, 124, 124, m.scheme == Scheme::Rula ? 7 : 12};
    return m;
  }

  BodyMode mode() const { return scheme_mode(scheme); }
  int input_width() const { return static_cast<int>(encoded_width(mode(), task_params)); }
  int last_width() const { return scheme == Scheme::Rula ? 7 : 12; }

  // Layer widths including input and the scalar output.
  std::vector<int> layer_widths() const {
    std::vector<int> w{input_width()};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(1);
    return w;
  }

  void validate() const {
    if (scheme == Scheme::Reba) fail(ErrorKind::Config, "surrogates regress REBA Table C; use scheme reba-table-c");
    if (hidden.empty()) fail(ErrorKind::Config, "model needs at least one hidden layer");
    for (int w : hidden)
      if (w <= 0) fail(ErrorKind::Config, "layer widths must be positive");
    if (hidden.back() != last_width())
      fail(ErrorKind::Config, "last hidden layer must have " + std::to_string(last_width()) + " units for " +
                                  std::string(to_string(scheme)));
  }

  bool operator==(const ModelSpec&) const = default;
};

inline Vec encode_input(const Posture& q, const TaskContext& ctx, const ModelSpec& spec) {
  if (q.mode != spec.mode())
    fail(ErrorKind::Mode, "posture is " + std::string(to_string(q.mode)) + "-body but the model expects " +
                              std::string(to_string(spec.mode())) + "-body");
  q.validate();
  Vec x(spec.input_width());
  encode_into(q, ctx, spec.task_params, x);
  return x;
}

struct TrainingMeta {
  int epochs = 0;
  double learning_rate = 0.0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::string optimizer;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
};

struct SurrogateModel {
  ModelSpec spec;
  std::vector<Mat> weights;  // weights[l] is (out x in)
  std::vector<Vec> biases;
  TrainingMeta meta;

  std::size_t layers() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  void validate() const {
    spec.validate();
    const auto w = spec.layer_widths();
    if (weights.size() != w.size() - 1 || biases.size() != w.size() - 1)
      fail(ErrorKind::Input, "model layer count does not match its spec");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != w[l + 1] || weights[l].cols() != w[l] || biases[l].size() != w[l + 1])
        fail(ErrorKind::Input, "model layer " + std::to_string(l) + " has inconsistent shape");
      if (!weights[l].allFinite() || !biases[l].allFinite()) fail(ErrorKind::Input, "model parameters must be finite");
    }
  }

  // Fan-in scaled uniform initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static SurrogateModel initialize(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    SurrogateModel m;
    m.spec = spec;
    Rng rng(derive_seed(seed, "init"));
    const auto w = spec.layer_widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
      Mat W(w[l + 1], w[l]);
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
      Vec b(w[l + 1]);
      for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = rng.uniform(-bound, bound);
      m.weights.push_back(std::move(W));
      m.biases.push_back(std::move(b));
    }
    return m;
  }

  // Batched evaluation: columns of X are encoded inputs. Returns one value per column.
  Vec evaluate_batch(const Mat& X) const {
    Mat a = X;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Mat z = weights[l] * a;
      z.colwise() += biases[l];
      if (l + 1 < weights.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a.row(0).transpose();
  }

  double evaluate(const Vec& x) const {
    Vec a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Vec z = weights[l] * a + biases[l];
      if (l + 1 < weights.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a[0];
  }

  // Value and gradient with respect to the full encoded input.
  double evaluate_with_input_gradient(const Vec& x, Vec& grad) const {
    std::vector<Vec> pre;
    pre.reserve(weights.size());
    Vec a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Vec z = weights[l] * a + biases[l];
      pre.push_back(z);
      a = l + 1 < weights.size() ? Vec(z.cwiseMax(0.0)) : z;
    }
    Vec delta = Vec::Ones(1);
    for (std::size_t l = weights.size(); l-- > 0;) {
      if (l + 1 < weights.size()) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
      delta = weights[l].transpose() * delta;
    }
    grad = std::move(delta);
    return a[0];
  }

  // Pre-activations of every hidden unit, concatenated.
  Vec hidden_preactivations(const Vec& x) const {
    std::vector<Vec> pre;
    Vec a = x;
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < weights.size(); ++l) {
      Vec z = weights[l] * a + biases[l];
      total += z.size();
      pre.push_back(z);
      a = z.cwiseMax(0.0);
    }
    Vec out(total);
    Eigen::Index off = 0;
    for (const auto& z : pre) {
      out.segment(off, z.size()) = z;
      off += z.size();
    }
    return out;
  }
};

inline double forward(const SurrogateModel& m, const Posture& q, const TaskContext& ctx) {
  return m.evaluate(encode_input(q, ctx, m.spec));
}

// d forward / d posture, one entry per joint (score per radian).
inline Vec grad_wrt_posture(const SurrogateModel& m, const Posture& q, const TaskContext& ctx, double* value = nullptr) {
  Vec g;
  const double v = m.evaluate_with_input_gradient(encode_input(q, ctx, m.spec), g);
  if (value) *value = v;
  return g.head(static_cast<Eigen::Index>(q.size()));
}

// Nearest integer (halves away from zero), clamped to the scheme range.
inline int round_score(double value, Scheme scheme) {
  const auto r = score_range(scheme);
  const double rounded = std::round(value);
  if (!(rounded >= r.lo)) return r.lo;
  if (rounded > r.hi) return r.hi;
  return static_cast<int>(rounded);
}

inline DiscreteScore rounded_score(const SurrogateModel& m, const Posture& q, const TaskContext& ctx) {
  return {round_score(forward(m, q, ctx), m.spec.scheme), m.spec.scheme};
}

// Encoded inputs as columns, and labels.
inline Mat encode_samples(const std::vector<LabeledSample>& samples, const ModelSpec& spec) {
  Mat X(spec.input_width(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].posture.mode != spec.mode()) fail(ErrorKind::Mode, "sample posture mode does not match the model");
    encode_into(samples[i].posture, samples[i].ctx, spec.task_params, X.col(static_cast<Eigen::Index>(i)));
  }
  return X;
}

inline Vec sample_labels(const std::vector<LabeledSample>& samples) {
  Vec y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) y[static_cast<Eigen::Index>(i)] = samples[i].label.value;
  return y;
}

// Evaluates the columns of X in chunks to bound memory.
inline Vec predict_encoded(const SurrogateModel& m, const Mat& X, Eigen::Index chunk = 4096) {
  Vec out(X.cols());
  for (Eigen::Index s = 0; s < X.cols(); s += chunk) {
    const Eigen::Index e = std::min(X.cols(), s + chunk);
    out.segment(s, e - s) = m.evaluate_batch(X.middleCols(s, e - s));
  }
  return out;
}

inline Vec predict(const SurrogateModel& m, const std::vector<LabeledSample>& samples) {
  return predict_encoded(m, encode_samples(samples, m.spec));
}

// Mean squared error against the integer labels.
inline double loss(const SurrogateModel& m, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) fail(ErrorKind::Input, "loss of an empty sample set");
  const Vec r = predict(m, samples) - sample_labels(samples);
  return r.squaredNorm() / static_cast<double>(samples.size());
}

struct AccuracyReport {
  double accuracy = 0.0;
  int lo = 1;
  Mat confusion;         // row = label, column = rounded prediction, row-normalized
  Eigen::MatrixXi counts;  // raw counts

  double min_diagonal() const {
    double m = 1.0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i)
      if (counts.row(i).sum() > 0) m = std::min(m, confusion(i, i));
    return m;
  }
};

inline AccuracyReport accuracy_from_predictions(const Vec& pred, const std::vector<LabeledSample>& samples, Scheme scheme) {
  const auto r = score_range(scheme);
  const int k = r.hi - r.lo + 1;
  AccuracyReport rep;
  rep.lo = r.lo;
  rep.counts = Eigen::MatrixXi::Zero(k, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int y = samples[i].label.value;
    const int p = round_score(pred[static_cast<Eigen::Index>(i)], scheme);
    rep.counts(y - r.lo, p - r.lo) += 1;
    hits += (y == p);
  }
  rep.accuracy = samples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(samples.size());
  rep.confusion = Mat::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    const int row = rep.counts.row(i).sum();
    if (row > 0) rep.confusion.row(i) = rep.counts.row(i).cast<double>() / row;
  }
  return rep;
}

inline AccuracyReport accuracy(const SurrogateModel& m, const std::vector<LabeledSample>& samples) {
  return accuracy_from_predictions(predict(m, samples), samples, m.spec.scheme);
}

// Upper bound on the Lipschitz constant (product of layer spectral norms; ReLU is 1-Lipschitz).
inline double lipschitz_bound(const SurrogateModel& m) {
  double L = 1.0;
  for (const auto& W : m.weights) {
    Eigen::JacobiSVD<Mat> svd(W);
    L *= svd.singularValues()[0];
  }
  return L;
}

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 1024;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;  // sgd only
  bool cosine_decay = false;

  void validate() const {
    if (epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "learning rate must be > 0");
    if (batch_size < 1) fail(ErrorKind::Config, "batch size must be >= 1");
  }
};

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  fail(ErrorKind::Config, "unknown optimizer '" + std::string(s) + "'");
}

struct TrainResult {
  SurrogateModel model;
  std::vector<double> train_loss;  // per epoch, mean over mini-batches
  std::vector<double> val_loss;    // per epoch, empty without validation data
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss, const SurrogateModel&)>;

// Mini-batch training on encoded inputs (columns of X) and real targets y.
// Xv/yv may be empty, in which case no validation loss is recorded.
inline TrainResult fit(const Mat& X, const Vec& y, const Mat& Xv, const Vec& yv, const ModelSpec& spec,
                       const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (X.cols() == 0) fail(ErrorKind::Input, "training set is empty");
  if (X.cols() != y.size() || Xv.cols() != yv.size()) fail(ErrorKind::Input, "input and target counts differ");
  if (X.rows() != spec.input_width() || (Xv.cols() > 0 && Xv.rows() != spec.input_width()))
    fail(ErrorKind::Input, "encoded input width does not match the model");
  TrainResult res;
  SurrogateModel& m = res.model;
  m = SurrogateModel::initialize(spec, cfg.seed);
  const auto N = static_cast<std::size_t>(X.cols());
  const std::size_t L = m.layers();

  std::vector<Mat> mW(L), vW(L);
  std::vector<Vec> mb(L), vb(L);
  for (std::size_t l = 0; l < L; ++l) {
    mW[l] = Mat::Zero(m.weights[l].rows(), m.weights[l].cols());
    vW[l] = mW[l];
    mb[l] = Vec::Zero(m.biases[l].size());
    vb[l] = mb[l];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;

  Rng order_rng(derive_seed(cfg.seed, "batches"));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Mat> acts(L + 1), pre(L);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.cosine_decay
                          ? 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / cfg.epochs))
                          : cfg.learning_rate;
    shuffle_in_place(order, order_rng);
    double sse = 0.0;
    for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t B = std::min(N - start, static_cast<std::size_t>(cfg.batch_size));
      Mat& A0 = acts[0];
      A0.resize(X.rows(), static_cast<Eigen::Index>(B));
      Vec yb(static_cast<Eigen::Index>(B));
      for (std::size_t k = 0; k < B; ++k) {
        A0.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(order[start + k]));
        yb[static_cast<Eigen::Index>(k)] = y[static_cast<Eigen::Index>(order[start + k])];
      }
      for (std::size_t l = 0; l < L; ++l) {
        pre[l].noalias() = m.weights[l] * acts[l];
        pre[l].colwise() += m.biases[l];
        acts[l + 1] = l + 1 < L ? Mat(pre[l].cwiseMax(0.0)) : pre[l];
      }
      const Vec resid = acts[L].row(0).transpose() - yb;
      sse += resid.squaredNorm();
      Mat delta = (2.0 / static_cast<double>(B)) * resid.transpose();
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = L; l-- > 0;) {
        if (l + 1 < L) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
        const Mat gW = delta * acts[l].transpose();
        const Vec gb = delta.rowwise().sum();
        if (l > 0) delta = m.weights[l].transpose() * delta;
        if (cfg.optimizer == OptimizerKind::Adam) {
          mW[l] = beta1 * mW[l] + (1 - beta1) * gW;
          vW[l] = beta2 * vW[l] + (1 - beta2) * gW.cwiseAbs2();
          mb[l] = beta1 * mb[l] + (1 - beta1) * gb;
          vb[l] = beta2 * vb[l] + (1 - beta2) * gb.cwiseAbs2();
          m.weights[l].array() -= lr * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + eps);
          m.biases[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
        } else {
          mW[l] = cfg.momentum * mW[l] + gW;
          mb[l] = cfg.momentum * mb[l] + gb;
          m.weights[l] -= lr * mW[l];
          m.biases[l] -= lr * mb[l];
        }
      }
    }
    const double train_loss = sse / static_cast<double>(N);
    if (!std::isfinite(train_loss))
      fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
    res.train_loss.push_back(train_loss);
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (Xv.cols() > 0) {
      val_loss = (predict_encoded(m, Xv) - yv).squaredNorm() / static_cast<double>(Xv.cols());
      res.val_loss.push_back(val_loss);
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss, m);
  }
  m.meta = {cfg.epochs,       cfg.learning_rate, cfg.batch_size, cfg.seed, std::string(to_string(cfg.optimizer)),
            res.train_loss.back(), res.val_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : res.val_loss.back()};
  return res;
}

inline TrainResult train(const std::vector<LabeledSample>& train_set, const std::vector<LabeledSample>& val_set,
                         const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  spec.validate();
  if (train_set.empty()) fail(ErrorKind::Input, "training set is empty");
  const Mat Xv = val_set.empty() ? Mat(spec.input_width(), 0) : encode_samples(val_set, spec);
  const Vec yv = val_set.empty() ? Vec(0) : sample_labels(val_set);
  return fit(encode_samples(train_set, spec), sample_labels(train_set), Xv, yv, spec, cfg, on_epoch);
}

// k-fold cross-validation accuracy of one architecture.
inline std::vector<double> cross_validate(const std::vector<LabeledSample>& samples, const ModelSpec& spec,
                                          const TrainConfig& cfg, int folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorKind::Config, "cross-validation needs at least 2 folds");
  if (samples.size() < static_cast<std::size_t>(folds)) fail(ErrorKind::Input, "fewer samples than folds");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "folds"));
  shuffle_in_place(idx, rng);
  std::vector<double> acc;
  for (int f = 0; f < folds; ++f) {
    std::vector<LabeledSample> tr, te;
    for (std::size_t k = 0; k < idx.size(); ++k)
      (static_cast<int>(k % static_cast<std::size_t>(folds)) == f ? te : tr).push_back(samples[idx[k]]);
    acc.push_back(accuracy(train(tr, {}, spec, cfg).model, te).accuracy);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Persistence: text header terminated by "---\n", then the parameters as
// little-endian IEEE-754 doubles, layer by layer: W row-major, then b.

namespace model_io {

inline void put_le(std::ostream& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::Format, "model file is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline std::string widths_string(const std::vector<int>& w) {
  std::string s;
  for (int x : w) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

}  // namespace model_io

inline void save_model(std::ostream& out, const SurrogateModel& m, const std::string& command = "train",
                       const std::string& config = "") {
  m.validate();
  Header h("ergokit-model", kModelVersion);
  stamp_provenance(h, command, config, m.meta.seed);
  h.set("scheme", std::string(to_string(m.spec.scheme)));
  h.set("mode", std::string(to_string(m.spec.mode())));
  h.set("task_params", m.spec.task_params ? "1" : "0");
  h.set("layers", model_io::widths_string(m.spec.layer_widths()));
  h.set("activation", "relu");
  h.set("encoding", std::string(kEncodingOrder));
  h.set("epochs", std::to_string(m.meta.epochs));
  h.set("learning_rate", format_exact(m.meta.learning_rate));
  h.set("batch_size", std::to_string(m.meta.batch_size));
  h.set("optimizer", m.meta.optimizer);
  h.set("final_train_loss", format_exact(m.meta.final_train_loss));
  h.set("final_val_loss", format_exact(m.meta.final_val_loss));
  h.set("parameters", std::to_string(m.parameter_count()));
  h.set("byte_order", "little");
  h.write(out);
  for (std::size_t l = 0; l < m.layers(); ++l) {
    const Mat& W = m.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) model_io::put_le(out, W(r, c));
    for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) model_io::put_le(out, m.biases[l][r]);
  }
}

inline void save_model(const std::string& path, const SurrogateModel& m, const std::string& command = "train",
                       const std::string& config = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write model " + path);
  save_model(out, m, command, config);
}

inline SurrogateModel load_model(std::istream& in, const std::optional<ModelSpec>& expected = std::nullopt) {
  const Header h = Header::read(in, "ergokit-model", kModelVersion);
  SurrogateModel m;
  m.spec.scheme = parse_scheme(h.get("scheme"));
  m.spec.task_params = h.get("task_params") == "1";
  const auto widths = split_view(h.get("layers"), ',');
  if (widths.size() < 3) fail(ErrorKind::Format, "model: malformed layer list");
  m.spec.hidden.clear();
  for (std::size_t i = 1; i + 1 < widths.size(); ++i) m.spec.hidden.push_back(static_cast<int>(parse_int(widths[i])));
  if (parse_int(widths.front()) != m.spec.input_width() || parse_int(widths.back()) != 1)
    fail(ErrorKind::Format, "model: layer list inconsistent with scheme/encoding");
  if (h.get("encoding") != kEncodingOrder) fail(ErrorKind::Version, "model: unsupported input encoding");
  m.spec.validate();
  if (expected && !(*expected == m.spec))
    fail(ErrorKind::Version, "model spec (" + std::string(to_string(m.spec.scheme)) + ", layers " + h.get("layers") +
                                 ") does not match the expected spec");
  m.meta.epochs = static_cast<int>(parse_int(h.get("epochs")));
  m.meta.learning_rate = parse_double(h.get("learning_rate"));
  m.meta.batch_size = static_cast<int>(parse_int(h.get("batch_size")));
  m.meta.seed = std::stoull(h.get("seed"));
  m.meta.optimizer = h.get("optimizer");
  m.meta.final_train_loss = parse_double(h.get("final_train_loss"));
  m.meta.final_val_loss = h.get("final_val_loss") == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                                             : parse_double(h.get("final_val_loss"));
  const auto w = m.spec.layer_widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    Mat W(w[l + 1], w[l]);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = model_io::get_le(in);
    Vec b(w[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = model_io::get_le(in);
    m.weights.push_back(std::move(W));
    m.biases.push_back(std::move(b));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Format, "model file has trailing bytes");
  m.validate();
  return m;
}

inline SurrogateModel load_model(const std::string& path, const std::optional<ModelSpec>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open model " + path);
  return load_model(in, expected);
}

}  // namespace ergokit
