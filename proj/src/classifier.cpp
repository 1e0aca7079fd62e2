#include "bsrkit/classifier.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "binio.hpp"
#include "bsrkit/error.hpp"
#include "bsrkit/hash.hpp"

namespace bsrkit::clf {

namespace {

constexpr std::uint32_t kModelVersion = 1;

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorCode::kNonFinite, std::string(what) + ": non-finite entry");
}

std::size_t argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

}  // namespace

Vector pool(const Matrix& frames) {
  if (frames.rows() == 0 || frames.cols() == 0) {
    throw Error(ErrorCode::kEmptyInput, "pool: empty time axis");
  }
  const Eigen::Index D = frames.cols();
  const auto T = static_cast<double>(frames.rows());
  Vector out(2 * D);
  const Eigen::RowVectorXd mean = frames.colwise().sum() / T;
  for (Eigen::Index d = 0; d < D; ++d) {
    const double var = (frames.col(d).array() - mean(d)).square().sum() / T;
    out(d) = mean(d);
    out(D + d) = std::sqrt(var);
  }
  check_finite(out, "pool");
  return out;
}

Vector pool(const bsr::BitMatrix& bits) {
  if (bits.rows() == 0) throw Error(ErrorCode::kEmptyInput, "pool: empty time axis");
  // Bits are 0/1, so the mean is the fraction of ones and the population
  // variance is mean * (1 - mean).
  std::array<std::size_t, bsr::kWidth> ones{};
  for (std::uint16_t word : bits.packed_rows()) {
    for (std::size_t k = 0; k < bsr::kWidth; ++k) ones[k] += (word >> (bsr::kWidth - 1 - k)) & 1u;
  }
  const auto T = static_cast<double>(bits.rows());
  Vector out(2 * bsr::kWidth);
  for (std::size_t k = 0; k < bsr::kWidth; ++k) {
    const double mean = static_cast<double>(ones[k]) / T;
    out(static_cast<Eigen::Index>(k)) = mean;
    out(static_cast<Eigen::Index>(bsr::kWidth + k)) = std::sqrt(std::max(0.0, mean * (1.0 - mean)));
  }
  return out;
}

Vector pool(const Waveform& wave) {
  const Eigen::Map<const Matrix> m(wave.samples.data(),
                                   static_cast<Eigen::Index>(wave.samples.size()), 1);
  return pool(Matrix(m));
}

Vector SoftmaxModel::standardize(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dims()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects " + std::to_string(dims()) + " inputs, got " + std::to_string(x.size()));
  }
  return ((x - input_mean).array() / input_scale.array()).matrix();
}

Vector SoftmaxModel::logits(const Vector& x) const { return weights * standardize(x) + bias; }

Vector SoftmaxModel::forward(const Vector& x) const { return softmax(logits(x)); }

SoftmaxModel make_model(std::vector<std::string> labels, std::size_t dims) {
  SoftmaxModel m;
  const auto C = static_cast<Eigen::Index>(labels.size());
  const auto D = static_cast<Eigen::Index>(dims);
  m.labels = std::move(labels);
  m.weights = Matrix::Zero(C, D);
  m.bias = Vector::Zero(C);
  m.input_mean = Vector::Zero(D);
  m.input_scale = Vector::Ones(D);
  return m;
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "TrainConfig: " + msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (!(restart_decay > 0.0 && restart_decay <= 1.0)) fail("restart_decay must lie in (0, 1]");
  for (std::size_t i = 0; i < restart_epochs.size(); ++i) {
    if (restart_epochs[i] <= 0) fail("restart epochs must be positive");
    if (i > 0 && restart_epochs[i] <= restart_epochs[i - 1]) fail("restart epochs must be strictly increasing");
  }
}

double sgdr_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw Error(ErrorCode::kInvalidArgument, "sgdr_lr: epoch " + std::to_string(epoch) + " out of range");
  }
  int start = 0;
  int end = cfg.epochs;
  int period = 0;
  for (int boundary : cfg.restart_epochs) {
    if (boundary >= cfg.epochs) break;
    if (epoch >= boundary) {
      start = boundary;
      ++period;
    } else {
      end = boundary;
      break;
    }
  }
  const double peak = cfg.lr0 * std::pow(cfg.restart_decay, period);
  const double progress = static_cast<double>(epoch - start) / static_cast<double>(end - start);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

Gradient cross_entropy_gradient(const SoftmaxModel& model, const Matrix& batch,
                                std::span<const std::size_t> targets) {
  if (static_cast<std::size_t>(batch.rows()) != targets.size() || batch.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient: batch and target sizes differ");
  }
  if (static_cast<std::size_t>(batch.cols()) != model.dims()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient: batch width does not match model");
  }
  const auto B = static_cast<double>(batch.rows());
  Gradient g;
  g.weights = Matrix::Zero(model.weights.rows(), model.weights.cols());
  g.bias = Vector::Zero(model.bias.size());
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const Vector x = model.standardize(batch.row(i).transpose());
    Vector p = softmax(model.weights * x + model.bias);
    const auto y = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
    g.loss -= std::log(std::max(p(y), std::numeric_limits<double>::min()));
    p(y) -= 1.0;
    g.weights.noalias() += p * x.transpose();
    g.bias += p;
  }
  g.weights /= B;
  g.bias /= B;
  g.loss /= B;
  return g;
}

namespace {

struct Encoded {
  Matrix x;
  std::vector<std::size_t> y;
};

Encoded encode(std::span<const LabeledVector> data, const std::vector<std::string>& labels,
               std::size_t dims) {
  Encoded e;
  e.x.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(dims));
  e.y.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<std::size_t>(data[i].x.size()) != dims) {
      throw Error(ErrorCode::kDimensionMismatch, "train: inconsistent input dimensions at '" + data[i].id + "'");
    }
    check_finite(data[i].x, "train");
    auto it = std::lower_bound(labels.begin(), labels.end(), data[i].label);
    if (it == labels.end() || *it != data[i].label) {
      throw Error(ErrorCode::kTraining, "label '" + data[i].label + "' not seen in training data");
    }
    e.y.push_back(static_cast<std::size_t>(it - labels.begin()));
    e.x.row(static_cast<Eigen::Index>(i)) = data[i].x.transpose();
  }
  return e;
}

double accuracy_of(const SoftmaxModel& m, const Encoded& e) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < e.x.rows(); ++i) {
    if (argmax(m.logits(e.x.row(i).transpose())) == e.y[static_cast<std::size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(e.x.rows());
}

}  // namespace

TrainResult train(std::span<const LabeledVector> data, const TrainConfig& cfg,
                  std::span<const LabeledVector> validation) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "train: empty dataset");

  std::vector<std::string> labels;
  for (const auto& s : data) labels.push_back(s.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (labels.size() < 2) {
    throw Error(ErrorCode::kTraining, "train: need at least two classes, got " + std::to_string(labels.size()));
  }

  const auto dims = static_cast<std::size_t>(data.front().x.size());
  const Encoded train_set = encode(data, labels, dims);
  std::optional<Encoded> val_set;
  if (!validation.empty()) val_set = encode(validation, labels, dims);

  TrainResult result;
  SoftmaxModel model = make_model(labels, dims);
  const auto N = static_cast<double>(train_set.x.rows());
  model.input_mean = train_set.x.colwise().sum().transpose() / N;
  for (Eigen::Index d = 0; d < model.input_mean.size(); ++d) {
    const double sd = std::sqrt((train_set.x.col(d).array() - model.input_mean(d)).square().sum() / N);
    model.input_scale(d) = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<std::size_t> all(train_set.y.size());
  std::iota(all.begin(), all.end(), 0);
  auto full_loss = [&](const SoftmaxModel& m) {
    return cross_entropy_gradient(m, train_set.x, train_set.y).loss;
  };
  result.loss_history.push_back(full_loss(model));

  Matrix vel_w = Matrix::Zero(model.weights.rows(), model.weights.cols());
  Vector vel_b = Vector::Zero(model.bias.size());
  std::vector<std::size_t> order = all;
  std::optional<SoftmaxModel> best;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = sgdr_lr(epoch, cfg);
    std::mt19937_64 rng(mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Matrix batch(static_cast<Eigen::Index>(stop - start), train_set.x.cols());
      std::vector<std::size_t> targets;
      for (std::size_t i = start; i < stop; ++i) {
        batch.row(static_cast<Eigen::Index>(i - start)) = train_set.x.row(static_cast<Eigen::Index>(order[i]));
        targets.push_back(train_set.y[order[i]]);
      }
      const Gradient g = cross_entropy_gradient(model, batch, targets);
      vel_w = cfg.momentum * vel_w - lr * g.weights;
      vel_b = cfg.momentum * vel_b - lr * g.bias;
      model.weights += vel_w;
      model.bias += vel_b;
    }

    const double loss = full_loss(model);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kTraining, "train: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(loss);

    if (val_set) {
      const double acc = accuracy_of(model, *val_set);
      if (!result.best_validation_accuracy || acc > *result.best_validation_accuracy) {
        result.best_validation_accuracy = acc;
        result.best_epoch = epoch;
        best = model;
      }
    }
  }
  result.model = best ? std::move(*best) : std::move(model);
  if (!val_set) result.best_epoch = cfg.epochs - 1;
  return result;
}

ScoreMatrix score_dataset(const SoftmaxModel& model, std::span<const LabeledVector> data) {
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "score_dataset: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a].id < data[b].id; });

  ScoreMatrix m;
  m.labels = model.labels;
  m.probs.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(model.classes()));
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& item = data[order[r]];
    m.utt_ids.push_back(item.id);
    m.probs.row(static_cast<Eigen::Index>(r)) = model.forward(item.x).transpose();
  }
  return m;
}

std::vector<std::uint8_t> serialize(const SoftmaxModel& model) {
  detail::ByteWriter w;
  w.bytes("SMX1");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.classes()));
  w.u32(static_cast<std::uint32_t>(model.dims()));
  for (const auto& l : model.labels) w.str(l);
  for (Eigen::Index d = 0; d < model.input_mean.size(); ++d) w.f64(model.input_mean(d));
  for (Eigen::Index d = 0; d < model.input_scale.size(); ++d) w.f64(model.input_scale(d));
  for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.weights.cols(); ++c) w.f64(model.weights(r, c));
  }
  for (Eigen::Index c = 0; c < model.bias.size(); ++c) w.f64(model.bias(c));
  return std::move(w.data());
}

SoftmaxModel deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "SMX1");
  if (!r.magic("SMX1")) throw Error(ErrorCode::kCorruptFile, "SMX1: bad magic");
  const auto version = r.u32();
  if (version != kModelVersion) {
    throw Error(ErrorCode::kCorruptFile, "SMX1: unsupported version " + std::to_string(version));
  }
  const auto classes = r.u32();
  const auto dims = r.u32();
  std::vector<std::string> labels(classes);
  for (auto& l : labels) l = r.str();
  SoftmaxModel m = make_model(std::move(labels), dims);
  for (Eigen::Index d = 0; d < m.input_mean.size(); ++d) m.input_mean(d) = r.f64();
  for (Eigen::Index d = 0; d < m.input_scale.size(); ++d) m.input_scale(d) = r.f64();
  for (Eigen::Index i = 0; i < m.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.weights.cols(); ++j) m.weights(i, j) = r.f64();
  }
  for (Eigen::Index c = 0; c < m.bias.size(); ++c) m.bias(c) = r.f64();
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruptFile, "SMX1: trailing bytes");
  if (!m.weights.allFinite() || !m.bias.allFinite() || !m.input_mean.allFinite() ||
      !(m.input_scale.array() > 0.0).all()) {
    throw Error(ErrorCode::kCorruptFile, "SMX1: invalid parameters");
  }
  return m;
}

void save(const std::filesystem::path& path, const SoftmaxModel& model) {
  detail::write_file(path, serialize(model));
}

SoftmaxModel load(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace bsrkit::clf
