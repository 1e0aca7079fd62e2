#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsrkit/audio.hpp"
#include "bsrkit/bsr.hpp"
#include "bsrkit/matrix.hpp"
#include "bsrkit/score_matrix.hpp"

namespace bsrkit::clf {

/// Per-dimension mean followed by per-dimension population standard
/// deviation over the time axis (rows). Length 2 * frames.cols().
Vector pool(const Matrix& frames);
/// Pools the 16 bit-pulse channels: 32 values.
Vector pool(const bsr::BitMatrix& bits);
/// Pools a raw waveform as a single channel: 2 values.
Vector pool(const Waveform& wave);

/// Linear softmax over standardized pooled vectors:
/// p = softmax(W * ((x - input_mean) / input_scale) + b).
struct SoftmaxModel {
  std::vector<std::string> labels;
  Matrix weights;  // classes x dims
  Vector bias;     // classes
  Vector input_mean;
  Vector input_scale;

  std::size_t classes() const { return labels.size(); }
  std::size_t dims() const { return static_cast<std::size_t>(weights.cols()); }

  Vector standardize(const Vector& x) const;
  Vector logits(const Vector& x) const;
  Vector forward(const Vector& x) const;
};

/// Zero weights and bias, identity standardization.
SoftmaxModel make_model(std::vector<std::string> labels, std::size_t dims);

/// Max-subtracted softmax.
Vector softmax(const Vector& logits);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double momentum = 0.9;
  double lr0 = 0.05;
  std::vector<int> restart_epochs{5, 15, 35, 75, 155};
  double restart_decay = 0.76;
  std::uint64_t seed = 0;

  /// Throws Error(kConfig) when a field is out of range.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Cosine-annealed warm restarts. Period k (between consecutive restart
/// boundaries, with 0 and epochs as outer bounds) starts at
/// lr0 * restart_decay^k and decays towards 0.
double sgdr_lr(int epoch, const TrainConfig& cfg);

struct Gradient {
  Matrix weights;
  Vector bias;
  double loss = 0.0;
};

/// Mean cross-entropy over the batch and its analytic gradient with respect
/// to weights and bias. Rows of batch are raw (unstandardized) inputs.
Gradient cross_entropy_gradient(const SoftmaxModel& model, const Matrix& batch,
                                std::span<const std::size_t> targets);

struct LabeledVector {
  std::string id;
  std::string label;
  Vector x;
};

struct TrainResult {
  SoftmaxModel model;
  /// Mean training loss before training (index 0) and after each epoch.
  std::vector<double> loss_history;
  std::optional<double> best_validation_accuracy;
  int best_epoch = -1;
};

/// Momentum SGD with the SGDR schedule. With a validation set the model from
/// the epoch of highest validation accuracy is returned (earliest on ties).
/// Throws Error(kTraining) on a single-class set or a non-finite loss.
TrainResult train(std::span<const LabeledVector> data, const TrainConfig& cfg,
                  std::span<const LabeledVector> validation = {});

/// One probability row per utterance ordered by id; columns follow the
/// model's label order.
ScoreMatrix score_dataset(const SoftmaxModel& model, std::span<const LabeledVector> data);

/// "SMX1" container: magic, u32 version, u32 classes, u32 dims, labels, then
/// little-endian f64 input mean, input scale, weights (row-major) and bias.
std::vector<std::uint8_t> serialize(const SoftmaxModel& model);
SoftmaxModel deserialize(std::span<const std::uint8_t> bytes);
void save(const std::filesystem::path& path, const SoftmaxModel& model);
SoftmaxModel load(const std::filesystem::path& path);

}  // namespace bsrkit::clf
