#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "bsrkit/audio.hpp"
#include "bsrkit/matrix.hpp"

namespace bsrkit::spectral {

struct FrameConfig {
  std::uint32_t sample_rate = kSampleRate;
  double window_len = 0.025;  // seconds
  double hop = 0.01;          // seconds
  std::size_t fft_size = 512;
  double preemphasis = 0.97;
  std::size_t n_mels = 39;
  std::size_t n_ceps = 12;
  double mel_fmin = 0.0;
  double mel_fmax = 8000.0;
  int delta_window = 2;
  double log_floor = 1e-10;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  /// Throws Error(kConfig) when any field is out of range.
  void validate() const;

  bool operator==(const FrameConfig&) const = default;
};

enum class FeatureKind : std::uint8_t { kFbank = 0, kMfcc = 1, kRaw = 2 };

const char* kind_name(FeatureKind kind) noexcept;

struct FeatureMatrix {
  Matrix values;  // frames x dims
  FeatureKind kind = FeatureKind::kFbank;
  std::vector<double> frame_times;  // start time of each frame, seconds

  std::size_t frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(values.cols()); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// y[0] = x[0], y[t] = x[t] - alpha * x[t-1]; alpha in [0, 1).
std::vector<double> preemphasize(std::span<const double> x, double alpha);
Waveform preemphasize(const Waveform& w, double alpha);

std::size_t frame_count(std::size_t n_samples, std::size_t window, std::size_t hop);

/// Hamming-windowed frames, one per row. Frame count is
/// 1 + ceil((N - win) / hop); the last frame is zero-padded.
Matrix frame_signal(std::span<const double> x, const FrameConfig& cfg);

/// |DFT|^2 / fft_size for bins 0..fft_size/2 of a zero-padded real frame.
std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size);

/// Triangular filters on the HTK mel scale, n_mels x (fft_size/2 + 1),
/// each with a single unit peak at its center bin.
Matrix mel_filterbank(const FrameConfig& cfg);

/// Bin index of each filter's center (length n_mels).
std::vector<std::size_t> mel_center_bins(const FrameConfig& cfg);

/// Orthonormal DCT-II basis, row k = coefficient k.
Matrix dct_matrix(std::size_t n);

/// Regression deltas over +-half_window frames with edge replication.
Matrix deltas(const Matrix& statics, int half_window);

/// Stacks statics, deltas and double deltas side by side.
Matrix with_deltas(const Matrix& statics, int half_window);

/// Shared, immutable per-config state (window, filterbank, DCT basis).
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FrameConfig cfg = {});

  const FrameConfig& config() const noexcept { return cfg_; }
  const Matrix& filterbank() const noexcept { return filterbank_; }
  const Matrix& dct() const noexcept { return dct_; }

  /// frames x (n_mels + 1): floored log mel energies followed by the
  /// floored log frame energy.
  Matrix log_mel_energy(const Waveform& w) const;

  /// frames x 3 * (n_mels + 1); 99 x 120 for a canonical clip.
  FeatureMatrix fbank(const Waveform& w) const;

  /// frames x 3 * (n_ceps + 1); 99 x 39 for a canonical clip.
  FeatureMatrix mfcc(const Waveform& w) const;

  /// c1..c_{n_ceps} of the log mel columns with the energy column appended.
  Matrix mfcc_statics(const Matrix& log_mel_energy) const;

 private:
  FeatureMatrix finish(Matrix statics, FeatureKind kind) const;

  FrameConfig cfg_;
  Matrix filterbank_;
  Matrix dct_;
};

FeatureMatrix fbank(const Waveform& w, const FrameConfig& cfg = {});
FeatureMatrix mfcc(const Waveform& w, const FrameConfig& cfg = {});

/// Raw samples as a T x 1 feature.
FeatureMatrix raw_feature(const Waveform& w);

/// "FEA1" container: magic, kind byte, u32 frames, u32 dims, then LE float32
/// values row-major.
std::vector<std::uint8_t> serialize(const FeatureMatrix& m);
FeatureMatrix deserialize(std::span<const std::uint8_t> bytes);
void save(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix load(const std::filesystem::path& path);
void write_csv(std::ostream& out, const FeatureMatrix& m);

}  // namespace bsrkit::spectral
