#include "bsrkit/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>

#include "binio.hpp"
#include "bsrkit/error.hpp"

namespace bsrkit::spectral {

namespace {

// FFTW planning is not thread safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<double> power(std::span<const double> frame) {
    std::fill(in_, in_ + n_, 0.0);
    std::copy(frame.begin(), frame.end(), in_);
    fftw_execute(plan_);
    std::vector<double> out(n_ / 2 + 1);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = (out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]) * scale;
    }
    return out;
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

RealFft& fft_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

std::vector<std::size_t> mel_edge_bins(const FrameConfig& cfg) {
  const double lo = hz_to_mel(cfg.mel_fmin);
  const double hi = hz_to_mel(cfg.mel_fmax);
  const std::size_t points = cfg.n_mels + 2;
  std::vector<std::size_t> bins(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double mel = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    const double hz = mel_to_hz(mel);
    bins[i] = static_cast<std::size_t>(std::floor(static_cast<double>(cfg.fft_size + 1) * hz /
                                                  static_cast<double>(cfg.sample_rate)));
  }
  for (std::size_t i = 1; i < points; ++i) {
    if (bins[i] <= bins[i - 1]) {
      throw Error(ErrorCode::kConfig,
                  "mel_filterbank: degenerate band edges (filters " + std::to_string(i - 1) +
                      " and " + std::to_string(i) + " share FFT bin " +
                      std::to_string(bins[i]) + ")");
    }
  }
  return bins;
}

}  // namespace

std::size_t FrameConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(window_len * sample_rate));
}

std::size_t FrameConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(hop * sample_rate));
}

void FrameConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "FrameConfig: " + msg); };
  if (sample_rate == 0) fail("sample_rate must be positive");
  if (window_samples() == 0 || hop_samples() == 0) fail("window and hop must cover >= 1 sample");
  if (window_samples() > fft_size) fail("window longer than fft_size");
  if (fft_size < 2 || fft_size % 2 != 0) fail("fft_size must be even");
  if (!(preemphasis >= 0.0 && preemphasis < 1.0)) fail("preemphasis must lie in [0, 1)");
  if (n_mels == 0) fail("n_mels must be positive");
  if (n_ceps + 1 > n_mels) fail("n_ceps must be below n_mels");
  if (!(mel_fmin >= 0.0 && mel_fmin < mel_fmax && mel_fmax <= sample_rate / 2.0)) {
    fail("need 0 <= mel_fmin < mel_fmax <= sample_rate/2");
  }
  if (delta_window < 1) fail("delta_window must be >= 1");
  if (!(log_floor > 0.0)) fail("log_floor must be positive");
}

const char* kind_name(FeatureKind kind) noexcept {
  switch (kind) {
    case FeatureKind::kFbank: return "fbank";
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kRaw: return "raw";
  }
  return "fbank";
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> preemphasize(std::span<const double> x, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "preemphasize: alpha must lie in [0, 1)");
  }
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) y[t] = x[t] - alpha * x[t - 1];
  return y;
}

Waveform preemphasize(const Waveform& w, double alpha) {
  Waveform out = w;
  out.samples = preemphasize(std::span<const double>(w.samples), alpha);
  return out;
}

std::size_t frame_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (n_samples < window) {
    throw Error(ErrorCode::kInvalidArgument,
                "clip of " + std::to_string(n_samples) + " samples shorter than window of " +
                    std::to_string(window));
  }
  return 1 + (n_samples - window + hop - 1) / hop;
}

Matrix frame_signal(std::span<const double> x, const FrameConfig& cfg) {
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t n = frame_count(x.size(), win, hop);
  const auto window = hamming(win);
  Matrix frames = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(win));
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t start = f * hop;
    const std::size_t avail = std::min(win, x.size() - start);
    for (std::size_t i = 0; i < avail; ++i) {
      frames(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) = x[start + i] * window[i];
    }
  }
  return frames;
}

std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size) {
  if (frame.size() > fft_size) {
    throw Error(ErrorCode::kInvalidArgument, "power_spectrum: frame longer than fft_size");
  }
  return fft_for(fft_size).power(frame);
}

std::vector<std::size_t> mel_center_bins(const FrameConfig& cfg) {
  auto edges = mel_edge_bins(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(const FrameConfig& cfg) {
  if (!(cfg.mel_fmin < cfg.mel_fmax && cfg.mel_fmax <= cfg.sample_rate / 2.0)) {
    throw Error(ErrorCode::kConfig, "mel_filterbank: need mel_fmin < mel_fmax <= sample_rate/2");
  }
  const auto edges = mel_edge_bins(cfg);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_mels), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const auto left = static_cast<double>(edges[m]);
    const auto center = static_cast<double>(edges[m + 1]);
    const auto right = static_cast<double>(edges[m + 2]);
    for (std::size_t k = edges[m]; k <= edges[m + 2] && k < bins; ++k) {
      const auto kk = static_cast<double>(k);
      const double w = kk <= center ? (kk - left) / (center - left) : (right - kk) / (right - center);
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

Matrix dct_matrix(std::size_t n) {
  Matrix d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto N = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
    for (std::size_t i = 0; i < n; ++i) {
      d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (2.0 * static_cast<double>(i) + 1.0) / (2.0 * N));
    }
  }
  return d;
}

Matrix deltas(const Matrix& statics, int half_window) {
  if (half_window < 1) throw Error(ErrorCode::kInvalidArgument, "deltas: half window must be >= 1");
  const Eigen::Index T = statics.rows();
  if (T < 1) throw Error(ErrorCode::kEmptyInput, "deltas: no frames");
  double denom = 0.0;
  for (int n = 1; n <= half_window; ++n) denom += 2.0 * n * n;
  Matrix out = Matrix::Zero(T, statics.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int n = 1; n <= half_window; ++n) {
      const Eigen::Index fwd = std::min<Eigen::Index>(t + n, T - 1);
      const Eigen::Index back = std::max<Eigen::Index>(t - n, 0);
      out.row(t) += n * (statics.row(fwd) - statics.row(back));
    }
  }
  out /= denom;
  return out;
}

Matrix with_deltas(const Matrix& statics, int half_window) {
  const Matrix d1 = deltas(statics, half_window);
  const Matrix d2 = deltas(d1, half_window);
  Matrix out(statics.rows(), statics.cols() * 3);
  out << statics, d1, d2;
  return out;
}

FeatureExtractor::FeatureExtractor(FrameConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  filterbank_ = mel_filterbank(cfg_);
  dct_ = dct_matrix(cfg_.n_mels);
}

Matrix FeatureExtractor::log_mel_energy(const Waveform& w) const {
  if (w.sample_rate != cfg_.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature extraction expects " + std::to_string(cfg_.sample_rate) + " Hz input, got " +
                    std::to_string(w.sample_rate));
  }
  const auto emphasized = preemphasize(std::span<const double>(w.samples), cfg_.preemphasis);
  const Matrix frames = frame_signal(emphasized, cfg_);
  const auto n_mels = static_cast<Eigen::Index>(cfg_.n_mels);

  Matrix out(frames.rows(), n_mels + 1);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    const auto ps = power_spectrum(std::span<const double>(frames.row(f).data(),
                                                           static_cast<std::size_t>(frames.cols())),
                                   cfg_.fft_size);
    const Eigen::Map<const Vector> spec(ps.data(), static_cast<Eigen::Index>(ps.size()));
    const Vector mel = filterbank_ * spec;
    for (Eigen::Index m = 0; m < n_mels; ++m) out(f, m) = std::log(std::max(mel(m), cfg_.log_floor));
    out(f, n_mels) = std::log(std::max(spec.sum(), cfg_.log_floor));
  }
  return out;
}

Matrix FeatureExtractor::mfcc_statics(const Matrix& log_mel_energy) const {
  const auto n_mels = static_cast<Eigen::Index>(cfg_.n_mels);
  const auto n_ceps = static_cast<Eigen::Index>(cfg_.n_ceps);
  if (log_mel_energy.cols() != n_mels + 1) {
    throw Error(ErrorCode::kDimensionMismatch, "mfcc_statics: expected n_mels + 1 columns");
  }
  const Matrix ceps = log_mel_energy.leftCols(n_mels) * dct_.transpose();
  Matrix statics(log_mel_energy.rows(), n_ceps + 1);
  statics.leftCols(n_ceps) = ceps.middleCols(1, n_ceps);
  statics.col(n_ceps) = log_mel_energy.col(n_mels);
  return statics;
}

FeatureMatrix FeatureExtractor::finish(Matrix statics, FeatureKind kind) const {
  FeatureMatrix fm;
  fm.kind = kind;
  fm.values = with_deltas(statics, cfg_.delta_window);
  fm.frame_times.resize(static_cast<std::size_t>(statics.rows()));
  for (std::size_t f = 0; f < fm.frame_times.size(); ++f) {
    fm.frame_times[f] = static_cast<double>(f * cfg_.hop_samples()) / cfg_.sample_rate;
  }
  return fm;
}

FeatureMatrix FeatureExtractor::fbank(const Waveform& w) const {
  return finish(log_mel_energy(w), FeatureKind::kFbank);
}

FeatureMatrix FeatureExtractor::mfcc(const Waveform& w) const {
  return finish(mfcc_statics(log_mel_energy(w)), FeatureKind::kMfcc);
}

FeatureMatrix fbank(const Waveform& w, const FrameConfig& cfg) {
  return FeatureExtractor(cfg).fbank(w);
}

FeatureMatrix mfcc(const Waveform& w, const FrameConfig& cfg) {
  return FeatureExtractor(cfg).mfcc(w);
}

FeatureMatrix raw_feature(const Waveform& w) {
  FeatureMatrix fm;
  fm.kind = FeatureKind::kRaw;
  fm.values = Eigen::Map<const Matrix>(w.samples.data(), static_cast<Eigen::Index>(w.samples.size()), 1);
  return fm;
}

std::vector<std::uint8_t> serialize(const FeatureMatrix& m) {
  detail::ByteWriter w;
  w.bytes("FEA1");
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u32(static_cast<std::uint32_t>(m.frames()));
  w.u32(static_cast<std::uint32_t>(m.dims()));
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) w.f32(static_cast<float>(m.values(r, c)));
  }
  return std::move(w.data());
}

FeatureMatrix deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "FEA1");
  if (!r.magic("FEA1")) throw Error(ErrorCode::kCorruptFile, "FEA1: bad magic");
  const auto kind = r.u8();
  if (kind > 2) throw Error(ErrorCode::kCorruptFile, "FEA1: unknown kind byte");
  const auto frames = r.u32();
  const auto dims = r.u32();
  if (r.remaining() != 4ull * frames * dims) {
    throw Error(ErrorCode::kCorruptFile, "FEA1: payload size does not match shape");
  }
  FeatureMatrix fm;
  fm.kind = static_cast<FeatureKind>(kind);
  fm.values.resize(frames, dims);
  for (std::uint32_t i = 0; i < frames; ++i) {
    for (std::uint32_t j = 0; j < dims; ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw Error(ErrorCode::kCorruptFile, "FEA1: non-finite value");
      fm.values(i, j) = v;
    }
  }
  return fm;
}

void save(const std::filesystem::path& path, const FeatureMatrix& m) {
  detail::write_file(path, serialize(m));
}

FeatureMatrix load(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_csv(std::ostream& out, const FeatureMatrix& m) {
  char buf[32];
  for (std::size_t c = 0; c < m.dims(); ++c) out << (c ? "," : "") << 'd' << c;
  out << '\n';
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", m.values(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace bsrkit::spectral
