#include "bsrkit/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "bsrkit/bsr.hpp"
#include "bsrkit/classifier.hpp"
#include "bsrkit/fusion.hpp"
#include "bsrkit/noise.hpp"
#include "bsrkit/spectral.hpp"

namespace bsrkit {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

CheckResult half_round_trip() {
  std::size_t checked = 0;
  for (std::uint32_t p = 0; p < 0x10000; ++p) {
    const auto bits = bsr::Float16Bits::from_packed(static_cast<std::uint16_t>(p));
    if (bits.exponent == bsr::kMaxExponent) continue;
    if (bsr::encode_float16(bsr::decode_float16(bits)).packed() != p) {
      return {"binary16 round trip", false, "pattern " + std::to_string(p)};
    }
    ++checked;
  }
  return {"binary16 round trip", true, std::to_string(checked) + " patterns"};
}

CheckResult dct_orthonormal() {
  const Matrix d = spectral::dct_matrix(40);
  const double err = (d * d.transpose() - Matrix::Identity(40, 40)).cwiseAbs().maxCoeff();
  return {"dct orthonormal", err < 1e-10, fmt("max |DD^T - I| = %.3g", err)};
}

CheckResult snr_exact() {
  Waveform s = noise::white_noise(kClipLength, 1);
  s = audio::normalize_peak(std::move(s));
  const Waveform n = noise::pink_noise(kClipLength, 2);
  double worst = 0.0;
  for (double snr : {20.0, 10.0, 0.0}) {
    const double g = noise::snr_gain(s.samples, n.samples, snr);
    std::vector<double> scaled(n.samples.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = g * n.samples[i];
    const double got = 10.0 * std::log10(noise::mean_power(s.samples) / noise::mean_power(scaled));
    worst = std::max(worst, std::abs(got - snr));
  }
  return {"snr gain exact", worst < 1e-9, fmt("max error %.3g dB", worst)};
}

CheckResult fusion_idempotent() {
  ScoreMatrix m;
  m.utt_ids = {"u0", "u1"};
  m.labels = {"a", "b", "c"};
  m.probs = Matrix(2, 3);
  m.probs << 0.2, 0.3, 0.5, 0.7, 0.1, 0.2;
  const std::vector<ScoreMatrix> same{m, m, m};
  const ScoreMatrix f = fusion::fuse(same);
  return {"fusion idempotent", f.probs == m.probs, ""};
}

CheckResult sgdr_schedule() {
  const clf::TrainConfig cfg;
  const double expect[] = {0.05, 0.038, 0.02888};
  const int epochs[] = {0, 5, 15};
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(clf::sgdr_lr(epochs[i], cfg) - expect[i]));
  return {"sgdr restarts", worst < 1e-12, fmt("max error %.3g", worst)};
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> out;
  for (const auto& check : std::initializer_list<std::function<CheckResult()>>{
           half_round_trip, dct_orthonormal, snr_exact, fusion_idempotent, sgdr_schedule}) {
    try {
      out.push_back(check());
    } catch (const std::exception& e) {
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace bsrkit
