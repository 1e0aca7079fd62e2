#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bsrkit/audio.hpp"

namespace bsrkit::testing {

namespace fs = std::filesystem;

inline fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bsrkit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline PcmClip to_pcm(const std::vector<double>& x) {
  PcmClip c;
  c.samples.reserve(x.size());
  for (double v : x) c.samples.push_back(static_cast<std::int16_t>(std::lround(std::clamp(v, -1.0, 1.0) * 32767.0)));
  return c;
}

/// One second of a tone, a linear chirp or a noise burst over faint noise.
inline std::vector<double> synth_clip(const std::string& cls, std::mt19937_64& rng) {
  const double sr = kSampleRate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(kClipLength);
  const double amp = 0.3 + 0.5 * u(rng);
  if (cls == "tone") {
    const double f = 300.0 + 2700.0 * u(rng);
    const double ph = 2 * std::numbers::pi * u(rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2 * std::numbers::pi * f * i / sr + ph);
  } else if (cls == "chirp") {
    const double f0 = 200.0 + 800.0 * u(rng);
    const double f1 = 2000.0 + 4000.0 * u(rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = i / sr;
      x[i] = amp * std::sin(2 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) * t * t));
    }
  } else {
    const auto len = static_cast<std::size_t>((0.2 + 0.3 * u(rng)) * sr);
    const auto start = static_cast<std::size_t>(u(rng) * static_cast<double>(x.size() - len));
    for (std::size_t i = start; i < start + len; ++i) x[i] = amp * 0.3 * n(rng);
  }
  for (double& v : x) v += 0.005 * n(rng);
  return x;
}

/// <root>/<class>/<class>_<i>.wav for tone, chirp and noise-burst, with
/// explicit split lists: per class, clips 0..train-1 train, then val, then test.
inline void make_dataset(const fs::path& root, std::size_t per_class, std::uint64_t seed,
                         std::size_t val = 0, std::size_t test = 0) {
  std::mt19937_64 rng(seed);
  fs::create_directories(root);
  std::ofstream vl(root / "validation_list.txt");
  std::ofstream tl(root / "testing_list.txt");
  if (val == 0 && test == 0) {
    val = per_class / 5;
    test = per_class / 5;
  }
  for (const std::string cls : {"tone", "chirp", "noise-burst"}) {
    fs::create_directories(root / cls);
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::string rel = cls + "/" + cls + "_" + std::to_string(i) + ".wav";
      audio::write_wav(root / rel, to_pcm(synth_clip(cls, rng)));
      if (i >= per_class - test) {
        tl << rel << '\n';
      } else if (i >= per_class - test - val) {
        vl << rel << '\n';
      }
    }
  }
}

}  // namespace bsrkit::testing
