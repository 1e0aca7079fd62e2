#include "bsrkit/noise.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "bsrkit/error.hpp"
#include "bsrkit/hash.hpp"

namespace bsrkit::noise {

namespace {
constexpr std::size_t kPinkRows = 16;
}  // namespace

const char* kind_name(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::kBackground: return "background";
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
  }
  return "white";
}

NoiseKind parse_kind(std::string_view name) {
  if (name == "background") return NoiseKind::kBackground;
  if (name == "white") return NoiseKind::kWhite;
  if (name == "pink") return NoiseKind::kPink;
  throw Error(ErrorCode::kConfig, "unknown noise kind '" + std::string(name) + "'");
}

std::string NoiseSpec::name() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%gdB", kind_name(kind), snr_db);
  return buf;
}

std::vector<NoiseSpec> standard_conditions(std::vector<std::filesystem::path> background_sources) {
  std::vector<NoiseSpec> specs;
  for (NoiseKind kind : {NoiseKind::kBackground, NoiseKind::kWhite, NoiseKind::kPink}) {
    for (double snr : {20.0, 10.0, 0.0}) {
      NoiseSpec s;
      s.kind = kind;
      s.snr_db = snr;
      if (kind == NoiseKind::kBackground) s.sources = background_sources;
      specs.push_back(std::move(s));
    }
  }
  return specs;
}

Waveform white_noise(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "white_noise: n must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Waveform w;
  w.samples.resize(n);
  for (double& s : w.samples) s = gauss(rng);
  w.source_id = "white";
  return w;
}

Waveform pink_noise(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "pink_noise: n must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Row k is redrawn whenever bit k is the lowest set bit of the counter,
  // i.e. every 2^(k+1) samples; the held rows stack into a 1/f spectrum.
  std::array<double, kPinkRows> rows{};
  for (double& r : rows) r = gauss(rng);
  double running = 0.0;
  for (double r : rows) running += r;

  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const auto k = static_cast<std::size_t>(std::countr_zero(static_cast<std::uint64_t>(i)));
      if (k < kPinkRows) {
        running -= rows[k];
        rows[k] = gauss(rng);
        running += rows[k];
      }
    }
    w.samples[i] = (running + gauss(rng)) / std::sqrt(static_cast<double>(kPinkRows + 1));
  }
  w.source_id = "pink";
  return w;
}

Waveform pick_segment(const Waveform& noise, std::size_t clip_len, std::uint64_t seed) {
  if (clip_len == 0 || noise.samples.size() < clip_len) {
    throw Error(ErrorCode::kInvalidArgument,
                "pick_segment: noise of " + std::to_string(noise.samples.size()) +
                    " samples shorter than clip of " + std::to_string(clip_len));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, noise.samples.size() - clip_len);
  const std::size_t offset = pick(rng);
  Waveform out = noise;
  out.samples.assign(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     noise.samples.begin() + static_cast<std::ptrdiff_t>(offset + clip_len));
  return out;
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double snr_gain(std::span<const double> signal, std::span<const double> noise, double snr_db) {
  if (signal.size() != noise.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "mix_at_snr: signal and noise lengths differ");
  }
  const double ps = mean_power(signal);
  const double pn = mean_power(noise);
  if (!(ps > 0.0)) throw Error(ErrorCode::kInvalidArgument, "mix_at_snr: zero-power signal");
  if (!(pn > 0.0)) throw Error(ErrorCode::kInvalidArgument, "mix_at_snr: zero-power noise");
  return std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
}

MixResult mix(const Waveform& signal, const Waveform& noise, double snr_db) {
  MixResult r;
  r.gain = snr_gain(signal.samples, noise.samples, snr_db);
  r.mixed = signal;
  double peak = 0.0;
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    r.mixed.samples[i] = signal.samples[i] + r.gain * noise.samples[i];
    peak = std::max(peak, std::abs(r.mixed.samples[i]));
  }
  if (peak > 1.0) {
    for (double& s : r.mixed.samples) s /= peak;
    r.renormalized = true;
  }
  r.mixed.normalized = true;
  return r;
}

Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db) {
  return mix(signal, noise, snr_db).mixed;
}

std::uint64_t clip_seed(std::uint64_t master_seed, std::string_view clip_id,
                        std::string_view condition) {
  return mix64(Hasher().update(master_seed).update(clip_id).update(condition).digest());
}

std::uint64_t condition_clip_seed(std::uint64_t master_seed, const NoiseSpec& spec,
                                  std::string_view clip_id) {
  return clip_seed(master_seed ^ mix64(spec.seed), clip_id, spec.name());
}

std::vector<Waveform> load_background(const NoiseSpec& spec, std::size_t clip_len) {
  if (spec.kind != NoiseKind::kBackground) return {};
  if (spec.sources.empty()) {
    throw Error(ErrorCode::kConfig, spec.name() + ": background noise needs a source file");
  }
  std::vector<Waveform> out;
  for (const auto& path : spec.sources) {
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::kIo, "missing noise source " + path.string());
    }
    Waveform w = audio::normalize_peak(audio::load_wav(path));
    if (w.samples.size() < clip_len) {
      throw Error(ErrorCode::kInvalidArgument,
                  "noise source " + path.string() + " shorter than one clip");
    }
    w.source_id = path.filename().string();
    out.push_back(std::move(w));
  }
  return out;
}

Waveform make_noisy(const Waveform& clean, const NoiseSpec& spec,
                    std::span<const Waveform> background, std::uint64_t seed) {
  const std::size_t n = clean.samples.size();
  Waveform noise;
  switch (spec.kind) {
    case NoiseKind::kWhite:
      noise = white_noise(n, seed);
      break;
    case NoiseKind::kPink:
      noise = pink_noise(n, seed);
      break;
    case NoiseKind::kBackground: {
      if (background.empty()) {
        throw Error(ErrorCode::kConfig, spec.name() + ": no background noise loaded");
      }
      const std::size_t which = mix64(seed) % background.size();
      noise = pick_segment(background[which], n, mix64(seed + 1));
      break;
    }
  }
  return mix_at_snr(clean, noise, spec.snr_db);
}

std::vector<Condition> synthesize_conditions(std::span<const Waveform> clips,
                                             std::span<const NoiseSpec> specs,
                                             std::uint64_t master_seed) {
  std::vector<Condition> out;
  out.reserve(specs.size());
  for (const NoiseSpec& spec : specs) {
    Condition cond;
    cond.name = spec.name();
    cond.spec = spec;
    const std::size_t clip_len = clips.empty() ? 0 : clips.front().samples.size();
    const auto background = load_background(spec, clip_len);
    for (const Waveform& clean : clips) {
      ConditionClip cc;
      cc.source_id = clean.source_id;
      cc.label = clean.label.value_or("");
      cc.seed = condition_clip_seed(master_seed, spec, clean.source_id);
      cc.noisy = make_noisy(clean, spec, background, cc.seed);
      cond.clips.push_back(std::move(cc));
    }
    out.push_back(std::move(cond));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "path\tlabel\tcondition\tsnr_db\tseed\n";
  char snr[32];
  for (const auto& r : rows) {
    std::snprintf(snr, sizeof(snr), "%g", r.snr_db);
    out << r.path << '\t' << r.label << '\t' << r.condition << '\t' << snr << '\t' << r.seed << '\n';
  }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "path\tlabel\tcondition\tsnr_db\tseed") {
    throw Error(ErrorCode::kCorruptFile, path.string() + ": bad condition manifest header");
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) {
      throw Error(ErrorCode::kCorruptFile, path.string() + ": expected 5 columns");
    }
    ManifestRow r;
    r.path = cols[0];
    r.label = cols[1];
    r.condition = cols[2];
    try {
      r.snr_db = std::stod(cols[3]);
      r.seed = std::stoull(cols[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kCorruptFile, path.string() + ": bad numeric field");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace bsrkit::noise
