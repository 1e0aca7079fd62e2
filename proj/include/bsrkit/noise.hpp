#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bsrkit/audio.hpp"

namespace bsrkit::noise {

enum class NoiseKind : std::uint8_t { kBackground, kWhite, kPink };

const char* kind_name(NoiseKind kind) noexcept;
NoiseKind parse_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kWhite;
  double snr_db = 20.0;
  std::uint64_t seed = 0;
  /// Background kind only: one or more noise recordings, each at least one
  /// clip long. A segment of a seeded choice among them is mixed in.
  std::vector<std::filesystem::path> sources;

  /// Condition name such as "white_10dB".
  std::string name() const;

  bool operator==(const NoiseSpec&) const = default;
};

/// The nine evaluation conditions: {background, white, pink} x {20, 10, 0} dB.
std::vector<NoiseSpec> standard_conditions(std::vector<std::filesystem::path> background_sources);

/// i.i.d. N(0, 1) samples, not normalized.
Waveform white_noise(std::size_t n, std::uint64_t seed);

/// 1/f noise from a Voss-McCartney multi-rate sum of held random values.
Waveform pink_noise(std::size_t n, std::uint64_t seed);

/// Contiguous clip_len slice at a seeded uniform offset.
Waveform pick_segment(const Waveform& noise, std::size_t clip_len, std::uint64_t seed);

/// Mean squared value.
double mean_power(std::span<const double> x);

/// Gain g such that P_signal / P(g * noise) = 10^(snr_db / 10).
double snr_gain(std::span<const double> signal, std::span<const double> noise, double snr_db);

struct MixResult {
  Waveform mixed;
  double gain = 0.0;
  bool renormalized = false;
};

/// signal + g * noise with g from snr_gain; peak-renormalized when the sum
/// leaves [-1, 1].
MixResult mix(const Waveform& signal, const Waveform& noise, double snr_db);
Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db);

/// Per-clip seed derived from (master seed, clip id, condition name).
std::uint64_t clip_seed(std::uint64_t master_seed, std::string_view clip_id,
                        std::string_view condition);

/// Seed used for clip_id under spec; folds spec.seed into the master seed.
std::uint64_t condition_clip_seed(std::uint64_t master_seed, const NoiseSpec& spec,
                                  std::string_view clip_id);

/// Loaded, peak-normalized background recordings for one spec.
std::vector<Waveform> load_background(const NoiseSpec& spec, std::size_t clip_len);

/// Noisy version of one clip. background must hold the loaded sources when
/// spec.kind is kBackground.
Waveform make_noisy(const Waveform& clean, const NoiseSpec& spec,
                    std::span<const Waveform> background, std::uint64_t seed);

struct ConditionClip {
  std::string source_id;
  std::string label;
  std::uint64_t seed = 0;
  Waveform noisy;
};

struct Condition {
  std::string name;
  NoiseSpec spec;
  std::vector<ConditionClip> clips;
};

/// One Condition per spec; every clip mixed with independently seeded noise.
/// Pure function of (clips, specs, master_seed).
std::vector<Condition> synthesize_conditions(std::span<const Waveform> clips,
                                             std::span<const NoiseSpec> specs,
                                             std::uint64_t master_seed);

/// Manifest TSV rows: path, label, condition, snr_db, seed.
struct ManifestRow {
  std::string path;
  std::string label;
  std::string condition;
  double snr_db = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ManifestRow&) const = default;
};

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace bsrkit::noise
