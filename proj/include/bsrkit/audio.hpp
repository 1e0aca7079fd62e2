#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bsrkit {

inline constexpr std::uint32_t kSampleRate = 16000;
inline constexpr std::size_t kClipLength = 16000;

/// Signed 16-bit PCM exactly as stored in a WAV file.
struct PcmClip {
  std::vector<std::int16_t> samples;
  std::uint32_t sample_rate = kSampleRate;

  bool operator==(const PcmClip&) const = default;
};

/// Floating-point clip. After normalize_peak every sample lies in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  std::uint32_t sample_rate = kSampleRate;
  std::optional<std::string> label;
  std::string source_id;
  bool normalized = false;
};

namespace audio {

// WAV I/O. Only RIFF/WAVE, PCM format code 1, 16-bit, mono is accepted; the
// three failure classes raise Error with kMalformedHeader,
// kUnsupportedEncoding or kTruncatedData respectively.
PcmClip parse_wav(std::span<const std::uint8_t> bytes);
PcmClip load_wav(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const PcmClip& clip);
void write_wav(const std::filesystem::path& path, const PcmClip& clip);

/// Throws Error(kUnsupportedEncoding) unless clip.sample_rate == expected.
void require_sample_rate(const PcmClip& clip, std::uint32_t expected,
                         std::string_view what);

/// Zero-pads or truncates at the tail. target_len must be positive.
PcmClip pad_or_trim(PcmClip clip, std::size_t target_len);
Waveform pad_or_trim(Waveform wave, std::size_t target_len);

/// Divides by max |sample|; silence stays silence.
Waveform normalize_peak(const PcmClip& clip);
Waveform normalize_peak(Waveform wave);

/// Scales [-1, 1] floats to PCM16 with rounding and saturation.
PcmClip quantize(const Waveform& wave);

struct DatasetEntry {
  std::string source_id;      // relative path without extension, e.g. "yes/a"
  std::string label;
  std::string relative_path;  // as written in split lists, e.g. "yes/a.wav"
  std::filesystem::path path;
};

struct ScanOptions {
  std::vector<std::string> excluded_dirs{"_background_noise_"};
};

/// Lists command-word clips under root, sorted by relative path. Without a
/// manifest the label is the parent directory name; with one, the manifest
/// is a two-column TSV (relative path, label).
std::vector<DatasetEntry> scan_dataset(
    const std::filesystem::path& root,
    const std::optional<std::filesystem::path>& manifest = std::nullopt,
    const ScanOptions& options = {});

enum class Split : std::uint8_t { kTrain, kValidation, kTest };

std::string_view split_name(Split split);

struct SplitOptions {
  double validation_pct = 10.0;
  double testing_pct = 10.0;
};

/// Uses validation_list.txt / testing_list.txt under root when present,
/// otherwise a stable hash of the file name (with any "_nohash_" suffix
/// removed so a speaker never straddles splits).
std::vector<Split> assign_splits(std::span<const DatasetEntry> entries,
                                 const std::filesystem::path& root,
                                 const SplitOptions& options = {});

}  // namespace audio
}  // namespace bsrkit
