#include "bsrkit/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "bsrkit/error.hpp"
#include "bsrkit/hash.hpp"

namespace bsrkit::audio {

namespace fs = std::filesystem;
using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 |
         static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

}  // namespace

PcmClip parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw Error(ErrorCode::kMalformedHeader, "malformed header: not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint32_t sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;

    if (tag_is(bytes, pos, "fmt ")) {
      if (chunk_size < 16 || body + 16 > bytes.size()) {
        throw Error(ErrorCode::kMalformedHeader, "malformed header: short fmt chunk");
      }
      const std::uint16_t format = read_u16(bytes, body);
      const std::uint16_t channels = read_u16(bytes, body + 2);
      sample_rate = read_u32(bytes, body + 4);
      const std::uint16_t block_align = read_u16(bytes, body + 12);
      const std::uint16_t bits = read_u16(bytes, body + 14);
      if (format != kFormatPcm) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    "unsupported encoding: format code " + std::to_string(format));
      }
      if (bits != 16) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    "unsupported encoding: " + std::to_string(bits) + "-bit samples");
      }
      if (channels != 1) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    "unsupported encoding: " + std::to_string(channels) + " channels");
      }
      if (block_align != 2 || sample_rate == 0) {
        throw Error(ErrorCode::kMalformedHeader, "malformed header: inconsistent fmt chunk");
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) {
        throw Error(ErrorCode::kMalformedHeader, "malformed header: data before fmt");
      }
      if (body + chunk_size > bytes.size()) {
        throw Error(ErrorCode::kTruncatedData,
                    "truncated data: chunk declares " + std::to_string(chunk_size) +
                        " bytes, " + std::to_string(bytes.size() - body) + " present");
      }
      if (chunk_size % 2 != 0) {
        throw Error(ErrorCode::kTruncatedData, "truncated data: odd byte count");
      }
      PcmClip clip;
      clip.sample_rate = sample_rate;
      clip.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
      }
      return clip;
    }
    // Chunks are word aligned.
    pos = body + chunk_size + (chunk_size & 1u);
  }
  if (!have_fmt) throw Error(ErrorCode::kMalformedHeader, "malformed header: no fmt chunk");
  throw Error(ErrorCode::kTruncatedData, "truncated data: no data chunk");
}

PcmClip load_wav(const fs::path& path) {
  auto bytes = detail::read_file(path);
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const PcmClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  ByteWriter w;
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(kFormatPcm);
  w.u16(1);
  w.u32(clip.sample_rate);
  w.u32(clip.sample_rate * 2);
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (std::int16_t s : clip.samples) w.u16(static_cast<std::uint16_t>(s));
  return std::move(w.data());
}

void write_wav(const fs::path& path, const PcmClip& clip) {
  detail::write_file(path, encode_wav(clip));
}

void require_sample_rate(const PcmClip& clip, std::uint32_t expected, std::string_view what) {
  if (clip.sample_rate != expected) {
    throw Error(ErrorCode::kUnsupportedEncoding,
                std::string(what) + ": sample rate " + std::to_string(clip.sample_rate) +
                    " Hz, expected " + std::to_string(expected));
  }
}

PcmClip pad_or_trim(PcmClip clip, std::size_t target_len) {
  if (target_len == 0) throw Error(ErrorCode::kInvalidArgument, "pad_or_trim: target_len must be > 0");
  clip.samples.resize(target_len, 0);
  return clip;
}

Waveform pad_or_trim(Waveform wave, std::size_t target_len) {
  if (target_len == 0) throw Error(ErrorCode::kInvalidArgument, "pad_or_trim: target_len must be > 0");
  wave.samples.resize(target_len, 0.0);
  return wave;
}

Waveform normalize_peak(const PcmClip& clip) {
  Waveform w;
  w.sample_rate = clip.sample_rate;
  w.samples.assign(clip.samples.begin(), clip.samples.end());
  return normalize_peak(std::move(w));
}

Waveform normalize_peak(Waveform wave) {
  double peak = 0.0;
  for (double s : wave.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (double& s : wave.samples) s /= peak;
  }
  wave.normalized = true;
  return wave;
}

PcmClip quantize(const Waveform& wave) {
  PcmClip clip;
  clip.sample_rate = wave.sample_rate;
  clip.samples.reserve(wave.samples.size());
  for (double s : wave.samples) {
    double v = std::nearbyint(std::clamp(s, -1.0, 1.0) * 32767.0);
    clip.samples.push_back(static_cast<std::int16_t>(v));
  }
  return clip;
}

namespace {

std::string generic(const fs::path& p) { return p.generic_string(); }

std::string strip_extension(const std::string& rel) {
  auto dot = rel.rfind('.');
  auto slash = rel.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return rel;
  return rel.substr(0, dot);
}

bool is_wav(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

std::set<std::string> read_list(const fs::path& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace

std::vector<DatasetEntry> scan_dataset(const fs::path& root,
                                       const std::optional<fs::path>& manifest,
                                       const ScanOptions& options) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorCode::kIo, "dataset root is not a directory: " + root.string());
  }
  std::vector<DatasetEntry> entries;

  if (manifest) {
    std::ifstream in(*manifest);
    if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + manifest->string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        throw Error(ErrorCode::kCorruptFile, manifest->string() + ":" + std::to_string(lineno) +
                                                 ": expected two tab-separated columns");
      }
      DatasetEntry e;
      e.relative_path = line.substr(0, tab);
      e.label = line.substr(tab + 1);
      e.path = root / e.relative_path;
      if (!fs::is_regular_file(e.path)) {
        throw Error(ErrorCode::kIo, "manifest references missing file: " + e.relative_path);
      }
      e.source_id = strip_extension(e.relative_path);
      entries.push_back(std::move(e));
    }
  } else {
    for (const auto& item : fs::recursive_directory_iterator(root)) {
      if (!item.is_regular_file() || !is_wav(item.path())) continue;
      const fs::path rel = fs::relative(item.path(), root);
      if (!rel.has_parent_path()) continue;  // no label directory
      bool excluded = false;
      for (const auto& part : rel.parent_path()) {
        if (std::find(options.excluded_dirs.begin(), options.excluded_dirs.end(),
                      part.string()) != options.excluded_dirs.end()) {
          excluded = true;
        }
      }
      if (excluded) continue;
      DatasetEntry e;
      e.relative_path = generic(rel);
      e.label = rel.parent_path().filename().string();
      e.path = item.path();
      e.source_id = strip_extension(e.relative_path);
      entries.push_back(std::move(e));
    }
  }

  if (entries.empty()) throw Error(ErrorCode::kEmptyInput, "empty dataset under " + root.string());
  std::sort(entries.begin(), entries.end(), [](const DatasetEntry& a, const DatasetEntry& b) {
    return a.relative_path < b.relative_path;
  });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].source_id == entries[i - 1].source_id) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate clip id " + entries[i].source_id);
    }
  }
  return entries;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

std::vector<Split> assign_splits(std::span<const DatasetEntry> entries, const fs::path& root,
                                 const SplitOptions& options) {
  std::vector<Split> out(entries.size(), Split::kTrain);
  const fs::path val_list = root / "validation_list.txt";
  const fs::path test_list = root / "testing_list.txt";

  if (fs::exists(val_list) || fs::exists(test_list)) {
    auto val = read_list(val_list);
    auto test = read_list(test_list);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (test.contains(entries[i].relative_path)) {
        out[i] = Split::kTest;
      } else if (val.contains(entries[i].relative_path)) {
        out[i] = Split::kValidation;
      }
    }
    return out;
  }

  if (options.validation_pct < 0 || options.testing_pct < 0 ||
      options.validation_pct + options.testing_pct > 100.0) {
    throw Error(ErrorCode::kConfig, "split percentages must be non-negative and sum to <= 100");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::string name = fs::path(entries[i].relative_path).filename().string();
    if (auto cut = name.find("_nohash_"); cut != std::string::npos) name.resize(cut);
    const double pct = static_cast<double>(mix64(fnv1a64(name)) % 10000) / 100.0;
    if (pct < options.validation_pct) {
      out[i] = Split::kValidation;
    } else if (pct < options.validation_pct + options.testing_pct) {
      out[i] = Split::kTest;
    }
  }
  return out;
}

}  // namespace bsrkit::audio
