#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bsrkit/audio.hpp"

namespace bsrkit::bsr {

inline constexpr std::size_t kWidth = 16;
inline constexpr std::uint8_t kMaxExponent = 31;
inline constexpr double kMaxHalf = 65504.0;

/// One IEEE 754 binary16 value split into its three fields. Bit order is
/// sign, exponent (MSB first), fraction (MSB first), matching column order
/// in a BitMatrix.
struct Float16Bits {
  bool sign = false;
  std::uint8_t exponent = 0;   // 5 bits, biased by 15
  std::uint16_t fraction = 0;  // 10 bits

  std::uint16_t packed() const noexcept {
    return static_cast<std::uint16_t>((sign ? 0x8000u : 0u) | (exponent & 0x1Fu) << 10 |
                                      (fraction & 0x3FFu));
  }
  static Float16Bits from_packed(std::uint16_t p) noexcept {
    return {(p & 0x8000u) != 0, static_cast<std::uint8_t>((p >> 10) & 0x1Fu),
            static_cast<std::uint16_t>(p & 0x3FFu)};
  }

  bool operator==(const Float16Bits&) const = default;
};

/// Round-to-nearest-even binary16 encoding. Magnitudes beyond the largest
/// finite half clamp to +-65504; subnormals are kept. Non-finite input throws
/// Error(kNonFinite).
Float16Bits encode_float16(double x);

/// Exact value of a binary16 pattern. E == 31 (inf/NaN) throws
/// Error(kInvalidArgument).
double decode_float16(Float16Bits bits);

/// Two's-complement pattern of s, returned packed (column 0 = bit 15).
/// Throws Error(kInvalidArgument) outside [-32768, 32767].
std::uint16_t encode_int16(std::int32_t s);

/// The 16 bits of a packed pattern, MSB first, as 0/1 values.
std::array<std::uint8_t, kWidth> unpack_bits(std::uint16_t packed) noexcept;

enum class Kind : std::uint8_t { kInt16 = 0, kFloat16 = 1 };

const char* kind_name(Kind kind) noexcept;

/// T x 16 binary matrix stored as one packed 16-bit word per row.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(Kind kind, std::vector<std::uint16_t> rows, std::string source_id = {})
      : kind_(kind), rows_(std::move(rows)), source_id_(std::move(source_id)) {}

  std::size_t rows() const noexcept { return rows_.size(); }
  static constexpr std::size_t cols() noexcept { return kWidth; }

  int bit(std::size_t t, std::size_t k) const {
    return (rows_.at(t) >> (kWidth - 1 - k)) & 1;
  }
  std::uint16_t row(std::size_t t) const { return rows_.at(t); }

  Kind kind() const noexcept { return kind_; }
  const std::string& source_id() const noexcept { return source_id_; }
  const std::vector<std::uint16_t>& packed_rows() const noexcept { return rows_; }

  bool operator==(const BitMatrix& o) const {
    return kind_ == o.kind_ && rows_ == o.rows_;
  }

 private:
  Kind kind_ = Kind::kFloat16;
  std::vector<std::uint16_t> rows_;
  std::string source_id_;
};

/// Float16 kind requires a normalized waveform; int16 kind requires PCM.
/// A mismatched pairing throws Error(kInvalidArgument).
BitMatrix waveform_to_bsr(const Waveform& wave, Kind kind);
BitMatrix waveform_to_bsr(const PcmClip& clip, Kind kind);

using PulseChannels = std::array<std::vector<double>, kWidth>;

/// Column k of the matrix as a 0.0/1.0 sequence; channel 0 is the sign bit.
PulseChannels bit_pulses(const BitMatrix& m);

/// Inverse of bit_pulses. Channels must share one length and hold only 0/1.
BitMatrix from_pulses(const PulseChannels& channels, Kind kind, std::string source_id = {});

/// Binary PBM (P4), 16 pixels wide, one row per sample; 1 = black.
void write_pbm(std::ostream& out, const BitMatrix& m);
void write_pbm(const std::filesystem::path& path, const BitMatrix& m);

/// "BSR1" container: magic, kind byte, u32 LE row count, then two bytes per
/// row with columns 0..7 in the first byte (column 0 at its MSB).
std::vector<std::uint8_t> serialize(const BitMatrix& m);
BitMatrix deserialize(std::span<const std::uint8_t> bytes);
void save(const std::filesystem::path& path, const BitMatrix& m);
BitMatrix load(const std::filesystem::path& path);

}  // namespace bsrkit::bsr
