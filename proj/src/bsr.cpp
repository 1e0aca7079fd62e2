#include "bsrkit/bsr.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "binio.hpp"
#include "bsrkit/error.hpp"

namespace bsrkit::bsr {

namespace {
constexpr int kExponentBias = 15;
constexpr int kFractionBits = 10;
constexpr int kMinNormalExponent = 1 - kExponentBias;  // -14
constexpr std::uint16_t kMaxFinitePattern = 0x7BFF;
}  // namespace

Float16Bits encode_float16(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::kNonFinite, "encode_float16: non-finite input");
  const bool negative = std::signbit(x);
  const double mag = std::fabs(x);
  if (mag >= kMaxHalf) {
    auto bits = Float16Bits::from_packed(kMaxFinitePattern);
    bits.sign = negative;
    return bits;
  }
  if (mag == 0.0) return {negative, 0, 0};

  int e2 = 0;
  std::frexp(mag, &e2);  // mag = m * 2^e2, m in [0.5, 1)
  const int exponent = e2 - 1;

  // nearbyint honours the default FE_TONEAREST mode: ties go to even. The
  // scaled magnitude is exact in double, so this is a single rounding.
  std::uint32_t packed = 0;
  if (exponent < kMinNormalExponent) {
    // Subnormal grid is 2^-24; a carry to 1024 lands on the smallest normal.
    packed = static_cast<std::uint32_t>(std::nearbyint(std::ldexp(mag, 24)));
  } else {
    const auto significand = static_cast<std::uint32_t>(
        std::nearbyint(std::ldexp(mag, kFractionBits - exponent)));  // [1024, 2048]
    // A significand of 2048 carries into the exponent field.
    packed = static_cast<std::uint32_t>(exponent + kExponentBias) << kFractionBits;
    packed += significand - (1u << kFractionBits);
  }
  if (packed > kMaxFinitePattern) packed = kMaxFinitePattern;

  auto bits = Float16Bits::from_packed(static_cast<std::uint16_t>(packed));
  bits.sign = negative;
  return bits;
}

double decode_float16(Float16Bits bits) {
  if (bits.exponent >= kMaxExponent) {
    throw Error(ErrorCode::kInvalidArgument, "decode_float16: exponent 31 (inf/NaN) pattern");
  }
  double mag = 0.0;
  if (bits.exponent == 0) {
    mag = std::ldexp(static_cast<double>(bits.fraction), kMinNormalExponent - kFractionBits);
  } else {
    mag = std::ldexp(static_cast<double>((1u << kFractionBits) | bits.fraction),
                     bits.exponent - kExponentBias - kFractionBits);
  }
  return bits.sign ? -mag : mag;
}

std::uint16_t encode_int16(std::int32_t s) {
  if (s < -32768 || s > 32767) {
    throw Error(ErrorCode::kInvalidArgument,
                "encode_int16: " + std::to_string(s) + " outside 16-bit range");
  }
  return static_cast<std::uint16_t>(static_cast<std::int16_t>(s));
}

std::array<std::uint8_t, kWidth> unpack_bits(std::uint16_t packed) noexcept {
  std::array<std::uint8_t, kWidth> out{};
  for (std::size_t k = 0; k < kWidth; ++k) {
    out[k] = static_cast<std::uint8_t>((packed >> (kWidth - 1 - k)) & 1u);
  }
  return out;
}

const char* kind_name(Kind kind) noexcept {
  return kind == Kind::kInt16 ? "bsr-int16" : "bsr-float16";
}

BitMatrix waveform_to_bsr(const Waveform& wave, Kind kind) {
  if (kind != Kind::kFloat16) {
    throw Error(ErrorCode::kInvalidArgument,
                "waveform_to_bsr: int16 encoding needs integer PCM input");
  }
  if (!wave.normalized) {
    throw Error(ErrorCode::kInvalidArgument,
                "waveform_to_bsr: float16 encoding needs a normalized waveform");
  }
  std::vector<std::uint16_t> rows;
  rows.reserve(wave.samples.size());
  for (double s : wave.samples) rows.push_back(encode_float16(s).packed());
  return BitMatrix(Kind::kFloat16, std::move(rows), wave.source_id);
}

BitMatrix waveform_to_bsr(const PcmClip& clip, Kind kind) {
  if (kind != Kind::kInt16) {
    throw Error(ErrorCode::kInvalidArgument,
                "waveform_to_bsr: float16 encoding needs a normalized waveform");
  }
  std::vector<std::uint16_t> rows;
  rows.reserve(clip.samples.size());
  for (std::int16_t s : clip.samples) rows.push_back(encode_int16(s));
  return BitMatrix(Kind::kInt16, std::move(rows));
}

PulseChannels bit_pulses(const BitMatrix& m) {
  PulseChannels channels;
  for (auto& c : channels) c.resize(m.rows());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    const auto word = m.row(t);
    for (std::size_t k = 0; k < kWidth; ++k) {
      channels[k][t] = static_cast<double>((word >> (kWidth - 1 - k)) & 1u);
    }
  }
  return channels;
}

BitMatrix from_pulses(const PulseChannels& channels, Kind kind, std::string source_id) {
  const std::size_t T = channels[0].size();
  std::vector<std::uint16_t> rows(T, 0);
  for (std::size_t k = 0; k < kWidth; ++k) {
    if (channels[k].size() != T) {
      throw Error(ErrorCode::kDimensionMismatch, "from_pulses: channel lengths differ");
    }
    for (std::size_t t = 0; t < T; ++t) {
      const double v = channels[k][t];
      if (v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::kInvalidArgument, "from_pulses: channel value not 0 or 1");
      }
      if (v == 1.0) rows[t] |= static_cast<std::uint16_t>(1u << (kWidth - 1 - k));
    }
  }
  return BitMatrix(kind, std::move(rows), std::move(source_id));
}

void write_pbm(std::ostream& out, const BitMatrix& m) {
  out << "P4\n" << kWidth << ' ' << m.rows() << '\n';
  for (std::uint16_t word : m.packed_rows()) {
    const char bytes[2] = {static_cast<char>(word >> 8), static_cast<char>(word & 0xFF)};
    out.write(bytes, 2);
  }
}

void write_pbm(const std::filesystem::path& path, const BitMatrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_pbm(out, m);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<std::uint8_t> serialize(const BitMatrix& m) {
  detail::ByteWriter w;
  w.bytes("BSR1");
  w.u8(static_cast<std::uint8_t>(m.kind()));
  w.u32(static_cast<std::uint32_t>(m.rows()));
  for (std::uint16_t word : m.packed_rows()) {
    w.u8(static_cast<std::uint8_t>(word >> 8));
    w.u8(static_cast<std::uint8_t>(word & 0xFF));
  }
  return std::move(w.data());
}

BitMatrix deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "BSR1");
  if (!r.magic("BSR1")) throw Error(ErrorCode::kCorruptFile, "BSR1: bad magic");
  const auto kind = r.u8();
  if (kind > 1) throw Error(ErrorCode::kCorruptFile, "BSR1: unknown kind byte");
  const auto T = r.u32();
  if (r.remaining() != 2ull * T) {
    throw Error(ErrorCode::kCorruptFile, "BSR1: payload size does not match row count");
  }
  std::vector<std::uint16_t> rows(T);
  for (auto& word : rows) {
    auto hi = r.u8();
    auto lo = r.u8();
    word = static_cast<std::uint16_t>(hi << 8 | lo);
  }
  return BitMatrix(static_cast<Kind>(kind), std::move(rows));
}

void save(const std::filesystem::path& path, const BitMatrix& m) {
  detail::write_file(path, serialize(m));
}

BitMatrix load(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace bsrkit::bsr
