#include "bsrkit/hash.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <vector>

#include "bsrkit/error.hpp"

namespace bsrkit {

namespace {
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kUnsupportedEncoding: return "unsupported encoding";
    case ErrorCode::kTruncatedData: return "truncated data";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kCorruptFile: return "corrupt file";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kAlignment: return "alignment error";
    case ErrorCode::kTraining: return "training error";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown error";
}

Hasher& Hasher::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    state_ ^= b;
    state_ *= kFnvPrime;
  }
  return *this;
}

Hasher& Hasher::update(std::string_view text) {
  // Length prefix keeps ("ab","c") and ("a","bc") distinct.
  update(static_cast<std::uint64_t>(text.size()));
  return update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                          text.size()));
}

Hasher& Hasher::update(std::uint64_t value) {
  std::uint8_t bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(value >> (8 * i));
  return update(std::span<const std::uint8_t>(bytes, 8));
}

Hasher& Hasher::update(double value) {
  return update(std::bit_cast<std::uint64_t>(value));
}

std::string Hasher::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t value) {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Hasher h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    auto n = static_cast<std::size_t>(in.gcount());
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(buf.data()), n));
  }
  return h.digest();
}

}  // namespace bsrkit
