#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace bsrkit {

/// Incremental 64-bit FNV-1a. Used for seed derivation and stage caching,
/// never for anything security related.
class Hasher {
 public:
  Hasher& update(std::span<const std::uint8_t> bytes);
  Hasher& update(std::string_view text);
  Hasher& update(std::uint64_t value);
  Hasher& update(double value);

  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a64(std::string_view text);

/// SplitMix64 finalizer; turns correlated inputs into well-spread seeds.
std::uint64_t mix64(std::uint64_t value);

/// Content hash of a whole file. Throws Error(kIo) when unreadable.
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace bsrkit
