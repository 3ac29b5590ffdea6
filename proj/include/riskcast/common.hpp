#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace riskcast {

// Error raised for malformed inputs, bad shapes, unreadable files. Messages
// name the offending file or field.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Error raised when a computation cannot proceed (non-finite loss, missing
// depth in 3D mode, out-of-range lookups).
class ComputeError : public std::runtime_error {
 public:
  explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

// splitmix64 step; used to derive independent deterministic seed streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a per-stream seed from a base seed; stable across runs and
// independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

// Snaps a double to the nearest float32 value. The dataset format stores
// 32-bit floats; generated data passes through this so save/load round-trips
// are exact. The volatile stop keeps optimizers from eliding the narrowing
// (observed with gcc 11 at -O3).
inline double quantize_f32(double x) {
  volatile float f = static_cast<float>(x);
  return static_cast<double>(f);
}

// FNV-1a over a byte buffer; used for file checksums in determinism checks.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace riskcast
