#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lexseg {

// Error taxonomy. Resource/usage distinction is what the CLI maps to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(what) {}
};

class DataLeakError : public Error {
 public:
  explicit DataLeakError(const std::string& what) : Error(what) {}
};

class InvalidLabelError : public Error {
 public:
  explicit InvalidLabelError(const std::string& what) : Error(what) {}
};

class EmbeddingError : public Error {
 public:
  explicit EmbeddingError(const std::string& what) : Error(what) {}
};

// Deterministic RNG. Distribution sampling is hand-rolled so that streams are
// bit-stable across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return n ? next_u64() % n : 0;
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t fork(std::uint64_t stream) {
    // Derive an independent seed for a named sub-stream.
    Rng r(state_ ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for content hashes (cache keys, determinism checks).
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace lexseg
