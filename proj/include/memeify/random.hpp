#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace memeify {

/// Portable pseudo-random stream (xoshiro256** seeded through splitmix64).
///
/// The standard library distributions are implementation-defined, so every
/// draw used by the pipeline goes through this type to keep artifacts
/// byte-identical across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for `(seed, a, b, ...)`; used to give each request,
  /// sample or table its own sequence.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  /// Uniform integer in [0, n). `n` must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal draw (Box-Muller, both outputs used).
  double normal();

private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// 16 lowercase hex digits.
std::string_view to_hex(std::uint64_t value, char (&buffer)[17]);

}  // namespace memeify
