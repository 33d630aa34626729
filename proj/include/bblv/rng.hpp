#pragma once

#include <cstddef>
#include <cstdint>

namespace bblv {

// xoshiro256** with splitmix64 seeding. All randomness in the project flows
// through this generator so that streams are reproducible across builds.
class Rng {
 public:
  static constexpr const char* kName = "xoshiro256ss-v1";

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

  // Uniform in [0,1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent stream derived from this seed and a stream label.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace bblv
