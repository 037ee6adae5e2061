#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (root seed, cluster, individual, day, channel, draw index), so changing the
// actions taken in one cluster never shifts the randomness seen by another,
// and two policies run from the same seed share their latent epidemics.

#include <array>
#include <cstdint>
#include <limits>

namespace outbreak {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// 64-bit mixing used to derive child seeds (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

enum class Channel : std::uint16_t {
  kClusterSize = 1,
  kSchedule = 2,
  kIndexType = 3,
  kExposure = 4,
  kIncubation = 5,
  kSymptomatic = 6,
  kFalseSymptom = 7,
  kTestOutcome = 8,
  kTransmission = 9,
  kPolicy = 10,
  kBudget = 11,
  kTraining = 12,
};

inline constexpr std::uint32_t kNoIndividual = 0xFFFFFFFFu;

/// A finite stream of draws addressed by its key tuple.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  CounterStream(std::uint64_t seed, std::uint32_t cluster, std::uint32_t individual,
                std::uint32_t day, Channel channel);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller; consumes two uniforms.
  double normal();
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

/// Convenience: the first uniform of a stream.
double uniform_at(std::uint64_t seed, std::uint32_t cluster, std::uint32_t individual,
                  std::uint32_t day, Channel channel);

}  // namespace outbreak
