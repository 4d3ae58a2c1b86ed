#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace roar {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions are implemented here rather than taken from
/// <random> because the standard leaves their algorithms unspecified, and
/// experiment outputs must be byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via the Box-Muller transform.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t state = 0xcbf29ce484222325ULL);

/// Incremental seed derivation: combine a base seed with any number of
/// integers, strings, and doubles into an independent child seed.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t base) : state_(mix64(base ^ 0x9e3779b97f4a7c15ULL)) {}

  SeedSequence& add(std::uint64_t value);
  SeedSequence& add(std::string_view text);
  SeedSequence& add(double value);
  template <std::integral T>
  SeedSequence& add(T value) {
    return add(static_cast<std::uint64_t>(value));
  }

  std::uint64_t seed() const { return mix64(state_); }

 private:
  std::uint64_t state_;
};

}  // namespace roar
