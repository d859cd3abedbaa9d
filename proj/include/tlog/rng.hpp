#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>

namespace tlog {

// Deterministic RNG used everywhere randomness is needed, so any run is
// replayable from its seed. Only raw engine output is consumed; the standard
// distributions are avoided because their value sequences are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe to feed to log().
  double next_open_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  bool chance(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return next_unit() < p;
  }

  // Uniform integer in [0, bound) without modulo bias worth worrying about
  // at simulation scale.
  std::uint64_t below(std::uint64_t bound) { return bound ? next_u64() % bound : 0; }

  void fill(std::span<std::uint8_t> out) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i % 8 == 0) word = next_u64();
      out[i] = static_cast<std::uint8_t>(word >> ((i % 8) * 8));
    }
  }

  // Draw accounting, so a persisted stream can resume exactly where a
  // previous process left it.
  std::uint64_t draws() const { return draws_; }
  void fast_forward(std::uint64_t draws) {
    engine_.discard(draws);
    draws_ += draws;
  }

  std::array<std::uint8_t, 32> bytes32() {
    std::array<std::uint8_t, 32> out{};
    fill(out);
    return out;
  }

  std::array<std::uint8_t, 24> bytes24() {
    std::array<std::uint8_t, 24> out{};
    fill(out);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed; splitmix64 finalizer over the pair.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace tlog
