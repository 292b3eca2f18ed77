#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <string>

namespace dff {

// Seedable random stream. Every stochastic operation takes one explicitly so
// runs are reproducible; independent streams are derived with split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  // Uniform draw in [0, 1).
  double uniform() { return unit_(engine_); }

  double normal() { return gauss_(engine_); }

  std::uint64_t next_u64() { return engine_(); }

  // Deterministic child stream; does not advance this stream.
  Rng split(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  // Full engine state as text (std::mt19937_64 stream format).
  std::string state() const;
  void set_state(const std::string& text);

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

// Returns the same value on every draw. Used to pin jitter in tests and to
// request bin midpoints for deterministic evaluation renders.
class ConstantSource {
 public:
  explicit ConstantSource(double value) : value_(value) {}
  double uniform() { return value_; }

 private:
  double value_;
};

template <typename G>
concept UniformSource = requires(G g) {
  { g.uniform() } -> std::convertible_to<double>;
};

}  // namespace dff
