#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace occaug {

/// Seeded random stream used everywhere randomness enters the system.
///
/// Wraps std::mt19937_64 and draws through hand-written helpers instead of the
/// std distributions, whose algorithms vary between standard libraries and
/// some of which cache hidden state that would escape checkpointing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [lo, hi], inclusive, without modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform01() < p; }
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  template <typename Index>
  void shuffle(std::vector<Index>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream seeded from one draw of this stream.
  Rng fork() { return Rng(engine_()); }

  /// Full engine state, suitable for a bit-exact restore.
  std::vector<std::uint64_t> save_state() const;
  void load_state(std::span<const std::uint64_t> words);

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace occaug
