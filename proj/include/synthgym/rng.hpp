#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace synthgym {

/// Seeded pseudo-random source. Built on mt19937_64 with hand-rolled
/// uniform/normal transforms so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Deterministically derives an independent seed for a named stream.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace synthgym
