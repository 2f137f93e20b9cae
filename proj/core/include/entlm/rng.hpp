#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace entlm {

// Deterministic random primitives shared by every stochastic step in the
// toolkit (corpus generation, shuffling, parameter init, masking).
//
// The generator is std::mt19937_64, whose output stream is fixed by the
// standard. The derived draws below are hand-rolled because the std::
// distribution objects are implementation-defined: identical seeds must
// produce identical corpora, splits and checkpoints on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n) by rejection sampling; n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  // Standard normal via Box-Muller on two uniform01 draws.
  double gaussian();

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i + 1));
      std::swap(items[i], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace entlm
