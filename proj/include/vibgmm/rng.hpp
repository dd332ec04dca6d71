#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vibgmm/tensor.hpp"

namespace vibgmm {

using Rng = std::mt19937_64;

/// Independent random streams split from one root seed, so each subsystem
/// can be reproduced on its own.
enum class Stream : std::uint64_t {
  init = 1,
  shuffle = 2,
  noise = 3,
  synthetic = 4,
  baseline = 5,
  oracle = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream) {
  return splitmix64(root ^ splitmix64(static_cast<std::uint64_t>(stream)));
}

inline Rng make_rng(std::uint64_t root, Stream stream) { return Rng(derive_seed(root, stream)); }

inline Tensor standard_normal(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace vibgmm
