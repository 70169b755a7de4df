#pragma once

// Mirror of the input stream used by tools/make_oracles.py: a raw
// splitmix64 sequence mapped to [0,1) doubles. Kept separate from the
// library's RngStream so oracle inputs do not depend on library internals.

#include <cstdint>
#include <vector>

#include "dacount/tensor.hpp"

namespace oracle {

inline std::vector<double> uniforms(uint64_t seed, int n) {
  std::vector<double> out(static_cast<size_t>(n));
  uint64_t state = seed;
  for (int i = 0; i < n; ++i) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    out[static_cast<size_t>(i)] = static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  return out;
}

inline dacount::Tensor tensor(uint64_t seed, std::vector<int> shape, double mul = 1.0,
                              double off = 0.0) {
  dacount::Tensor t(std::move(shape));
  const auto u = uniforms(seed, static_cast<int>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = u[static_cast<size_t>(i)] * mul + off;
  return t;
}

}  // namespace oracle
