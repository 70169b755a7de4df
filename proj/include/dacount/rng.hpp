#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dacount {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic per-consumer random stream. Every consumer of randomness
// (weight init, batch sampling, scale sampling, ...) owns its own named
// stream forked from the experiment seed, so adding or removing one
// consumer never perturbs the draws seen by the others.
//
// Value generation is implemented directly on the raw engine rather than
// through std:: distributions: distributions may carry hidden state and
// differ across standard libraries, which would break exact checkpoint
// resume.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(uint64_t seed) : eng_(splitmix64(seed)) {}
  RngStream(uint64_t root_seed, std::string_view name)
      : eng_(splitmix64(root_seed ^ fnv1a64(name))) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    if (hi < lo) return lo;
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // modulo bias is negligible for the small spans used here, but reject
    // the tail anyway so behaviour is exact
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return lo + static_cast<int>(v % span);
  }

  // Box-Muller, both values computed per call and the second discarded;
  // slightly wasteful but stateless
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  int poisson(double lambda) {
    // Knuth; fine for the small rates the toy generator uses
    double l = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > l);
    return k - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  RngStream fork(std::string_view name) {
    RngStream s;
    s.eng_.seed(splitmix64(eng_() ^ fnv1a64(name)));
    return s;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw std::runtime_error("RngStream: bad serialized state");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dacount
