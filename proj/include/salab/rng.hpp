#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace salab {

// splitmix64 step: advances the state by the golden-ratio increment and
// returns the avalanche-mixed output.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives the seed of stream `index` from a master seed. Streams are
// order-independent: stream i always gets the same seed regardless of which
// worker draws it.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t state = master_seed + 0x9e3779b97f4a7c15ULL * index;
  return splitmix64_next(state);
}

// xoshiro256++ with splitmix64 seeding. Small state, fixed algorithm, so
// sequences are bit-reproducible across platforms and worker counts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method; caches the spare draw.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  // Index into a cumulative distribution: first j with u < cdf[j].
  int sample_cdf(const std::vector<double>& cdf) {
    const double u = uniform01();
    int lo = 0;
    int hi = static_cast<int>(cdf.size()) - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (u < cdf[mid]) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Van der Corput radical inverse, the building block of Halton points.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double value = 0.0;
  double factor = inv_base;
  while (index > 0) {
    value += static_cast<double>(index % base) * factor;
    index /= base;
    factor *= inv_base;
  }
  return value;
}

// Deterministic index-ordered pairwise summation. Values must be fed in a
// fixed order; the reduction tree then does not depend on how the values were
// produced, which keeps parallel Monte Carlo reductions bitwise stable.
class PairwiseSum {
 public:
  void add(double x) {
    std::size_t level = 0;
    while (level < occupied_.size() && occupied_[level]) {
      x += partial_[level];
      occupied_[level] = false;
      ++level;
    }
    if (level == occupied_.size()) {
      occupied_.push_back(false);
      partial_.push_back(0.0);
    }
    partial_[level] = x;
    occupied_[level] = true;
    ++count_;
  }

  double total() const {
    double s = 0.0;
    for (std::size_t level = 0; level < partial_.size(); ++level) {
      if (occupied_[level]) s += partial_[level];
    }
    return s;
  }

  std::size_t count() const { return count_; }

 private:
  std::vector<double> partial_;
  std::vector<bool> occupied_;
  std::size_t count_ = 0;
};

}  // namespace salab
