#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace tilenet {

// Counter-based generator: the n-th output is a pure function of
// (seed, stream, n), so streams can be created in any order and still
// reproduce the same draws.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; no cached spare so the stream stays counter-addressable.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Child stream keyed by a tag, independent of how far this stream has advanced.
  SeededRng derive(std::uint64_t tag) const;
  SeededRng derive(std::string_view tag) const;
  SeededRng derive(std::string_view tag, std::uint64_t index) const {
    return derive(tag).derive(index);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

// Draws an index with probability probs[i]. Entries must be >= 0 and sum to 1 within 1e-9.
std::size_t categorical_sample(std::span<const double> probs, SeededRng& rng);

}  // namespace tilenet
