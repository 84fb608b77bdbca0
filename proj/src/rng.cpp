#include "tilenet/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tilenet {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(mix64(seed) ^ (stream * 0xd6e8feb86659fd93ULL + 1))) {}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c + 0x632be59bd9b4e019ULL));
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

SeededRng SeededRng::derive(std::uint64_t tag) const {
  return SeededRng(seed_, mix64(stream_ ^ mix64(tag ^ 0x5851f42d4c957f2dULL)));
}

SeededRng SeededRng::derive(std::string_view tag) const { return derive(hash_string(tag)); }

std::size_t categorical_sample(std::span<const double> probs, SeededRng& rng) {
  if (probs.empty()) throw std::invalid_argument("categorical_sample: empty distribution");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) {
      throw std::invalid_argument("categorical_sample: negative or NaN entry at index " +
                                  std::to_string(i));
    }
    total += probs[i];
  }
  if (total == 0.0) throw std::invalid_argument("categorical_sample: all-zero distribution");
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("categorical_sample: probabilities sum to " +
                                std::to_string(total));
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc && probs[i] > 0.0) return i;
  }
  return last_positive;
}

}  // namespace tilenet
