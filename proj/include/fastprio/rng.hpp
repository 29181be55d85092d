#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fastprio {

// Deterministic random stream keyed by (seed, stream id). The engine is
// std::mt19937_64 seeded through std::seed_seq, both of which the standard
// pins bit-for-bit; the variate transforms below are ours for the same reason
// (std:: distributions are implementation-defined).
//
// Single owner. Parallel work derives children by stream id instead of
// sharing one stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Independent stream for a sub-task; does not advance this stream.
  RngStream child(std::uint64_t sub_id) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0. Unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates shuffle / uniform permutation of [0, n).
  void shuffle(std::span<std::size_t> items);
  std::vector<std::size_t> permutation(std::size_t n);
  // `k` distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fastprio
