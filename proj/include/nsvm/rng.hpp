#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace nsvm {

/// Seeded, splittable pseudo-random stream. Copying an Rng snapshots its
/// state: the copy replays exactly the draws the original would make.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Derives an independent child stream and advances this one.
  Rng split();

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  double normal();
  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
  bool bernoulli(double p) { return uniform() < p; }

  /// k distinct indices from [0, n), uniformly over k-subsets, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// The three independent streams every trainer derives from one seed, in a
/// fixed order so that trainers sharing a seed share a sampling stream.
struct TrainingStreams {
  Rng init;
  Rng sampling;
  Rng dropout;
};

TrainingStreams make_streams(std::uint64_t seed);

}  // namespace nsvm
