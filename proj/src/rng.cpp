#include "nsvm/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "nsvm/error.hpp"

namespace nsvm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng Rng::split() { return Rng(engine_()); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  require(n > 0, ErrorCode::invalid_argument, "uniform_index: empty range");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

double Rng::normal() {
  // Box-Muller; the library distribution caches state, which would break
  // the copy-snapshots-the-stream contract.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  require(k <= n, ErrorCode::invalid_argument, "cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " without replacement");
  // Partial Fisher-Yates.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

TrainingStreams make_streams(std::uint64_t seed) {
  Rng root(seed);
  Rng init = root.split();
  Rng sampling = root.split();
  Rng dropout = root.split();
  return {init, sampling, dropout};
}

}  // namespace nsvm
