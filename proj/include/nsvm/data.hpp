#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nsvm/kernels.hpp"
#include "nsvm/rng.hpp"

namespace nsvm::data {

/// Per-feature statistics fitted on a training set.
struct Standardization {
  Vector mean;
  Vector stddev;
};

/// Labeled samples; column j of `inputs` is x_j and labels[j] is in {-1, 1}.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::optional<Standardization> standardization;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(inputs.rows()); }
  [[nodiscard]] bool has_both_classes() const;
  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;

  /// Throws unless sizes agree, labels are +-1 and all inputs are finite.
  void validate() const;
};

/// Synthetic ringnorm: label +1 ~ N(0, 4 I), label -1 ~ N((2/sqrt(20)) 1, I),
/// in 20 dimensions, with class sizes differing by at most one.
Dataset gen_ringnorm(std::size_t n_samples, std::uint64_t seed);

/// Two 28x28 image classes, each an isotropic Gaussian around its own mean
/// image; label -1 is a ring, +1 a vertical stroke. Pixels are not clipped.
Dataset gen_two_gaussian_images(std::size_t n_samples, std::uint64_t seed, double noise = 0.3);

/// CSV with header f0,...,f{d-1},label; LF line endings; labels -1 or 1.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// IDX image/label pair (big-endian, unsigned-byte payload). Keeps samples
/// labeled `negative` (mapped to -1) or `positive` (+1); pixels scaled by 1/255.
Dataset load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels, int negative,
                        int positive);

/// Mean and sample standard deviation (n-1 denominator); a zero deviation is clamped to 1.
Standardization standardize_fit(const Dataset& train);
Dataset standardize_apply(const Standardization& stats, const Dataset& data);

struct Split {
  Dataset train;
  Dataset rest;
};

/// Holds out round(m * fraction) samples (per class when stratified).
Split split_fraction(const Dataset& data, double fraction, bool stratified, std::uint64_t seed);

/// Holds out exactly `per_class` samples of each label.
Split split_per_class(const Dataset& data, std::size_t per_class, std::uint64_t seed);

}  // namespace nsvm::data
