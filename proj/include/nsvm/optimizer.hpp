#pragma once

#include <span>
#include <vector>

namespace nsvm {

struct OptimizerSettings {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

/// Gradient descent with classical momentum and L2 decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * theta
///   theta <- theta - learning_rate * v
class MomentumSgd {
 public:
  MomentumSgd(OptimizerSettings settings, std::size_t size);

  /// Throws on a non-finite gradient, leaving theta and velocity untouched.
  void step(std::span<double> theta, std::span<const double> grad);

  [[nodiscard]] const std::vector<double>& velocity() const { return velocity_; }
  [[nodiscard]] const OptimizerSettings& settings() const { return settings_; }

 private:
  OptimizerSettings settings_;
  std::vector<double> velocity_;
};

}  // namespace nsvm
