#include "nsvm/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "nsvm/error.hpp"

namespace nsvm {

void OptimizerSettings::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::invalid_argument,
          "learning_rate must be finite and >= 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::invalid_argument, "momentum must be in [0, 1)");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), ErrorCode::invalid_argument,
          "weight_decay must be finite and >= 0");
}

MomentumSgd::MomentumSgd(OptimizerSettings settings, std::size_t size) : settings_(settings), velocity_(size, 0.0) {
  settings_.validate();
}

void MomentumSgd::step(std::span<double> theta, std::span<const double> grad) {
  require(theta.size() == velocity_.size() && grad.size() == velocity_.size(), ErrorCode::dimension_mismatch,
          "optimizer step: theta, gradient and velocity shapes differ");
  require(std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); }), ErrorCode::non_finite,
          "optimizer step: gradient is not finite");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity_[i] = settings_.momentum * velocity_[i] + grad[i] + settings_.weight_decay * theta[i];
    theta[i] -= settings_.learning_rate * velocity_[i];
  }
}

}  // namespace nsvm
