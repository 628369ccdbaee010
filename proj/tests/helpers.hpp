#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "nsvm/feature_maps.hpp"
#include "nsvm/kernels.hpp"
#include "nsvm/rng.hpp"

namespace testing {

using nsvm::Matrix;
using nsvm::Vector;

/// Central differences with step 1e-4 * (1 + |theta_i|).
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> theta) {
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-4 * (1.0 + std::abs(x[i]));
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_l2(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    norm += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

inline Matrix random_matrix(nsvm::Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline std::vector<int> random_labels(nsvm::Rng& rng, std::size_t k) {
  std::vector<int> y(k);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : -1;
  y[0] = 1;
  y[k - 1] = -1;
  return y;
}

/// Kernel value written out directly from its definition.
inline double kernel_oracle(const nsvm::kernels::KernelSpec& spec, const Vector& a, const Vector& b) {
  auto raw = [&](const Vector& u, const Vector& v) {
    double s = 0.0;
    if (spec.kind == nsvm::kernels::KernelKind::linear) {
      for (Eigen::Index i = 0; i < u.size(); ++i) s += u(i) * v(i);
      return s;
    }
    for (Eigen::Index i = 0; i < u.size(); ++i) s += (u(i) - v(i)) * (u(i) - v(i));
    return std::exp(-spec.gamma * s);
  };
  if (!spec.normalized) return raw(a, b);
  return raw(a, b) / std::max(std::sqrt(raw(a, a) * raw(b, b)), 1e-12);
}

/// A small dense relu network d -> h -> n with at most ~200 parameters.
inline nsvm::nn::NetworkSpec small_dense(std::size_t d, std::size_t h, std::size_t n, bool normalize = false) {
  nsvm::nn::NetworkSpec spec;
  spec.input = {d, 1, 1};
  spec.layers = {nsvm::nn::LayerSpec::dense(d, h), nsvm::nn::LayerSpec::relu(), nsvm::nn::LayerSpec::dense(h, n)};
  if (normalize) spec.layers.push_back(nsvm::nn::LayerSpec::l2_normalize());
  return spec;
}

/// Distance to the nearest non-smooth point: the smallest |pre-activation| feeding
/// a relu, or the smallest column norm entering an l2 normalization.
inline double min_relu_margin(const nsvm::nn::Network& net, std::span<const double> theta, const Matrix& inputs) {
  nsvm::nn::Tape tape;
  nsvm::Rng none(0);
  (void)net.forward(theta, inputs, nsvm::nn::Mode::infer, &none, tape);
  double least = INFINITY;
  for (std::size_t i = 0; i < net.spec().layers.size(); ++i) {
    const auto kind = net.spec().layers[i].kind;
    if (kind == nsvm::nn::LayerKind::relu) least = std::min(least, tape[i].input.cwiseAbs().minCoeff());
    if (kind == nsvm::nn::LayerKind::l2_normalize) least = std::min(least, tape[i].norms.minCoeff());
  }
  return least;
}

}  // namespace testing
