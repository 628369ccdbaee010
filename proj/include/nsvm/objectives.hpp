#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nsvm/feature_maps.hpp"
#include "nsvm/kernels.hpp"

namespace nsvm::objectives {

using kernels::KernelSpec;

/// Sparse kernel expansion (1/(lambda (t-1))) sum_s alpha_s y_s K(z_s, .)
/// built up by the single-sample trainer. Only nonzero coefficients are
/// stored; `t` is the step whose margin is evaluated next.
class ExpansionState {
 public:
  ExpansionState(std::size_t dim, double lambda);

  void append(double alpha, int label, std::span<const double> z);

  [[nodiscard]] std::size_t size() const { return alphas_.size(); }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] const std::vector<double>& alphas() const { return alphas_; }
  [[nodiscard]] const std::vector<int>& labels() const { return labels_; }
  /// alpha_s * y_s, aligned with points().
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] Eigen::Map<const Matrix> points() const;

  std::size_t t = 1;

 private:
  std::size_t dim_;
  double lambda_;
  std::vector<double> alphas_;
  std::vector<int> labels_;
  std::vector<double> weights_;
  std::vector<double> points_;
};

/// A scalar function of theta: an output objective bound to its input batch.
struct ThetaObjective {
  const nn::Network* net = nullptr;
  Matrix inputs;
  nn::OutputObjective objective;

  [[nodiscard]] double value(std::span<const double> theta, Rng masks) const;
  [[nodiscard]] nn::ValueAndGrad value_and_grad(std::span<const double> theta, Rng masks) const;
};

/// Pegasos scaling 1/(lambda (t-1)) applied to an expansion sum.
double pegasos_scale(double sum, double lambda, std::size_t t);

/// g_t = 1/(lambda (t-1)) sum_s alpha_s y_s K(z_s, z_t) over the stored terms.
double margin_alg1(const ExpansionState& state, std::span<const double> z_t, const KernelSpec& kernel);

/// theta -> -y/(lambda (t-1)) sum_s alpha_s y_s K(z_s, F_theta(x)).
/// The result refers to state and net; both must outlive it.
ThetaObjective theta_objective_alg1(const ExpansionState& state, const KernelSpec& kernel, const nn::Network& net,
                                    std::span<const double> x, int y);

/// Indices j with alphas[j] != 0, ascending.
std::vector<std::size_t> support(std::span<const double> alphas);

/// g_t = 1/(lambda (t-1)) sum_j alpha_j y_j K(F_theta(x_j), F_theta(x_i)) with
/// all features taken in infer mode at the current theta.
double margin_alg2(std::span<const double> alphas, std::span<const int> labels, const PointsRef& inputs,
                   std::span<const double> theta, const KernelSpec& kernel, const nn::Network& net, std::size_t i,
                   double lambda, std::size_t t);

/// theta -> -y_i/(lambda (t-1)) sum_j alpha_j y_j K(F_theta(x_j), F_theta(x_i)).
ThetaObjective theta_objective_alg2(std::span<const double> alphas, std::span<const int> labels,
                                    const PointsRef& inputs, const KernelSpec& kernel, const nn::Network& net,
                                    std::size_t i, double lambda, std::size_t t);

/// Value of the mini-batch objective on a gram block: mu times the
/// alpha-weighted normalized sum (0 when every alpha is 0) minus the
/// kernel-target alignment. Fills dValue/dG when `d_gram` is non-null.
double alg3_block_value(const Matrix& gram_block, std::span<const double> alphas, std::span<const int> labels,
                        double mu, Matrix* d_gram);

ThetaObjective theta_objective_alg3(std::span<const double> alphas, std::span<const int> labels,
                                    const PointsRef& inputs, const KernelSpec& kernel, const nn::Network& net,
                                    double mu);

/// Smooth loss L(beta, gamma) on [-1, 1]^2 with its derivative in gamma.
struct LossSpec {
  std::string name;
  std::function<double(double, double)> value;
  std::function<double(double, double)> d_second;

  static LossSpec squared();
};

/// L(1, alignment(G, y)). Fills dValue/dG when `d_gram` is non-null.
double alignment_loss_alg4(const Matrix& gram_block, std::span<const int> labels, const LossSpec& loss,
                           Matrix* d_gram = nullptr);

ThetaObjective theta_objective_alg4(std::span<const int> labels, const PointsRef& inputs, const KernelSpec& kernel,
                                    const nn::Network& net, const LossSpec& loss);

/// d(outputs) += sum_ij d_gram(i, j) * dK(o_i, o_j)/d(o_i, o_j).
void backprop_gram(const KernelSpec& kernel, const Matrix& outputs, const Matrix& d_gram, Matrix& d_outputs);

}  // namespace nsvm::objectives
