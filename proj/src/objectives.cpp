#include "nsvm/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "nsvm/error.hpp"

namespace nsvm::objectives {

namespace {

void require_step(std::size_t t) {
  require(t >= 2, ErrorCode::invalid_argument, "expansion margins are defined for t >= 2 only");
}

Matrix gather(const PointsRef& inputs, std::span<const std::size_t> idx) {
  Matrix out(inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = inputs.col(static_cast<Eigen::Index>(idx[c]));
  return out;
}

}  // namespace

ExpansionState::ExpansionState(std::size_t dim, double lambda) : dim_(dim), lambda_(lambda) {
  require(lambda > 0.0, ErrorCode::invalid_argument, "lambda must be positive");
}

void ExpansionState::append(double alpha, int label, std::span<const double> z) {
  require(alpha >= 0.0, ErrorCode::invalid_argument, "expansion coefficients must be non-negative");
  require(label == 1 || label == -1, ErrorCode::invalid_argument, "labels must be -1 or 1");
  require(z.size() == dim_, ErrorCode::dimension_mismatch, "expansion point has the wrong dimension");
  if (alpha == 0.0) return;
  alphas_.push_back(alpha);
  labels_.push_back(label);
  weights_.push_back(alpha * label);
  points_.insert(points_.end(), z.begin(), z.end());
}

Eigen::Map<const Matrix> ExpansionState::points() const {
  return {points_.data(), static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(alphas_.size())};
}

double ThetaObjective::value(std::span<const double> theta, Rng masks) const {
  return nn::objective_value(*net, theta, objective, inputs, masks);
}

nn::ValueAndGrad ThetaObjective::value_and_grad(std::span<const double> theta, Rng masks) const {
  return nn::grad_theta(*net, theta, objective, inputs, masks);
}

double pegasos_scale(double sum, double lambda, std::size_t t) {
  return sum / (lambda * static_cast<double>(t - 1));
}

double margin_alg1(const ExpansionState& state, std::span<const double> z_t, const KernelSpec& kernel) {
  require_step(state.t);
  const double sum = kernels::weighted_sum(kernel, state.points(), state.weights(), z_t);
  return pegasos_scale(sum, state.lambda(), state.t);
}

ThetaObjective theta_objective_alg1(const ExpansionState& state, const KernelSpec& kernel, const nn::Network& net,
                                    std::span<const double> x, int y) {
  require_step(state.t);
  require(x.size() == net.input_dim(), ErrorCode::dimension_mismatch, "input dimension does not match network");
  ThetaObjective obj;
  obj.net = &net;
  obj.inputs = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  const double coeff = -static_cast<double>(y) / (state.lambda() * static_cast<double>(state.t - 1));
  obj.objective = [&state, kernel, coeff](const Matrix& outputs, Matrix* d_outputs) {
    const auto out = column(outputs, 0);
    const double value = coeff * kernels::weighted_sum(kernel, state.points(), state.weights(), out);
    if (d_outputs) {
      kernels::accumulate_weighted_sum_grad(kernel, state.points(), state.weights(), out, coeff,
                                            {d_outputs->col(0).data(), out.size()});
    }
    return value;
  };
  return obj;
}

std::vector<std::size_t> support(std::span<const double> alphas) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < alphas.size(); ++j)
    if (alphas[j] != 0.0) idx.push_back(j);
  return idx;
}

double margin_alg2(std::span<const double> alphas, std::span<const int> labels, const PointsRef& inputs,
                   std::span<const double> theta, const KernelSpec& kernel, const nn::Network& net, std::size_t i,
                   double lambda, std::size_t t) {
  require_step(t);
  require(alphas.size() == labels.size() && static_cast<Eigen::Index>(alphas.size()) == inputs.cols(),
          ErrorCode::dimension_mismatch, "alphas, labels and inputs differ in length");
  const std::vector<std::size_t> idx = support(alphas);
  const Matrix features = net.forward(theta, gather(inputs, idx), nn::Mode::infer, nullptr);
  const Matrix query = net.forward(theta, inputs.col(static_cast<Eigen::Index>(i)), nn::Mode::infer, nullptr);
  std::vector<double> weights(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) weights[c] = alphas[idx[c]] * labels[idx[c]];
  return pegasos_scale(kernels::weighted_sum(kernel, features, weights, column(query, 0)), lambda, t);
}

ThetaObjective theta_objective_alg2(std::span<const double> alphas, std::span<const int> labels,
                                    const PointsRef& inputs, const KernelSpec& kernel, const nn::Network& net,
                                    std::size_t i, double lambda, std::size_t t) {
  require_step(t);
  std::vector<std::size_t> idx = support(alphas);
  std::vector<double> weights(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) weights[c] = alphas[idx[c]] * labels[idx[c]];
  idx.push_back(i);  // the query input is the last column
  ThetaObjective obj;
  obj.net = &net;
  obj.inputs = gather(inputs, idx);
  const double coeff = -static_cast<double>(labels[i]) / (lambda * static_cast<double>(t - 1));
  obj.objective = [kernel, coeff, weights = std::move(weights)](const Matrix& outputs, Matrix* d_outputs) {
    const Eigen::Index q = outputs.cols() - 1;
    const auto query = column(outputs, q);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < q; ++c)
      sum += weights[static_cast<std::size_t>(c)] * kernels::eval_unchecked(kernel, column(outputs, c), query);
    if (d_outputs) {
      const auto n = static_cast<std::size_t>(outputs.rows());
      for (Eigen::Index c = 0; c < q; ++c) {
        const double w = coeff * weights[static_cast<std::size_t>(c)];
        kernels::accumulate_grad_second(kernel, query, column(outputs, c), w, {d_outputs->col(c).data(), n});
        kernels::accumulate_grad_second(kernel, column(outputs, c), query, w, {d_outputs->col(q).data(), n});
      }
    }
    return coeff * sum;
  };
  return obj;
}

void backprop_gram(const KernelSpec& kernel, const Matrix& outputs, const Matrix& d_gram, Matrix& d_outputs) {
  const Eigen::Index k = outputs.cols();
  const auto n = static_cast<std::size_t>(outputs.rows());
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) {
      const double w = d_gram(i, j);
      if (w == 0.0) continue;
      kernels::accumulate_grad_second(kernel, column(outputs, i), column(outputs, j), w, {d_outputs.col(j).data(), n});
      kernels::accumulate_grad_second(kernel, column(outputs, j), column(outputs, i), w, {d_outputs.col(i).data(), n});
    }
}

namespace {

// Alignment A = sum y_i y_j G_ij / (k |G|_F) and, optionally, dA/dG.
double alignment_with_grad(const Matrix& gram, std::span<const int> labels, Matrix* d_gram) {
  const double a = kernels::alignment(gram, labels);
  if (d_gram) {
    const auto k = static_cast<Eigen::Index>(labels.size());
    const double frob = gram.norm();
    const double kf = static_cast<double>(k) * frob;
    d_gram->resize(k, k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < k; ++i)
        (*d_gram)(i, j) = labels[i] * labels[j] / kf - a * gram(i, j) / (frob * frob);
  }
  return a;
}

}  // namespace

double alg3_block_value(const Matrix& gram_block, std::span<const double> alphas, std::span<const int> labels,
                        double mu, Matrix* d_gram) {
  const auto k = static_cast<Eigen::Index>(labels.size());
  require(alphas.size() == labels.size(), ErrorCode::dimension_mismatch, "alphas and labels differ in length");
  Matrix d_align;
  const double align = alignment_with_grad(gram_block, labels, d_gram ? &d_align : nullptr);
  double value = -align;
  if (d_gram) *d_gram = -d_align;

  if (std::all_of(alphas.begin(), alphas.end(), [](double a) { return a == 0.0; })) return value;

  // sqrt(sum_ij (a_i a_j)^2) = sum_i a_i^2
  double alpha_norm = 0.0;
  for (double a : alphas) alpha_norm += a * a;
  const double frob = gram_block.norm();
  double numerator = 0.0;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) numerator += alphas[i] * alphas[j] * labels[i] * labels[j] * gram_block(i, j);
  const double first = numerator / (alpha_norm * frob);
  value += mu * first;
  if (d_gram) {
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < k; ++i) {
        const double w = alphas[i] * alphas[j] * labels[i] * labels[j];
        (*d_gram)(i, j) += mu * (w / (alpha_norm * frob) - first * gram_block(i, j) / (frob * frob));
      }
  }
  return value;
}

ThetaObjective theta_objective_alg3(std::span<const double> alphas, std::span<const int> labels,
                                    const PointsRef& inputs, const KernelSpec& kernel, const nn::Network& net,
                                    double mu) {
  require(labels.size() >= 2 && static_cast<Eigen::Index>(labels.size()) == inputs.cols(),
          ErrorCode::invalid_argument, "batch objective needs k >= 2 inputs matching the labels");
  ThetaObjective obj;
  obj.net = &net;
  obj.inputs = inputs;
  obj.objective = [kernel, mu, a = std::vector<double>(alphas.begin(), alphas.end()),
                   y = std::vector<int>(labels.begin(), labels.end())](const Matrix& outputs, Matrix* d_outputs) {
    const Matrix g = kernels::gram(kernel, outputs);
    Matrix d_gram;
    const double value = alg3_block_value(g, a, y, mu, d_outputs ? &d_gram : nullptr);
    if (d_outputs) backprop_gram(kernel, outputs, d_gram, *d_outputs);
    return value;
  };
  return obj;
}

LossSpec LossSpec::squared() {
  return {"squared", [](double b, double g) { return (b - g) * (b - g); },
          [](double b, double g) { return -2.0 * (b - g); }};
}

double alignment_loss_alg4(const Matrix& gram_block, std::span<const int> labels, const LossSpec& loss,
                           Matrix* d_gram) {
  const double a = alignment_with_grad(gram_block, labels, d_gram);
  if (d_gram) *d_gram *= loss.d_second(1.0, a);
  return loss.value(1.0, a);
}

ThetaObjective theta_objective_alg4(std::span<const int> labels, const PointsRef& inputs, const KernelSpec& kernel,
                                    const nn::Network& net, const LossSpec& loss) {
  require(labels.size() >= 2 && static_cast<Eigen::Index>(labels.size()) == inputs.cols(),
          ErrorCode::invalid_argument, "batch objective needs k >= 2 inputs matching the labels");
  ThetaObjective obj;
  obj.net = &net;
  obj.inputs = inputs;
  obj.objective = [kernel, loss, y = std::vector<int>(labels.begin(), labels.end())](const Matrix& outputs,
                                                                                    Matrix* d_outputs) {
    const Matrix g = kernels::gram(kernel, outputs);
    Matrix d_gram;
    const double value = alignment_loss_alg4(g, y, loss, d_outputs ? &d_gram : nullptr);
    if (d_outputs) backprop_gram(kernel, outputs, d_gram, *d_outputs);
    return value;
  };
  return obj;
}

}  // namespace nsvm::objectives
