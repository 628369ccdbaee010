#include "nsvm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "nsvm/error.hpp"

namespace nsvm::kernels {

namespace {

// Below this many terms the OpenMP fork costs more than it saves.
constexpr Eigen::Index kParallelThreshold = 256;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double raw_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  if (spec.kind == KernelKind::linear) return dot(a, b);
  return std::exp(-spec.gamma * squared_distance(a, b));
}

double raw_self(const KernelSpec& spec, std::span<const double> a) {
  if (spec.kind == KernelKind::linear) return dot(a, a);
  return 1.0;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::dimension_mismatch,
          "kernel arguments differ in dimension: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  require(!a.empty(), ErrorCode::invalid_argument, "kernel arguments must have dimension >= 1");
  const auto finite = [](double v) { return std::isfinite(v); };
  require(std::all_of(a.begin(), a.end(), finite) && std::all_of(b.begin(), b.end(), finite), ErrorCode::non_finite,
          "kernel argument contains a non-finite entry");
}

}  // namespace

std::string to_string(KernelKind kind) { return kind == KernelKind::linear ? "linear" : "rbf"; }

KernelKind kernel_kind_from_string(std::string_view name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  throw Error(ErrorCode::parse, "unknown kernel kind '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf)
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::invalid_argument, "rbf kernel needs gamma > 0");
}

double eval_unchecked(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  const double k = raw_eval(spec, a, b);
  // The RBF self-similarity is exactly 1, so the wrapper is the identity there.
  if (!spec.normalized || spec.kind == KernelKind::rbf) return k;
  const double denom = std::max(std::sqrt(raw_self(spec, a) * raw_self(spec, b)), kNormalizationFloor);
  return k / denom;
}

double eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  spec.validate();
  check_pair(a, b);
  return eval_unchecked(spec, a, b);
}

void accumulate_grad_second(const KernelSpec& spec, std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> out) {
  const std::size_t n = a.size();
  if (spec.kind == KernelKind::rbf) {
    // Normalized RBF coincides with raw RBF.
    const double k = std::exp(-spec.gamma * squared_distance(a, b));
    const double c = scale * 2.0 * spec.gamma * k;
    for (std::size_t i = 0; i < n; ++i) out[i] += c * (a[i] - b[i]);
    return;
  }
  if (!spec.normalized) {
    for (std::size_t i = 0; i < n; ++i) out[i] += scale * a[i];
    return;
  }
  const double kaa = dot(a, a);
  const double kbb = dot(b, b);
  const double root = std::sqrt(kaa * kbb);
  if (root <= kNormalizationFloor) {
    for (std::size_t i = 0; i < n; ++i) out[i] += scale * a[i] / kNormalizationFloor;
    return;
  }
  // d/db [ab / sqrt(aa bb)] = a/root - (ab/root) * b/bb
  const double cos_ab = dot(a, b) / root;
  for (std::size_t i = 0; i < n; ++i) out[i] += scale * (a[i] / root - cos_ab * b[i] / kbb);
}

Matrix gram(const KernelSpec& spec, const PointsRef& points) {
  spec.validate();
  const Eigen::Index m = points.cols();
  require(m >= 1, ErrorCode::invalid_argument, "gram needs at least one point");
  for (Eigen::Index j = 0; j < m; ++j) check_pair(column(points, 0), column(points, j));
  Matrix g(m, m);
#pragma omp parallel for schedule(dynamic, 8) if (m * m / 2 > kParallelThreshold)
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      const double k = eval_unchecked(spec, column(points, i), column(points, j));
      g(i, j) = k;
      g(j, i) = k;
    }
  }
  return g;
}

Matrix cross(const KernelSpec& spec, const PointsRef& a, const PointsRef& b) {
  spec.validate();
  require(a.rows() == b.rows(), ErrorCode::dimension_mismatch, "cross gram: point dimensions differ");
  Matrix c(a.cols(), b.cols());
#pragma omp parallel for schedule(static) if (a.cols() * b.cols() > kParallelThreshold)
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) c(i, j) = eval_unchecked(spec, column(a, i), column(b, j));
  return c;
}

double weighted_sum(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                    std::span<const double> query) {
  const Eigen::Index count = points.cols();
  require(static_cast<std::size_t>(count) == weights.size(), ErrorCode::dimension_mismatch,
          "weighted_sum: weights and points differ in length");
  if (count == 0) return 0.0;
  require(static_cast<std::size_t>(points.rows()) == query.size(), ErrorCode::dimension_mismatch,
          "weighted_sum: query dimension differs from stored points");
  std::vector<double> terms(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static) if (count > kParallelThreshold)
  for (Eigen::Index s = 0; s < count; ++s)
    terms[static_cast<std::size_t>(s)] = weights[static_cast<std::size_t>(s)] * eval_unchecked(spec, column(points, s), query);
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

void accumulate_weighted_sum_grad(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                                  std::span<const double> query, double scale, std::span<double> out) {
  require(static_cast<std::size_t>(points.cols()) == weights.size(), ErrorCode::dimension_mismatch,
          "weighted_sum_grad: weights and points differ in length");
  for (Eigen::Index s = 0; s < points.cols(); ++s) {
    const double w = weights[static_cast<std::size_t>(s)];
    if (w != 0.0) accumulate_grad_second(spec, column(points, s), query, scale * w, out);
  }
}

double alignment(const Matrix& gram_block, std::span<const int> labels) {
  const auto k = static_cast<Eigen::Index>(labels.size());
  require(k >= 2, ErrorCode::invalid_argument, "alignment needs at least two samples");
  require(gram_block.rows() == k && gram_block.cols() == k, ErrorCode::dimension_mismatch,
          "alignment: gram block is not k x k");
  double numerator = 0.0;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) numerator += labels[i] * labels[j] * gram_block(i, j);
  const double frob = gram_block.norm();
  require(frob > 0.0, ErrorCode::invalid_argument, "alignment: gram block is all zero");
  // Cauchy-Schwarz bounds the ratio by 1; rounding alone can push it a few ulps past
  return std::clamp(numerator / (static_cast<double>(k) * frob), -1.0, 1.0);
}

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double von_neumann_entropy(const Matrix& gram) {
  const Eigen::Index m = gram.rows();
  require(m >= 2 && gram.cols() == m, ErrorCode::invalid_argument, "entropy needs a square matrix with m >= 2");
  const double trace = gram.trace();
  require(trace > 0.0, ErrorCode::invalid_argument, "entropy needs a positive trace");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram / trace, Eigen::EigenvaluesOnly);
  const Vector& p = solver.eigenvalues();
  require(p.minCoeff() >= -1e-6, ErrorCode::invalid_argument, "entropy: matrix is not positive semidefinite");
  double h = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return std::clamp(h / std::log(static_cast<double>(m)), 0.0, 1.0);
}

GramDiagnostics diagnose(const Matrix& gram, std::span<const int> labels) {
  const Eigen::Index m = gram.rows();
  GramDiagnostics d;
  d.entropy = von_neumann_entropy(gram);
  d.alignment = alignment(gram, labels);
  d.distance_to_identity = (gram - Matrix::Identity(m, m)).norm();
  d.distance_to_ones = (gram - Matrix::Ones(m, m)).norm();
  return d;
}

}  // namespace nsvm::kernels
