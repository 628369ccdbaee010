#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>

namespace nsvm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Column-major point set: column j is point j.
using PointsRef = Eigen::Ref<const Matrix>;

inline std::span<const double> column(const PointsRef& points, Eigen::Index j) {
  return {points.col(j).data(), static_cast<std::size_t>(points.rows())};
}

}  // namespace nsvm

namespace nsvm::kernels {

enum class KernelKind { linear, rbf };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);

/// Positive-semidefinite kernel on feature space. `gamma` is the RBF
/// bandwidth in K(a,b) = exp(-gamma |a-b|^2); `normalized` applies
/// K(a,b) / sqrt(K(a,a) K(b,b)) so that every point maps to the unit sphere.
struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double gamma = 1.0;
  bool normalized = false;

  static KernelSpec linear(bool normalized = false) { return {KernelKind::linear, 1.0, normalized}; }
  static KernelSpec rbf(double gamma, bool normalized = false) { return {KernelKind::rbf, gamma, normalized}; }

  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Floor on sqrt(K(a,a) K(b,b)) in the normalized kernel.
inline constexpr double kNormalizationFloor = 1e-12;

/// Checked evaluation: dimensions must agree and all entries be finite.
double eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// Hot-path evaluation without argument checks.
double eval_unchecked(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// out += scale * dK(a, b)/db. By symmetry dK(a, b)/da is grad_second(b, a).
void accumulate_grad_second(const KernelSpec& spec, std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> out);

/// G[i][j] = K(p_i, p_j); each unordered pair is evaluated once and mirrored.
Matrix gram(const KernelSpec& spec, const PointsRef& points);

/// C[i][j] = K(a_i, b_j).
Matrix cross(const KernelSpec& spec, const PointsRef& a, const PointsRef& b);

/// sum_s weights[s] * K(p_s, query). Terms are evaluated in parallel and
/// summed in index order, so the result is independent of the thread count.
double weighted_sum(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                    std::span<const double> query);

/// out += scale * sum_s weights[s] * dK(p_s, query)/dquery.
void accumulate_weighted_sum_grad(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                                  std::span<const double> query, double scale, std::span<double> out);

/// Kernel-target alignment sum_ij y_i y_j G_ij / (k * |G|_F), in [-1, 1].
double alignment(const Matrix& gram_block, std::span<const int> labels);

/// Shannon entropy of the trace-normalized spectrum divided by ln(m), in [0, 1].
double von_neumann_entropy(const Matrix& gram);

double min_eigenvalue(const Matrix& symmetric);

struct GramDiagnostics {
  double entropy = 0.0;
  double alignment = 0.0;
  double distance_to_identity = 0.0;
  double distance_to_ones = 0.0;
};

GramDiagnostics diagnose(const Matrix& gram, std::span<const int> labels);

/// Single-threaded reference implementations of the parallel kernels above.
namespace serial {

Matrix gram(const KernelSpec& spec, const PointsRef& points);
Matrix cross(const KernelSpec& spec, const PointsRef& a, const PointsRef& b);
double weighted_sum(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                    std::span<const double> query);

}  // namespace serial

}  // namespace nsvm::kernels
