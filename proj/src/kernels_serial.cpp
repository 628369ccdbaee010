#include "nsvm/error.hpp"
#include "nsvm/kernels.hpp"

namespace nsvm::kernels::serial {

Matrix gram(const KernelSpec& spec, const PointsRef& points) {
  const Eigen::Index m = points.cols();
  Matrix g(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) g(i, j) = eval(spec, column(points, i), column(points, j));
  return g;
}

Matrix cross(const KernelSpec& spec, const PointsRef& a, const PointsRef& b) {
  Matrix c(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) = eval(spec, column(a, i), column(b, j));
  return c;
}

double weighted_sum(const KernelSpec& spec, const PointsRef& points, std::span<const double> weights,
                    std::span<const double> query) {
  require(static_cast<std::size_t>(points.cols()) == weights.size(), ErrorCode::dimension_mismatch,
          "weighted_sum: weights and points differ in length");
  double sum = 0.0;
  for (Eigen::Index s = 0; s < points.cols(); ++s)
    sum += weights[static_cast<std::size_t>(s)] * eval(spec, column(points, s), query);
  return sum;
}

}  // namespace nsvm::kernels::serial
