// Times the OpenMP kernel routines against their serial references.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "nsvm/kernels.hpp"
#include "nsvm/rng.hpp"

namespace {

template <typename F>
double seconds(F&& f, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  const Eigen::Index m = argc > 1 ? std::atoi(argv[1]) : 1500;
  const Eigen::Index d = argc > 2 ? std::atoi(argv[2]) : 20;
  nsvm::Rng rng(7);
  nsvm::Matrix points(d, m);
  for (Eigen::Index j = 0; j < points.size(); ++j) points.data()[j] = rng.normal();
  std::vector<double> weights(static_cast<std::size_t>(m));
  for (auto& w : weights) w = rng.normal();
  const auto spec = nsvm::kernels::KernelSpec::rbf(1.0 / static_cast<double>(d));
  const auto query = nsvm::column(points, 0);

  std::printf("threads %d, m %ld, d %ld\n", omp_get_max_threads(), static_cast<long>(m), static_cast<long>(d));

  nsvm::Matrix gp, gs;
  const double tg_par = seconds([&] { gp = nsvm::kernels::gram(spec, points); }, 3);
  const double tg_ser = seconds([&] { gs = nsvm::kernels::serial::gram(spec, points); }, 3);
  std::printf("gram          parallel %.4fs serial %.4fs max|diff| %.3g\n", tg_par, tg_ser, (gp - gs).cwiseAbs().maxCoeff());

  const auto half = points.leftCols(m / 2);
  const auto rest = points.rightCols(m - m / 2);
  nsvm::Matrix cp, cs;
  const double tc_par = seconds([&] { cp = nsvm::kernels::cross(spec, half, rest); }, 3);
  const double tc_ser = seconds([&] { cs = nsvm::kernels::serial::cross(spec, half, rest); }, 3);
  std::printf("cross         parallel %.4fs serial %.4fs max|diff| %.3g\n", tc_par, tc_ser, (cp - cs).cwiseAbs().maxCoeff());

  double sp = 0.0, ss = 0.0;
  const double ts_par = seconds([&] { sp = nsvm::kernels::weighted_sum(spec, points, weights, query); }, 200);
  const double ts_ser = seconds([&] { ss = nsvm::kernels::serial::weighted_sum(spec, points, weights, query); }, 200);
  std::printf("weighted_sum  parallel %.6fs serial %.6fs |diff| %.3g\n", ts_par, ts_ser, std::abs(sp - ss));
  return 0;
}
