#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nsvm/error.hpp"
#include "nsvm/kernels.hpp"

using namespace nsvm;
using namespace nsvm::kernels;

TEST_SUITE("kernels") {

TEST_CASE("rbf and normalized linear values") {
  const std::vector<double> a{0.3, -0.7};
  CHECK(eval(KernelSpec::rbf(1.0), a, a) == 1.0);
  const std::vector<double> o{0.0, 0.0}, e1{1.0, 0.0};
  CHECK(eval(KernelSpec::rbf(1.0), o, e1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(eval(KernelSpec::rbf(1.0), o, e1) == doctest::Approx(0.3678794).epsilon(1e-7));
  const std::vector<double> p{2.0, 0.0}, q{4.0, 0.0};
  CHECK(eval(KernelSpec::linear(true), p, q) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> z(320, 0.0), u(320, 0.0);
  u[0] = 1.0;
  CHECK(eval(KernelSpec::rbf(1.0 / 320.0), z, u) == doctest::Approx(0.9968799).epsilon(1e-7));
}

TEST_CASE("eval rejects bad arguments") {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  CHECK_THROWS_AS(eval(KernelSpec::rbf(1.0), a, b), Error);
  const std::vector<double> bad{1.0, NAN};
  CHECK_THROWS_AS(eval(KernelSpec::rbf(1.0), a, bad), Error);
  CHECK_THROWS_AS(KernelSpec::rbf(0.0).validate(), Error);
  CHECK_THROWS_AS(KernelSpec::rbf(-1.0).validate(), Error);
}

TEST_CASE("eval matches the definition and is symmetric") {
  Rng rng(11);
  for (const auto& spec : {KernelSpec::rbf(0.3), KernelSpec::rbf(2.0, true), KernelSpec::linear(),
                           KernelSpec::linear(true)}) {
    for (int rep = 0; rep < 50; ++rep) {
      const Vector a = testing::random_matrix(rng, 5, 1), b = testing::random_matrix(rng, 5, 1);
      const double ab = eval(spec, {a.data(), 5}, {b.data(), 5});
      CHECK(ab == eval(spec, {b.data(), 5}, {a.data(), 5}));
      CHECK(ab == doctest::Approx(testing::kernel_oracle(spec, a, b)).epsilon(1e-13));
      if (spec.normalized) CHECK(eval(spec, {a.data(), 5}, {a.data(), 5}) == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("gram small cases") {
  Matrix one = Matrix::Zero(2, 1);
  CHECK(gram(KernelSpec::rbf(1.0), one)(0, 0) == 1.0);
  Matrix two(2, 2);
  two << 0, 1, 0, 0;
  const Matrix g = gram(KernelSpec::rbf(1.0), two);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(1, 1) == 1.0);
  CHECK(g(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(g(0, 1) == g(1, 0));
}

TEST_CASE("gram is PSD and symmetric on random sets") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const auto m = static_cast<Eigen::Index>(2 + rng.uniform_index(9));
    const Matrix pts = testing::random_matrix(rng, 4, m);
    const KernelSpec spec = rep % 2 ? KernelSpec::rbf(0.5) : KernelSpec::linear(rep % 3 == 0);
    const Matrix g = gram(spec, pts);
    CHECK(g == g.transpose());
    CHECK(min_eigenvalue(g) >= -1e-8 * std::max(1.0, g.trace()));
  }
}

TEST_CASE("parallel routines equal the serial reference bitwise") {
  Rng rng(3);
  const Matrix pts = testing::random_matrix(rng, 6, 700);
  const Matrix other = testing::random_matrix(rng, 6, 300);
  std::vector<double> w(700);
  for (auto& v : w) v = rng.normal();
  for (const auto& spec : {KernelSpec::rbf(0.2), KernelSpec::linear(true)}) {
    CHECK(gram(spec, pts) == serial::gram(spec, pts));
    CHECK(cross(spec, pts, other) == serial::cross(spec, pts, other));
    CHECK(weighted_sum(spec, pts, w, column(other, 0)) == serial::weighted_sum(spec, pts, w, column(other, 0)));
  }
}

TEST_CASE("weighted sum gradient matches finite differences") {
  Rng rng(9);
  for (const auto& spec : {KernelSpec::rbf(0.4), KernelSpec::linear(), KernelSpec::linear(true),
                           KernelSpec::rbf(0.7, true)}) {
    const Matrix pts = testing::random_matrix(rng, 3, 6);
    std::vector<double> w(6);
    for (auto& v : w) v = rng.normal();
    const Vector q = testing::random_matrix(rng, 3, 1);
    std::vector<double> grad(3, 0.0);
    accumulate_weighted_sum_grad(spec, pts, w, {q.data(), 3}, 1.0, grad);
    const auto fd = testing::fd_gradient([&](std::span<const double> x) { return weighted_sum(spec, pts, w, x); },
                                         {q.data(), 3});
    CHECK(testing::rel_l2(grad, fd) < 1e-6);
  }
}

TEST_CASE("alignment values") {
  Matrix g(2, 2);
  g << 1, -1, -1, 1;
  const std::vector<int> y{1, -1};
  CHECK(alignment(g, y) == 1.0);
  CHECK(alignment(Matrix::Ones(2, 2), y) == 0.0);
  const std::vector<int> same{1, 1};
  CHECK(alignment(Matrix::Identity(2, 2), same) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(alignment(Matrix::Zero(2, 2), y), Error);
  const std::vector<int> single{1};
  CHECK_THROWS_AS(alignment(Matrix::Ones(1, 1), single), Error);
}

TEST_CASE("alignment is bounded") {
  Rng rng(21);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t k = 2 + rng.uniform_index(7);
    const Matrix a = testing::random_matrix(rng, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    const Matrix g = a + a.transpose();
    CHECK(std::abs(alignment(g, testing::random_labels(rng, k))) <= 1.0 + 1e-12);
  }
}

TEST_CASE("entropy endpoints and a hand-computed spectrum") {
  CHECK(von_neumann_entropy(Matrix::Identity(6, 6)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(von_neumann_entropy(Matrix::Ones(6, 6)) == doctest::Approx(0.0).epsilon(1e-12));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  const double expected = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)) / std::log(2.0);
  CHECK(von_neumann_entropy(d) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.8113).epsilon(1e-4));
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;  // eigenvalues 3 and -1
  CHECK_THROWS_AS(von_neumann_entropy(bad), Error);
}

TEST_CASE("gram limits under a scaled feature map") {
  Rng rng(4);
  const Matrix x = testing::random_matrix(rng, 3, 10);
  double prev_id = INFINITY, prev_ones = -INFINITY;
  for (double theta : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const Matrix g = gram(KernelSpec::rbf(1.0), theta * x);
    const double to_id = (g - Matrix::Identity(10, 10)).norm();
    const double to_ones = (g - Matrix::Ones(10, 10)).norm();
    CHECK(to_id <= prev_id);
    CHECK(to_ones >= prev_ones);
    prev_id = to_id;
    prev_ones = to_ones;
  }
}

}  // TEST_SUITE
