#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nsvm/error.hpp"
#include "nsvm/feature_maps.hpp"

using namespace nsvm;
using namespace nsvm::nn;

namespace {

NetworkSpec flat(std::size_t d, std::vector<LayerSpec> layers) {
  NetworkSpec s;
  s.input = {d, 1, 1};
  s.layers = std::move(layers);
  return s;
}

NetworkSpec tiny_cnn(bool dropout) {
  NetworkSpec s;
  s.input = {1, 8, 8};
  s.layers = {LayerSpec::conv2d(1, 2, 3), LayerSpec::maxpool2d(2), LayerSpec::relu(), LayerSpec::conv2d(2, 2, 2)};
  if (dropout) s.layers.push_back(LayerSpec::channel_dropout(0.5));
  s.layers.push_back(LayerSpec::relu());
  return s;
}

// sum of squares of every output entry
OutputObjective squared_norm() {
  return [](const Matrix& out, Matrix* d) {
    if (d) *d = 2.0 * out;
    return out.squaredNorm();
  };
}

// fixed linear read-out; unlike the squared norm it is not constant after normalization
OutputObjective linear_readout() {
  return [](const Matrix& out, Matrix* d) {
    Matrix c(out.rows(), out.cols());
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      for (Eigen::Index i = 0; i < c.rows(); ++i) c(i, j) = 1.0 + static_cast<double>(i) - 0.7 * static_cast<double>(j);
    if (d) *d = c;
    return c.cwiseProduct(out).sum();
  };
}

}  // namespace

TEST_SUITE("feature_maps") {

TEST_CASE("forward examples") {
  const Network dense(flat(3, {LayerSpec::dense(3, 2)}));
  const std::vector<double> zero(dense.param_count(), 0.0);
  Vector x(3);
  x << 1, -2, 3;
  CHECK(dense.forward(zero, x, Mode::infer, nullptr).isZero());

  const Network relu(flat(3, {LayerSpec::relu()}));
  Vector r(3);
  r << -1, 2, 0;
  const Matrix ro = relu.forward({}, r, Mode::infer, nullptr);
  CHECK(ro(0) == 0.0);
  CHECK(ro(1) == 2.0);
  CHECK(ro(2) == 0.0);

  const Network ns(flat(2, {LayerSpec::l2_normalize(1e-12), LayerSpec::scale(std::sqrt(2.0))}));
  Vector v(2);
  v << 3, 4;
  const Matrix o = ns.forward({}, v, Mode::infer, nullptr);
  CHECK(o(0) == doctest::Approx(0.6 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(o(1) == doctest::Approx(0.8 * std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("ringnorm and MNIST architectures have the expected shapes") {
  NetworkSpec ring = flat(20, {LayerSpec::dense(20, 40), LayerSpec::relu(), LayerSpec::dense(40, 30), LayerSpec::relu(),
                               LayerSpec::dense(30, 20), LayerSpec::relu(), LayerSpec::dense(20, 20)});
  CHECK(Network(ring).output_dim() == 20);
  NetworkSpec cnn;
  cnn.input = {1, 28, 28};
  cnn.layers = {LayerSpec::conv2d(1, 10, 5), LayerSpec::maxpool2d(2), LayerSpec::relu(),
                LayerSpec::conv2d(10, 20, 5), LayerSpec::channel_dropout(0.5), LayerSpec::maxpool2d(2),
                LayerSpec::relu()};
  const Network net(cnn);
  CHECK(net.output_dim() == 320);
  CHECK(net.param_count() == 10 * 25 + 10 + 20 * 10 * 25 + 20);
}

TEST_CASE("invalid specs and inputs are rejected") {
  CHECK_THROWS_AS(Network(flat(3, {LayerSpec::dense(4, 2)})), Error);
  CHECK_THROWS_AS(Network(flat(3, {LayerSpec::channel_dropout(1.0)})), Error);
  const Network net(flat(3, {LayerSpec::dense(3, 2)}));
  const std::vector<double> theta(net.param_count(), 0.1);
  CHECK_THROWS_AS(net.forward(theta, Matrix::Zero(4, 1), Mode::infer, nullptr), Error);
  CHECK_THROWS_AS(net.forward(std::vector<double>(3, 0.0), Matrix::Zero(3, 1), Mode::infer, nullptr), Error);
  const Network big(flat(1, {LayerSpec::scale(1e300), LayerSpec::scale(1e300)}));
  try {
    (void)big.forward({}, Matrix::Ones(1, 1), Mode::infer, nullptr);
    FAIL("expected an overflow error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::non_finite);
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("gradient of the first output picks a single weight") {
  const Network net(flat(3, {LayerSpec::dense(3, 2)}));
  Rng rng(1);
  const auto theta = init_params(net, rng);
  const OutputObjective first = [](const Matrix& out, Matrix* d) {
    if (d) {
      d->setZero(out.rows(), out.cols());
      (*d)(0, 0) = 1.0;
    }
    return out(0, 0);
  };
  const auto vg = grad_theta(net, theta, first, Vector::Unit(3, 0), Rng(0));
  for (std::size_t i = 0; i < vg.grad.size(); ++i) {
    const double expected = (i == 0 || i == net.slices()[0].bias_offset()) ? 1.0 : 0.0;
    CHECK(vg.grad[i] == expected);
  }
}

TEST_CASE("dead relu units get zero gradient") {
  const Network net(flat(2, {LayerSpec::dense(2, 2), LayerSpec::relu(), LayerSpec::dense(2, 1)}));
  std::vector<double> theta(net.param_count(), 0.5);
  // unit 1 of the first layer: weights (-1, -1), bias -1, so inactive for positive inputs
  theta[2] = -1.0;
  theta[3] = -1.0;
  theta[5] = -1.0;
  const auto vg = grad_theta(net, theta, squared_norm(), Vector::Ones(2), Rng(0));
  CHECK(vg.grad[2] == 0.0);
  CHECK(vg.grad[3] == 0.0);
  CHECK(vg.grad[5] == 0.0);
  CHECK(vg.grad[0] != 0.0);
}

TEST_CASE("backprop matches finite differences on random dense nets") {
  Rng rng(17);
  int checked = 0;
  while (checked < 50) {
    const Network net(testing::small_dense(3, 4, 2, checked % 2 == 1));
    auto theta = init_params(net, rng);
    const Matrix x = testing::random_matrix(rng, 3, 2);
    if (testing::min_relu_margin(net, theta, x) < 1e-6) continue;
    const auto vg = grad_theta(net, theta, linear_readout(), x, Rng(0));
    const auto fd = testing::fd_gradient(
        [&](std::span<const double> t) { return objective_value(net, t, linear_readout(), x, Rng(0)); }, theta);
    CHECK(testing::rel_l2(vg.grad, fd) < 1e-5);
    ++checked;
  }
}

TEST_CASE("backprop matches finite differences through conv, pool and dropout") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Network net(tiny_cnn(rep % 2 == 0));
    const auto theta = init_params(net, rng);
    const Matrix x = testing::random_matrix(rng, 64, 2);
    const Rng masks(100 + static_cast<std::uint64_t>(rep));
    const auto vg = grad_theta(net, theta, squared_norm(), x, masks);
    const auto fd = testing::fd_gradient(
        [&](std::span<const double> t) { return objective_value(net, t, squared_norm(), x, masks); }, theta);
    CHECK(testing::rel_l2(vg.grad, fd) < 1e-4);
  }
}

TEST_CASE("dropout masks are reproducible and absent at inference") {
  const Network net(flat(4, {LayerSpec::channel_dropout(0.5)}));
  const Matrix x = Matrix::Ones(4, 3);
  Rng a(9), b(9);
  const Matrix ya = net.forward({}, x, Mode::train, &a);
  const Matrix yb = net.forward({}, x, Mode::train, &b);
  CHECK(ya == yb);
  for (Eigen::Index i = 0; i < ya.size(); ++i) CHECK((ya.data()[i] == 0.0 || ya.data()[i] == 2.0));
  CHECK(net.forward({}, x, Mode::infer, nullptr) == x);
  CHECK_THROWS_AS(net.forward({}, x, Mode::train, nullptr), Error);
}

TEST_CASE("l2 normalize output has unit norm above the floor") {
  Rng rng(2);
  const Network net(flat(5, {LayerSpec::l2_normalize(1e-12)}));
  const Matrix x = testing::random_matrix(rng, 5, 20);
  const Matrix y = net.forward({}, x, Mode::infer, nullptr);
  for (Eigen::Index j = 0; j < y.cols(); ++j) CHECK(std::abs(y.col(j).norm() - 1.0) < 1e-6);
  const Network floor(flat(2, {LayerSpec::l2_normalize(1e-3)}));
  Vector small(2);
  small << 1e-6, 0;
  CHECK(floor.forward({}, small, Mode::infer, nullptr)(0) == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("maxpool ties go to the first index") {
  NetworkSpec s;
  s.input = {1, 2, 2};
  s.layers = {LayerSpec::maxpool2d(2)};
  const Network net(s);
  Tape tape;
  (void)net.forward({}, Matrix::Ones(4, 1), Mode::infer, nullptr, tape);
  CHECK(tape[0].argmax(0, 0) == 0);
}

TEST_CASE("flatten and unflatten round trip") {
  Rng rng(3);
  const Network net(tiny_cnn(true));
  const auto theta = init_params(net, rng);
  CHECK(flatten(net, unflatten(net, theta)) == theta);
}

TEST_CASE("init params are bounded, deterministic and centred") {
  const Network net(flat(20, {LayerSpec::dense(20, 40)}));
  Rng a(5), b(5);
  const auto ta = init_params(net, a);
  CHECK(ta == init_params(net, b));
  const double bound = std::sqrt(6.0 / 20.0);
  for (std::size_t i = 0; i < 800; ++i) CHECK(std::abs(ta[i]) <= bound);
  for (std::size_t i = 800; i < ta.size(); ++i) CHECK(ta[i] == 0.0);

  Rng c(6);
  double sum = 0.0;
  std::size_t count = 0;
  while (count < 100000) {
    const auto t = init_params(net, c);
    for (std::size_t i = 0; i < 800; ++i) sum += t[i];
    count += 800;
  }
  const double sigma = bound / std::sqrt(3.0);
  CHECK(std::abs(sum / static_cast<double>(count)) < 3.0 * sigma / std::sqrt(static_cast<double>(count)));
}

TEST_CASE("derivative-free estimators") {
  const ThetaFunction half_sq = [](std::span<const double> t) {
    double s = 0.0;
    for (double v : t) s += 0.5 * v * v;
    return s;
  };
  const std::vector<double> theta{0.5, -1.0, 2.0, 0.25};
  Rng rng(8);
  const auto fd = estimate_gradient(half_sq, theta, EstimatorKind::fd, rng, 1e-3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(fd[i] == doctest::Approx(theta[i]).epsilon(1e-8));

  // Equal magnitudes keep the per-draw cross-term variance the same for every coordinate.
  const std::vector<double> flat_theta{1.0, -1.0, 1.0, -1.0};
  for (auto [kind, tol] : {std::pair{EstimatorKind::spsa, 0.05}, std::pair{EstimatorKind::rdsa, 0.15}}) {
    std::vector<double> mean(4, 0.0);
    const int draws = 10000;
    for (int r = 0; r < draws; ++r) {
      const auto g = estimate_gradient(half_sq, flat_theta, kind, rng, 1e-3);
      for (std::size_t i = 0; i < 4; ++i) mean[i] += g[i] / draws;
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(mean[i] - flat_theta[i]) <= tol * std::abs(flat_theta[i]));
  }
  CHECK_THROWS_AS(estimate_gradient(half_sq, theta, EstimatorKind::fd, rng, 0.0), Error);
}

TEST_CASE("finite-difference estimate agrees with backprop") {
  Rng rng(12);
  const Network net(testing::small_dense(3, 5, 2));
  const auto theta = init_params(net, rng);
  const Matrix x = testing::random_matrix(rng, 3, 3);
  const auto vg = grad_theta(net, theta, squared_norm(), x, Rng(0));
  const auto est = grad_estimate(net, theta, squared_norm(), x, EstimatorKind::fd, rng, 1e-5);
  CHECK(testing::rel_l2(est, vg.grad) < 1e-4);
}

}  // TEST_SUITE
