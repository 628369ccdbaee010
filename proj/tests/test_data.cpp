#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "nsvm/data.hpp"
#include "nsvm/error.hpp"

using namespace nsvm;
using namespace nsvm::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nsvm_data_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

int error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("ringnorm size, balance and determinism") {
  const Dataset d = gen_ringnorm(7400, 1);
  CHECK(d.size() == 7400);
  CHECK(d.dim() == 20);
  const auto pos = std::count(d.labels.begin(), d.labels.end(), 1);
  CHECK(std::abs(2 * pos - 7400) <= 1);
  const Dataset odd = gen_ringnorm(7, 3);
  CHECK(std::abs(2 * std::count(odd.labels.begin(), odd.labels.end(), 1) - 7) <= 1);
  const Dataset again = gen_ringnorm(7400, 1);
  CHECK(again.inputs == d.inputs);
  CHECK(again.labels == d.labels);
  CHECK(gen_ringnorm(7400, 2).inputs != d.inputs);
}

TEST_CASE("ringnorm class-conditional means") {
  const Dataset d = gen_ringnorm(100000, 5);
  Vector sum_pos = Vector::Zero(20), sum_neg = Vector::Zero(20);
  double n_pos = 0, n_neg = 0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d.labels[j] == 1) {
      sum_pos += d.inputs.col(static_cast<Eigen::Index>(j));
      ++n_pos;
    } else {
      sum_neg += d.inputs.col(static_cast<Eigen::Index>(j));
      ++n_neg;
    }
  }
  const double shift = 2.0 / std::sqrt(20.0);
  for (Eigen::Index i = 0; i < 20; ++i) {
    CHECK(std::abs(sum_pos(i) / n_pos) < 3.0 * 2.0 / std::sqrt(n_pos));
    CHECK(std::abs(sum_neg(i) / n_neg - shift) < 3.0 * 1.0 / std::sqrt(n_neg));
  }
}

TEST_CASE("csv parses a handcrafted file exactly") {
  const auto p = scratch("hand.csv");
  write_file(p, "f0,f1,label\n0.5,-1.25,1\n3,1e-3,-1\n-0.1,7,1\n");
  const Dataset d = load_csv(p);
  CHECK(d.size() == 3);
  CHECK(d.inputs(0, 0) == 0.5);
  CHECK(d.inputs(1, 0) == -1.25);
  CHECK(d.inputs(1, 1) == 1e-3);
  CHECK(d.inputs(0, 2) == -0.1);
  CHECK(d.labels == std::vector<int>{1, -1, 1});
}

TEST_CASE("csv errors name the line") {
  const auto p = scratch("bad.csv");
  write_file(p, "f0,label\n1.0,1\n2.0,0\n");
  try {
    (void)load_csv(p);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  write_file(p, "f0,label\n1.0,2.0,1\n");
  CHECK(error_code_of([&] { (void)load_csv(p); }) == static_cast<int>(ErrorCode::parse));
  write_file(p, "f0,label\nabc,1\n");
  CHECK(error_code_of([&] { (void)load_csv(p); }) == static_cast<int>(ErrorCode::parse));
  write_file(p, "f0,label\r\n1.0,1\r\n");
  CHECK(error_code_of([&] { (void)load_csv(p); }) == static_cast<int>(ErrorCode::parse));
  CHECK(error_code_of([&] { (void)load_csv(scratch("missing.csv")); }) == static_cast<int>(ErrorCode::io));
}

TEST_CASE("csv round trip is exact") {
  const Dataset d = gen_ringnorm(100, 9);
  const auto p = scratch("round.csv");
  save_csv(d, p);
  const Dataset back = load_csv(p);
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
}

TEST_CASE("idx handcrafted pair") {
  std::vector<unsigned char> img, lab;
  push_be32(img, 0x803);
  push_be32(img, 3);
  push_be32(img, 2);
  push_be32(img, 2);
  for (unsigned char v : {0, 255, 51, 102, 1, 2, 3, 4, 10, 20, 30, 40}) img.push_back(v);
  push_be32(lab, 0x801);
  push_be32(lab, 3);
  for (unsigned char v : {0, 7, 1}) lab.push_back(v);
  const auto ip = scratch("img.idx"), lp = scratch("lab.idx");
  write_bytes(ip, img);
  write_bytes(lp, lab);
  const Dataset d = load_idx_images(ip, lp, 0, 1);
  CHECK(d.size() == 2);
  CHECK(d.labels == std::vector<int>{-1, 1});
  CHECK(d.inputs(1, 0) == 1.0);
  CHECK(d.inputs(2, 0) == 51 / 255.0);
  CHECK(d.inputs(3, 1) == 40 / 255.0);

  std::vector<unsigned char> short_lab(lab.begin(), lab.end() - 1);
  short_lab[7] = 2;
  write_bytes(lp, short_lab);
  CHECK(error_code_of([&] { (void)load_idx_images(ip, lp, 0, 1); }) == static_cast<int>(ErrorCode::parse));
  write_bytes(lp, lab);
  std::vector<unsigned char> truncated(img.begin(), img.end() - 3);
  write_bytes(ip, truncated);
  CHECK(error_code_of([&] { (void)load_idx_images(ip, lp, 0, 1); }) == static_cast<int>(ErrorCode::parse));
  img[3] = 0x01;
  write_bytes(ip, img);
  CHECK(error_code_of([&] { (void)load_idx_images(ip, lp, 0, 1); }) == static_cast<int>(ErrorCode::parse));
}

TEST_CASE("mnist train files filter to 12665 samples when present") {
  const char* dir = std::getenv("NSVM_MNIST_DIR");
  if (!dir) return;
  const fs::path base(dir);
  if (!fs::exists(base / "train-images-idx3-ubyte")) return;
  const Dataset d = load_idx_images(base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte", 0, 1);
  CHECK(d.size() == 12665);
}

TEST_CASE("standardization") {
  Dataset d;
  d.inputs.resize(1, 2);
  d.inputs << 0, 2;
  d.labels = {1, -1};
  const auto s = standardize_fit(d);
  CHECK(s.mean(0) == 1.0);
  CHECK(s.stddev(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  Dataset q;
  q.inputs = Matrix::Constant(1, 1, 3.0);
  q.labels = {1};
  CHECK(standardize_apply(s, q).inputs(0, 0) == doctest::Approx(1.41421).epsilon(1e-5));

  Dataset c;
  c.inputs.resize(2, 3);
  c.inputs << 5, 5, 5, 1, 2, 3;
  c.labels = {1, -1, 1};
  const auto sc = standardize_fit(c);
  CHECK(sc.stddev(0) == 1.0);
  CHECK(standardize_apply(sc, c).inputs.row(0).isZero());

  const Dataset r = gen_ringnorm(500, 4);
  const Dataset z = standardize_apply(standardize_fit(r), r);
  const auto zs = standardize_fit(z);
  CHECK(zs.mean.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((zs.stddev.array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("splits") {
  const Dataset d = gen_ringnorm(7400, 1);
  const Split s = split_fraction(d, 0.1, true, 3);
  CHECK(s.train.size() == 6660);
  CHECK(s.rest.size() == 740);
  const Split v = split_per_class(s.train, 200, 4);
  CHECK(std::count(v.rest.labels.begin(), v.rest.labels.end(), 1) == 200);
  CHECK(std::count(v.rest.labels.begin(), v.rest.labels.end(), -1) == 200);

  // union of the parts is the original multiset of rows
  std::multiset<std::vector<double>> all, parts;
  const auto rows = [](const Dataset& x, std::multiset<std::vector<double>>& into) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      std::vector<double> row(x.inputs.col(static_cast<Eigen::Index>(j)).data(),
                              x.inputs.col(static_cast<Eigen::Index>(j)).data() + x.dim());
      row.push_back(x.labels[j]);
      into.insert(row);
    }
  };
  rows(d, all);
  rows(s.train, parts);
  rows(s.rest, parts);
  CHECK(all == parts);

  const Split again = split_fraction(d, 0.1, true, 3);
  CHECK(again.rest.inputs == s.rest.inputs);
  CHECK_THROWS_AS(split_per_class(s.rest, 1000, 1), Error);
  CHECK_THROWS_AS(split_fraction(d, 1.5, false, 1), Error);
}

TEST_CASE("synthetic images") {
  const Dataset d = gen_two_gaussian_images(10, 2);
  CHECK(d.dim() == 784);
  CHECK(d.has_both_classes());
  CHECK(gen_two_gaussian_images(10, 2).inputs == d.inputs);
}

}  // TEST_SUITE
