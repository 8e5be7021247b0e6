#include <cmath>

#include "doctest.h"
#include "graphre/autodiff.hpp"
#include "graphre/errors.hpp"

using namespace graphre;
using namespace graphre::ad;

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("every registered primitive passes the finite-difference check") {
  for (const auto& op : gradient_check_ops()) {
    auto report = gradient_check(op, 42, 1e-6);
    INFO("op: ", op, " max_rel_error: ", report.max_rel_error);
    CHECK(report.passed);
  }
}

TEST_CASE("relu gradient is exact away from the kink") {
  Tape t;
  Matrix x(2, 2);
  x << 0.5, 1.5, 2.0, 3.0;
  Value v = t.var(x);
  Value loss = sum_all(relu(v));
  t.backward(loss);
  CHECK(t.grad(v) == Matrix::Ones(2, 2));
}

TEST_CASE("gradient accumulates across shared uses") {
  Tape t;
  Matrix x(1, 1);
  x << 3.0;
  Value v = t.var(x);
  Value y = add(hadamard(v, v), v);  // x^2 + x, dy/dx = 2x + 1
  t.backward(sum_all(y));
  CHECK(t.grad(v)(0, 0) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("normalize_adjacency matches the closed form") {
  // Path graph on 3 nodes as a dense relaxed adjacency.
  Tape t;
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  a(1, 2) = a(2, 1) = 1.0;
  Value av = t.var(a);
  Value ahat = normalize_adjacency(av);
  const Matrix& m = t.value(ahat);
  CHECK(m(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(m(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(m(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("masked_cross_entropy matches hand-computed value") {
  Tape t;
  Matrix z(2, 2);
  z << 1.0, 0.0, 0.0, 1.0;
  Value v = t.var(z);
  Value loss = masked_cross_entropy(v, {0, 0}, {0, 1});
  // Row 0: -log(e/(e+1)); row 1: -log(1/(1+e)).
  double expected =
      0.5 * (-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)) -
             std::log(1.0 / (1.0 + std::exp(1.0))));
  CHECK(t.value(loss)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(masked_cross_entropy(v, {0, 0}, {}), Error);
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  Value v = t.var(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(v), Error);
}

TEST_CASE("dropout in eval mode is the identity") {
  Tape t;
  Rng rng(5);
  Matrix x = Matrix::Random(3, 3);
  Value v = t.var(x);
  Value out = dropout(v, 0.5, rng, false);
  CHECK(t.value(out) == x);
}

TEST_CASE("dropout in train mode zeroes and rescales") {
  Tape t;
  Rng rng(5);
  Matrix x = Matrix::Ones(20, 20);
  Value out = dropout(t.var(x), 0.5, rng, true);
  const Matrix& y = t.value(out);
  int zeros = 0;
  for (int i = 0; i < y.rows(); ++i) {
    for (int j = 0; j < y.cols(); ++j) {
      if (y(i, j) == 0.0) {
        ++zeros;
      } else {
        CHECK(y(i, j) == doctest::Approx(2.0).epsilon(1e-12));
      }
    }
  }
  CHECK(zeros > 100);
  CHECK(zeros < 300);
}

TEST_SUITE_END();
