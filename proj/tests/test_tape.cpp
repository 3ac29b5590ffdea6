#include <cmath>

#include "doctest.h"
#include "riskcast/tape.hpp"
#include "test_util.hpp"

using riskcast::ad::Tape;
using riskcast::ad::Var;

TEST_CASE("tape: forward values of basic ops") {
  Tape t;
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 1.0, 2.0;
  b << 3.0, -1.0;
  Var va = t.constant(a), vb = t.constant(b);
  CHECK(t.value(t.add(va, vb))(0, 0) == 4.0);
  CHECK(t.value(t.sub(va, vb))(1, 0) == 3.0);
  CHECK(t.value(t.cwise_mul(va, vb))(0, 0) == 3.0);
  CHECK(t.scalar_value(t.sum(va)) == 3.0);
  CHECK(t.scalar_value(t.max_entries(vb)) == 3.0);
  CHECK(t.value(t.affine(va, 2.0, 1.0))(1, 0) == 5.0);

  Var sm = t.softmax_col(t.constant(Eigen::MatrixXd::Zero(4, 1)));
  for (int i = 0; i < 4; ++i) CHECK(t.value(sm)(i, 0) == doctest::Approx(0.25));
}

TEST_CASE("tape: gradients match finite differences on a composite expression") {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd w1 = testutil::random_matrix(rng, 4, 3, 0.7);
  Eigen::MatrixXd w2 = testutil::random_matrix(rng, 2, 4, 0.7);
  Eigen::MatrixXd x = testutil::random_matrix(rng, 3, 1, 1.0);

  auto loss_value = [&]() {
    Tape t;
    Var vx = t.constant(x);
    Var h = t.tanh(t.matmul(t.param(&w1, nullptr), vx));
    Var o = t.softmax_col(t.matmul(t.param(&w2, nullptr), h));
    Var s = t.sigmoid(t.sum(t.cwise_mul(o, o)));
    return t.scalar_value(t.log(s));
  };

  Eigen::MatrixXd g1, g2;
  {
    Tape t;
    Var vx = t.constant(x);
    Var h = t.tanh(t.matmul(t.param(&w1, &g1), vx));
    Var o = t.softmax_col(t.matmul(t.param(&w2, &g2), h));
    Var s = t.sigmoid(t.sum(t.cwise_mul(o, o)));
    t.backward(t.log(s));
  }

  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) {
      const double fd = testutil::central_diff(loss_value, w1(r, c), 1e-6);
      CHECK(testutil::rel_err(g1(r, c), fd) < 1e-6);
    }
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      const double fd = testutil::central_diff(loss_value, w2(r, c), 1e-6);
      CHECK(testutil::rel_err(g2(r, c), fd) < 1e-6);
    }
}

TEST_CASE("tape: stack, slice, clamp and max route gradients correctly") {
  std::mt19937_64 rng(11);
  Eigen::MatrixXd a = testutil::random_matrix(rng, 3, 1);
  Eigen::MatrixXd b = testutil::random_matrix(rng, 2, 1);

  auto value = [&]() {
    Tape t;
    Var s = t.vstack({t.param(&a, nullptr), t.param(&b, nullptr)});
    Var c = t.clamp(s, -0.8, 0.8);
    Var top = t.rows(c, 0, 3);
    return t.scalar_value(t.add(t.max_entries(top), t.sum(t.exp(c))));
  };

  Eigen::MatrixXd ga, gb;
  {
    Tape t;
    Var s = t.vstack({t.param(&a, &ga), t.param(&b, &gb)});
    Var c = t.clamp(s, -0.8, 0.8);
    Var top = t.rows(c, 0, 3);
    t.backward(t.add(t.max_entries(top), t.sum(t.exp(c))));
  }
  for (int r = 0; r < 3; ++r) {
    const double fd = testutil::central_diff(value, a(r, 0), 1e-6);
    CHECK(testutil::rel_err(ga(r, 0), fd) < 1e-5);
  }
  for (int r = 0; r < 2; ++r) {
    const double fd = testutil::central_diff(value, b(r, 0), 1e-6);
    CHECK(testutil::rel_err(gb(r, 0), fd) < 1e-5);
  }
}

TEST_CASE("tape: backward accumulates across repeated parameter leaves") {
  Eigen::MatrixXd w(1, 1);
  w(0, 0) = 3.0;
  Eigen::MatrixXd g;
  Tape t;
  // f(w) = w * w via two separate leaves; df/dw = 2w = 6.
  Var p1 = t.param(&w, &g);
  Var p2 = t.param(&w, &g);
  t.backward(t.cwise_mul(p1, p2));
  CHECK(g(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("tape: hstack and col round-trip gradients") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd a = testutil::random_matrix(rng, 2, 1);
  Eigen::MatrixXd b = testutil::random_matrix(rng, 2, 1);
  auto value = [&]() {
    Tape t;
    Var m = t.hstack({t.param(&a, nullptr), t.param(&b, nullptr)});
    return t.scalar_value(t.sum(t.tanh(t.col(m, 1))));
  };
  Eigen::MatrixXd ga, gb;
  {
    Tape t;
    Var m = t.hstack({t.param(&a, &ga), t.param(&b, &gb)});
    t.backward(t.sum(t.tanh(t.col(m, 1))));
  }
  CHECK(ga.isZero(0.0));
  for (int r = 0; r < 2; ++r)
    CHECK(testutil::rel_err(gb(r, 0), testutil::central_diff(value, b(r, 0), 1e-6)) < 1e-6);
}
