#include <cmath>

#include "doctest.h"
#include "wgae/autodiff.hpp"
#include "wgae/error.hpp"

using namespace wgae;
using namespace wgae::ad;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::srand(seed);
  Matrix m = Matrix::Random(r, c);
  return ((m.array() + 1.0) * 0.5 * (hi - lo) + lo).matrix();
}

void expect_passes(const Objective& f, std::vector<Matrix> params, double tol = 1e-4) {
  const auto report = check_gradients(f, params, tol);
  CHECK_FALSE(report.non_checkable);
  CHECK(report.failures.empty());
  CHECK(report.max_rel_error <= tol);
}

}  // namespace

TEST_CASE("scalar examples") {
  const std::vector<Matrix> x{scalar(3.0)};
  const auto sq = evaluate_with_gradients([](Tape&, std::span<const Var> p) { return sum(mul(p[0], p[0])); }, x);
  CHECK(sq.value == 9.0);
  CHECK(sq.gradients[0](0, 0) == 6.0);

  const std::vector<Matrix> zero{scalar(0.0)};
  const auto sp = evaluate_with_gradients([](Tape&, std::span<const Var> p) { return sum(softplus(p[0])); }, zero);
  CHECK(sp.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(sp.gradients[0](0, 0) == 0.5);

  const auto fan = evaluate_with_gradients([](Tape&, std::span<const Var> p) { return sum(add(p[0], p[0])); }, x);
  CHECK(fan.gradients[0](0, 0) == 2.0);
}

TEST_CASE("backward errors") {
  Tape t;
  Var w = t.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(w), Error);
  Var neg_one = t.constant(Matrix::Constant(1, 1, -1.0));
  try {
    log(neg_one);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  CHECK_THROWS_AS(add(w, t.constant(Matrix::Ones(3, 2))), Error);
}

TEST_CASE("sum(A H W) gradient equals (A H)^T broadcast") {
  SparseMatrix a(3, 3);
  a.insert(0, 0) = 0.5;
  a.insert(0, 1) = 0.5;
  a.insert(1, 0) = 0.5;
  a.insert(1, 1) = 1.0 / 3;
  a.insert(1, 2) = 0.4;
  a.insert(2, 1) = 0.4;
  a.insert(2, 2) = 0.5;
  a.makeCompressed();
  const Matrix h = random_matrix(3, 4, 1);
  const std::vector<Matrix> w{random_matrix(4, 2, 2)};
  const Objective f = [&](Tape& t, std::span<const Var> p) { return sum(matmul(spmm(a, t.constant(h)), p[0])); };
  const auto ev = evaluate_with_gradients(f, w);
  const Matrix ah = a * h;
  const Matrix expected = ah.transpose() * Matrix::Ones(3, 2);
  CHECK((ev.gradients[0] - expected).cwiseAbs().maxCoeff() < 1e-14);
  const auto report = check_gradients(f, w, 1e-4);
  CHECK(report.passed());
  CHECK(report.max_rel_error < 1e-7);  // linear map
}

TEST_CASE("every primitive passes finite differences") {
  const Matrix a = random_matrix(3, 4, 11);
  const Matrix b = random_matrix(3, 4, 12);
  const Matrix pos = random_matrix(3, 4, 13, 0.3, 2.5);
  const Matrix row = random_matrix(1, 4, 14);
  const Matrix right = random_matrix(4, 2, 15);

  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(add(p[0], p[1]), sub(p[0], p[1]))); }, {a, b});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(div(p[0], p[1])); }, {a, pos});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(scale(add_scalar(neg(p[0]), 2.0), 3.0)); }, {a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(mul_row(p[0], p[1]), p[0])); }, {a, row});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(exp(add_row(p[0], p[1]))); }, {a, row});
  const Matrix column = random_matrix(3, 1, 21);
  expect_passes([](Tape&, std::span<const Var> p) { return sum(exp(mul_col(p[0], p[1]))); }, {a, column});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(row_logsumexp(p[0]), p[1])); }, {a, column});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(exp(matmul(p[0], p[1]))); }, {a, right});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(log(p[0]), p[1])); }, {pos, a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(softplus(p[0]), p[0])); }, {a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(leaky_relu(p[0], 0.2), p[0])); }, {a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(lgamma(p[0])); }, {pos});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(digamma(p[0])); }, {pos});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(reciprocal(p[0])); }, {pos});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(log1mexp(p[0])); }, {pos});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(mul(clamp_min(p[0], -5.0), p[0])); }, {a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(exp(col_sum(p[0]))); }, {a});
  expect_passes([](Tape&, std::span<const Var> p) { return sum(exp(row_sum(p[0]))); }, {a});
  const std::vector<int> idx{2, 0, 2};
  expect_passes([&](Tape&, std::span<const Var> p) { return sum(exp(gather_rows(p[0], idx))); }, {a});

  const Matrix scores = random_matrix(6, 1, 16);
  const Matrix weights = random_matrix(6, 1, 17);
  const std::vector<int> seg{0, 1, 4, 6};
  expect_passes(
      [&](Tape& t, std::span<const Var> p) { return sum(mul(segment_softmax(p[0], seg), t.constant(weights))); },
      {scores});

  const std::vector<int> rows{0, 0, 1, 2, 2, 2};
  const std::vector<int> cols{0, 1, 1, 0, 1, 2};
  const Matrix h = random_matrix(3, 2, 18);
  expect_passes([&](Tape&, std::span<const Var> p) { return sum(exp(edge_spmm(p[0], rows, cols, 3, p[1]))); },
                {weights, h});

  SparseMatrix x(2, 3);
  x.insert(0, 0) = 2;
  x.insert(0, 2) = 1;
  x.insert(1, 1) = 5;
  x.makeCompressed();
  Matrix phi = random_matrix(3, 2, 19, 0.1, 1.0);
  phi.array().rowwise() /= phi.colwise().sum().array();
  const Matrix theta = random_matrix(2, 2, 20, 0.2, 3.0);
  expect_passes([&](Tape&, std::span<const Var> p) { return poisson_loglik(p[0], phi, x); }, {theta});
}

TEST_CASE("weibull reparameterization gradients") {
  const Matrix k = random_matrix(2, 3, 31, 0.5, 4.0);
  const Matrix lambda = random_matrix(2, 3, 32, 0.2, 3.0);
  const Matrix eps = random_matrix(2, 3, 33, 0.05, 0.95);
  const Objective f = [&](Tape&, std::span<const Var> p) { return sum(weibull_reparam(p[0], p[1], eps)); };
  const std::vector<Matrix> params{k, lambda};
  expect_passes(f, params);
  const auto ev = evaluate_with_gradients(f, params);
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    const double w = -std::log1p(-eps(i));
    const double theta = lambda(i) * std::pow(w, 1.0 / k(i));
    CHECK(ev.gradients[1](i) == doctest::Approx(std::pow(w, 1.0 / k(i))));
    CHECK(ev.gradients[0](i) == doctest::Approx(-theta * std::log(w) / (k(i) * k(i))));
  }
}

TEST_CASE("kink detection") {
  const std::vector<Matrix> at_kink{scalar(0.0)};
  const auto report =
      check_gradients([](Tape&, std::span<const Var> p) { return sum(leaky_relu(p[0], 0.2)); }, at_kink, 1e-4);
  CHECK(report.non_checkable);
  CHECK(report.kink_op == "leaky_relu");
  CHECK_FALSE(report.passed());
}

TEST_CASE("failure report lists coordinates") {
  // analytic gradient deliberately wrong: value uses x^2, tape sees a constant
  const std::vector<Matrix> x{Matrix::Constant(2, 1, 1.5)};
  const Objective f = [](Tape& t, std::span<const Var> p) {
    const Matrix v = p[0].value().array().square();
    return add(sum(t.constant(v)), sum(scale(p[0], 0.0)));
  };
  const auto report = check_gradients(f, x, 1e-4);
  CHECK_FALSE(report.passed());
  CHECK(report.failures.size() == 2);
  CHECK(report.failures[0].numeric == doctest::Approx(3.0).epsilon(1e-6));
}
