#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "vibgmm/autodiff.hpp"
#include "vibgmm/rng.hpp"

using namespace vibgmm;
using vibgmm::testing::gradient_check;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
      c.at(i, j) = s;
    }
  return c;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST(Matmul, IdentityTimesColumn) {
  Tape tape;
  const Var r = matmul(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(r.value(), Tensor::matrix({{3}, {4}}));
}

TEST(Matmul, RowTimesColumn) {
  Tape tape;
  const Var r = matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(r.value().item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor got = matmul(tape.constant(a), tape.constant(b)).value();
  const Tensor want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Matmul, InnerMismatchThrows) {
  Tape tape;
  EXPECT_THROW(matmul(tape.constant(Tensor(Shape{2, 3})), tape.constant(Tensor(Shape{2, 3}))), DimensionError);
}

TEST(Matmul, GradientRule) {
  Rng rng(3);
  auto r = gradient_check([](Tape&, const std::vector<Var>& v) { return sum(square(matmul(v[0], v[1]))); },
                          {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_at;
}

TEST(Elementwise, Relu) {
  Tape tape;
  EXPECT_EQ(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
}

TEST(Elementwise, SigmoidAtZero) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::vector({0}))).value()[0], 0.5);
}

TEST(Elementwise, SigmoidStableAtExtremes) {
  Tape tape;
  const Tensor y = sigmoid(tape.constant(Tensor::vector({-800, 800}))).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(Elementwise, ExpDerivativeAtOne) {
  Parameter x{"x", Tensor::vector({1.0}), {}};
  Tape tape;
  tape.backward(sum(exp(tape.param(x))));
  const double ad = (*x.grad)[0];
  const double h = 1e-5;
  const double fd = (std::exp(1.0 + h) - std::exp(1.0 - h)) / (2 * h);
  EXPECT_NEAR(ad, std::numbers::e, 1e-12);
  EXPECT_LT(std::abs(ad - fd) / std::abs(fd), 1e-6);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(log(tape.constant(Tensor::vector({-2.0}))), DomainError);
}

TEST(Elementwise, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Tensor(Shape{2, 3})), tape.constant(Tensor(Shape{3, 2}))), DimensionError);
}

TEST(Elementwise, ScalarAndRowBroadcast) {
  Tape tape;
  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(add(m, tape.constant(Tensor::vector({10, 20}))).value(), Tensor::matrix({{11, 22}, {13, 24}}));
  EXPECT_EQ(mul(tape.constant(Tensor::scalar(2)), m).value(), Tensor::matrix({{2, 4}, {6, 8}}));
}

TEST(Elementwise, AllOpsPassGradientCheck) {
  Rng rng(5);
  const Tensor a = random_tensor({2, 3}, rng, 0.2, 1.5), b = random_tensor({2, 3}, rng, 0.2, 1.5);
  const Tensor row = random_tensor({3}, rng, 0.2, 1.5);
  auto r = gradient_check(
      [](Tape&, const std::vector<Var>& v) {
        const Var x = v[0], y = v[1], bias = v[2];
        Var t = add(mul(x, y), div(x, y));
        t = add(t, sub(exp(x), log(y)));
        t = add(t, sigmoid(x) * 3.0);
        t = add(t, square(neg(y)));
        t = add(t, relu(sub(x, y)));
        t = add(t, mul(x, bias));
        t = add(t, div(bias, y));
        return sum(t);
      },
      {a, b, row});
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_at;
}

TEST(Reduce, SumAndMean) {
  Tape tape;
  const Var v = tape.constant(Tensor::vector({1, 2, 3}));
  EXPECT_EQ(sum(v).item(), 6.0);
  EXPECT_EQ(mean(v).item(), 2.0);
  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(sum(m, 0).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(sum(m, 1).value(), Tensor::vector({3, 7}));
  EXPECT_EQ(mean(m, 1).value(), Tensor::vector({1.5, 3.5}));
}

TEST(Reduce, BadAxisThrows) {
  Tape tape;
  EXPECT_THROW(sum(tape.constant(Tensor::matrix({{1, 2}})), 2), DimensionError);
}

TEST(Reduce, LogsumexpOfZeros) {
  Tape tape;
  EXPECT_NEAR(logsumexp(tape.constant(Tensor::vector({0, 0}))).item(), std::log(2.0), 1e-15);
}

TEST(Reduce, LogsumexpNoOverflow) {
  Tape tape;
  // exp(1000) overflows; log(2 e^1000) = 1000 + log 2 analytically.
  const double got = logsumexp(tape.constant(Tensor::vector({1000, 1000}))).item();
  EXPECT_DOUBLE_EQ(got, 1000.0 + 0.69314718055994530942);
}

TEST(Reduce, LogsumexpMatchesNaiveWithinRelative1e12) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor v = random_tensor({7}, rng, -20.0, 20.0);
    double naive = 0.0;
    for (double x : v.data()) naive += std::exp(x);
    naive = std::log(naive);
    Tape tape;
    EXPECT_NEAR(logsumexp(tape.constant(v)).item(), naive, 1e-12 * std::abs(naive));
  }
}

TEST(Reduce, AxisReductionsPassGradientCheck) {
  Rng rng(6);
  auto r = gradient_check(
      [](Tape&, const std::vector<Var>& v) {
        const Var m = v[0];
        return add(add(sum(square(logsumexp(m, 1))), sum(square(sum(m, 0)))),
                   add(sum(mul(log_softmax(m, 1), m)), mean(square(mean(m, 1)))));
      },
      {random_tensor({3, 4}, rng, -2.0, 2.0)});
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_at;
}

TEST(Structural, SliceSelectStackGradients) {
  Rng rng(8);
  auto r = gradient_check(
      [](Tape&, const std::vector<Var>& v) {
        const Var m = v[0];
        const Var left = slice_cols(m, 0, 2), right = slice_cols(m, 2, 4);
        const Var stacked = stack_cols({sum(left, 1), sum(square(right), 1)});
        return add(sum(mul(stacked, stacked)), sum(exp(select_row(m, 1))));
      },
      {random_tensor({3, 4}, rng)});
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_at;
}

TEST(Backward, SumOfSquares) {
  Parameter x{"x", Tensor::vector({1, 2}), {}};
  Tape tape;
  tape.backward(sum(square(tape.param(x))));
  EXPECT_EQ(*x.grad, Tensor::vector({2, 4}));
}

TEST(Backward, SigmoidOfProductAtZero) {
  Parameter w{"w", Tensor::matrix({{0.0}}), {}};
  Tape tape;
  tape.backward(sum(sigmoid(matmul(tape.constant(Tensor::matrix({{1.0}})), tape.param(w)))));
  EXPECT_DOUBLE_EQ((*w.grad)[0], 0.25);
}

TEST(Backward, DetachedLossIsUsageError) {
  Tape tape;
  const Var v = sum(tape.constant(Tensor::vector({1, 2})));
  tape.clear();
  EXPECT_THROW(tape.backward(v), UsageError);
  EXPECT_THROW((void)v.value(), UsageError);
  Var empty;
  EXPECT_THROW(tape.backward(empty), UsageError);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape tape;
  EXPECT_THROW(tape.backward(tape.constant(Tensor::vector({1, 2}))), UsageError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Parameter x{"x", Tensor::vector({3.0}), {}};
  Tape tape;
  const Var p = tape.param(x);
  const Var y = mul(p, p);
  tape.backward(sum(add(y, y)));  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ((*x.grad)[0], 12.0);
}

TEST(Backward, ClampHasZeroGradientOutside) {
  Parameter x{"x", Tensor::vector({-2.0, 0.5, 3.0}), {}};
  Tape tape;
  tape.backward(sum(clamp(tape.param(x), 0.0, 1.0)));
  EXPECT_EQ(*x.grad, Tensor::vector({0, 1, 0}));
}

TEST(Backward, RandomNetworksPassGradientCheck) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4, 3}, rng), w1 = random_tensor({3, 5}, rng), b1 = random_tensor({5}, rng);
    const Tensor w2 = random_tensor({5, 2}, rng);
    auto r = gradient_check(
        [](Tape&, const std::vector<Var>& v) {
          const Var h = sigmoid(add(matmul(v[0], v[1]), v[2]));
          return mean(square(matmul(h, v[3])));
        },
        {x, w1, b1, w2});
    EXPECT_LT(r.worst_relative, 1e-4) << "trial " << trial << ": " << r.worst_at;
  }
}

TEST(Backward, DeterministicGradients) {
  auto run = [] {
    Rng rng(4);
    Parameter w{"w", random_tensor({3, 3}, rng), {}};
    const Tensor x = random_tensor({5, 3}, rng);
    Tape tape;
    tape.backward(sum(relu(matmul(tape.constant(x), tape.param(w)))));
    return *w.grad;
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, NonFiniteResultIsNumericError) {
  Tape tape;
  EXPECT_THROW(exp(tape.constant(Tensor::vector({1000.0}))), NumericError);
}

TEST(Broadcast, SizeOnePairKeepsHigherRank) {
  Tape tape;
  const Var a = tape.constant(Tensor::vector({2.0}));
  const Var b = tape.constant(Tensor(Shape{1, 1}, {0.5}));
  EXPECT_EQ((a - b).value().shape(), (Shape{1, 1}));
  EXPECT_EQ((b - a).value().shape(), (Shape{1, 1}));
  EXPECT_EQ((a - b).value()[0], 1.5);
}
