#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "vibgmm/metrics.hpp"
#include "vibgmm/rng.hpp"

using namespace vibgmm;

namespace {

// Every permutation of max(k_pred, k_true) labels; counts out of range are 0.
std::size_t brute_force_matches(const std::vector<int>& pred, const std::vector<int>& truth) {
  const int kp = *std::max_element(pred.begin(), pred.end()) + 1;
  const int kt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int m = std::max(kp, kt);
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += perm[static_cast<std::size_t>(pred[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

}  // namespace

TEST(Accuracy, IdenticalIsOne) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0, 3};
  EXPECT_EQ(clustering_accuracy(y, y), 1.0);
}

TEST(Accuracy, PermutedIsOne) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0, 3};
  const int perm[] = {3, 0, 2, 1};
  std::vector<int> p;
  for (int v : y) p.push_back(perm[v]);
  EXPECT_EQ(clustering_accuracy(p, y), 1.0);
}

TEST(Accuracy, WorkedExample) {
  const std::vector<int> pred{0, 0, 1, 1}, truth{1, 1, 0, 2};
  EXPECT_EQ(brute_force_matches(pred, truth), 3u);
  EXPECT_EQ(clustering_accuracy(pred, truth), 0.75);
}

TEST(Accuracy, MatchesBruteForce) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const int kp = 1 + t % 6, kt = 1 + (t / 6) % 6;
    const std::size_t n = 5 + static_cast<std::size_t>(t % 40);
    const auto pred = random_labels(n, kp, rng), truth = random_labels(n, kt, rng);
    EXPECT_EQ(best_matching_count(confusion_matrix(pred, truth)), brute_force_matches(pred, truth)) << "trial " << t;
  }
}

TEST(Accuracy, InvariantUnderRelabelling) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    auto pred = random_labels(30, 4, rng), truth = random_labels(30, 5, rng);
    const double base = clustering_accuracy(pred, truth);
    std::vector<int> pp{0, 1, 2, 3}, pt{0, 1, 2, 3, 4};
    std::shuffle(pp.begin(), pp.end(), rng);
    std::shuffle(pt.begin(), pt.end(), rng);
    for (auto& v : pred) v = pp[static_cast<std::size_t>(v)];
    for (auto& v : truth) v = pt[static_cast<std::size_t>(v)];
    EXPECT_EQ(clustering_accuracy(pred, truth), base);
  }
}

TEST(Accuracy, ConstantPredictorOnBalancedLabels) {
  std::vector<int> truth;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 7; ++i) truth.push_back(c);
  const std::vector<int> pred(truth.size(), 0);
  EXPECT_DOUBLE_EQ(clustering_accuracy(pred, truth), 1.0 / 5.0);
}

TEST(Accuracy, Errors) {
  const std::vector<int> a{0, 1}, b{0, 1, 1};
  EXPECT_THROW(clustering_accuracy(a, b), DimensionError);
  EXPECT_THROW(clustering_accuracy(std::vector<int>{}, std::vector<int>{}), ValidationError);
  EXPECT_THROW(clustering_accuracy(std::vector<int>{-1}, std::vector<int>{0}), ValidationError);
  EXPECT_THROW(clustering_accuracy(std::vector<int>{100}, std::vector<int>{0}), ValidationError);
}

TEST(Confusion, CountsAndTotal) {
  const std::vector<int> pred{0, 0, 1, 1}, truth{1, 1, 0, 2};
  const ConfusionMatrix cm = confusion_matrix(pred, truth);
  EXPECT_EQ(cm.k_pred, 2u);
  EXPECT_EQ(cm.k_true, 3u);
  EXPECT_EQ(cm.at(0, 1), 2u);
  EXPECT_EQ(cm.at(1, 0), 1u);
  EXPECT_EQ(cm.at(1, 2), 1u);
  EXPECT_EQ(cm.total(), 4u);
}

TEST(Hungarian, SolvesSmallCostMatrix) {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto assign = hungarian_min(cost, 3);
  double total = 0.0;
  for (std::size_t r = 0; r < 3; ++r) total += cost[r * 3 + assign[r]];
  EXPECT_EQ(total, 5.0);
}

TEST(Pca, AxisAlignedDataIsCentredUpToSign) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x(Shape{200, 2});
  for (std::size_t i = 0; i < 200; ++i) {
    x.at(i, 0) = 5.0 * n(rng) + 1.0;
    x.at(i, 1) = 0.5 * n(rng) - 2.0;
  }
  const Projection p = pca_project_2d(x);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_NEAR(std::abs(p.coords.at(i, 0)), std::abs(x.at(i, 0) - p.mean[0]), 1e-2);
  }
  EXPECT_GE(p.eigenvalues[0], p.eigenvalues[1]);
  EXPECT_NEAR(p.captured_variance, 1.0, 1e-12);
}

TEST(Pca, PlanarDataReconstructs) {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const double a[3] = {1.0, 2.0, -1.0}, b[3] = {0.5, -1.0, 3.0}, c[3] = {4.0, 0.0, 1.0};
  Tensor x(Shape{100, 3});
  for (std::size_t i = 0; i < 100; ++i) {
    const double s = n(rng), t = n(rng);
    for (std::size_t j = 0; j < 3; ++j) x.at(i, j) = c[j] + s * a[j] + t * b[j];
  }
  const Projection p = pca_project_2d(x);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double r = p.mean[j] + p.coords.at(i, 0) * p.components.at(0, j) + p.coords.at(i, 1) * p.components.at(1, j);
      EXPECT_NEAR(r, x.at(i, j), 1e-9);
    }
  EXPECT_NEAR(p.captured_variance, 1.0, 1e-12);
}

TEST(Pca, CapturedVarianceInUnitInterval) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Projection p = pca_project_2d(standard_normal(Shape{30, 5}, rng));
    EXPECT_GE(p.captured_variance, 0.0);
    EXPECT_LE(p.captured_variance, 1.0);
    EXPECT_FALSE(p.zero_variance);
  }
}

TEST(Pca, ZeroVarianceFlagged) {
  const Projection p = pca_project_2d(Tensor(Shape{10, 3}, 2.5));
  EXPECT_TRUE(p.zero_variance);
  for (double v : p.coords.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pca, NeedsTwoRows) {
  EXPECT_THROW(pca_project_2d(Tensor(Shape{1, 3})), ValidationError);
}
