#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vibgmm/errors.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm {

inline constexpr std::size_t kMaxLabelCount = 64;

struct ConfusionMatrix {
  std::size_t k_pred = 0;
  std::size_t k_true = 0;
  std::vector<std::size_t> counts;  // row-major [k_pred x k_true]

  std::size_t at(std::size_t p, std::size_t t) const { return counts[p * k_true + t]; }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth,
                                        std::size_t max_labels = kMaxLabelCount) {
  if (pred.size() != truth.size()) {
    throw DimensionError("label vectors differ in length: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
  }
  if (pred.empty()) throw ValidationError("cannot score an empty labelling");
  auto count_labels = [max_labels](std::span<const int> v, const char* what) {
    int hi = 0;
    for (int l : v) {
      if (l < 0) throw ValidationError(std::string(what) + " labels must be non-negative");
      hi = std::max(hi, l);
    }
    const auto k = static_cast<std::size_t>(hi) + 1;
    if (k > max_labels) {
      throw ValidationError(std::string(what) + " label count " + std::to_string(k) +
                            " exceeds limit " + std::to_string(max_labels));
    }
    return k;
  };
  ConfusionMatrix cm;
  cm.k_pred = count_labels(pred, "predicted");
  cm.k_true = count_labels(truth, "true");
  cm.counts.assign(cm.k_pred * cm.k_true, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++cm.counts[static_cast<std::size_t>(pred[i]) * cm.k_true + static_cast<std::size_t>(truth[i])];
  }
  return cm;
}

/// Minimum-cost perfect matching on a square row-major cost matrix
/// (Kuhn-Munkres with potentials, O(n^3)). Returns the column assigned to
/// each row.
inline std::vector<std::size_t> hungarian_min(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("hungarian: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

/// Number of samples matched under the best one-to-one mapping of predicted
/// to true labels. The confusion matrix is zero-padded to square.
inline std::size_t best_matching_count(const ConfusionMatrix& cm) {
  const std::size_t n = std::max(cm.k_pred, cm.k_true);
  std::vector<double> cost(n * n, 0.0);
  for (std::size_t p = 0; p < cm.k_pred; ++p)
    for (std::size_t t = 0; t < cm.k_true; ++t) cost[p * n + t] = -static_cast<double>(cm.at(p, t));
  const auto assign = hungarian_min(cost, n);
  std::size_t matched = 0;
  for (std::size_t p = 0; p < cm.k_pred; ++p) {
    if (assign[p] < cm.k_true) matched += cm.at(p, assign[p]);
  }
  return matched;
}

/// Unsupervised clustering accuracy: best-matched fraction of samples.
inline double clustering_accuracy(std::span<const int> pred, std::span<const int> truth,
                                  std::size_t max_labels = kMaxLabelCount) {
  const auto cm = confusion_matrix(pred, truth, max_labels);
  return static_cast<double>(best_matching_count(cm)) / static_cast<double>(pred.size());
}

struct Projection {
  Tensor coords;              // [N x 2]
  Tensor components;          // [2 x d], unit rows, descending eigenvalue
  std::vector<double> mean;   // [d]
  std::vector<double> eigenvalues;  // top two
  double captured_variance = 0.0;   // fraction in [0, 1]
  bool zero_variance = false;
};

/// Projection onto the top-2 principal components of the centred rows.
/// Each component's sign is fixed so its largest-magnitude entry is positive.
inline Projection pca_project_2d(const Tensor& points) {
  if (points.rank() != 2 || points.rows() < 2) {
    throw ValidationError("PCA needs an [N x d] matrix with N >= 2");
  }
  const std::size_t n = points.rows(), d = points.cols();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points.at(i, j);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Projection out;
  out.mean.assign(mu.data(), mu.data() + d);
  out.coords = Tensor(Shape{n, 2});
  out.components = Tensor(Shape{2, d});
  out.eigenvalues.assign(2, 0.0);
  const double trace = cov.trace();
  if (!(trace > 1e-300)) {
    out.zero_variance = true;
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& evals = eig.eigenvalues();   // ascending
  const auto& evecs = eig.eigenvectors();
  const auto dd = static_cast<Eigen::Index>(d);
  double captured = 0.0;
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, dd); ++k) {
    Eigen::VectorXd vec = evecs.col(dd - 1 - k);
    Eigen::Index arg = 0;
    vec.cwiseAbs().maxCoeff(&arg);
    if (vec(arg) < 0) vec = -vec;
    const double lambda = std::max(0.0, evals(dd - 1 - k));
    out.eigenvalues[static_cast<std::size_t>(k)] = lambda;
    captured += lambda;
    for (std::size_t j = 0; j < d; ++j) out.components.at(static_cast<std::size_t>(k), j) = vec(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd proj = x * vec;
    for (std::size_t i = 0; i < n; ++i) out.coords.at(i, static_cast<std::size_t>(k)) = proj(static_cast<Eigen::Index>(i));
  }
  out.captured_variance = std::clamp(captured / trace, 0.0, 1.0);
  return out;
}

}  // namespace vibgmm
