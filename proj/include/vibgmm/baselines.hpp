#pragma once

// Classical clustering baselines on raw feature matrices: Lloyd's K-means
// with k-means++ seeding, and EM for a diagonal-covariance GMM.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "vibgmm/autodiff.hpp"
#include "vibgmm/errors.hpp"
#include "vibgmm/rng.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm {

struct KmeansState {
  Tensor centroids;                 // [k x d]
  std::vector<int> assignments;     // [N]
  std::vector<double> sse_history;  // within-cluster SSE after each assignment step
  std::size_t iterations = 0;
  bool converged = false;

  double sse() const { return sse_history.empty() ? 0.0 : sse_history.back(); }
};

namespace detail {

inline double squared_distance(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  const std::size_t d = a.cols();
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[ra * d + j] - b[rb * d + j];
    s += diff * diff;
  }
  return s;
}

inline void check_clusterable(const Tensor& data, std::size_t k) {
  if (data.rank() != 2) throw DimensionError("clustering expects an [N x d] matrix");
  if (k == 0 || k > data.rows()) {
    throw ValidationError("cluster count " + std::to_string(k) + " must lie in [1, N=" +
                          std::to_string(data.rows()) + "]");
  }
}

inline Tensor kmeanspp_seed(const Tensor& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.rows(), d = data.cols();
  Tensor centroids(Shape{k, d});
  auto copy_row = [&](std::size_t c, std::size_t r) {
    for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = data[r * d + j];
  };
  copy_row(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(data, i, centroids, c - 1));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    copy_row(c, pick);
  }
  return centroids;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeds. Stops when assignments repeat or
/// after max_iters assignment steps. An emptied cluster is re-seeded at the
/// point farthest from its current centroid.
inline KmeansState kmeans(const Tensor& data, std::size_t k, std::uint64_t seed,
                          std::size_t max_iters = 300) {
  detail::check_clusterable(data, k);
  const std::size_t n = data.rows(), d = data.cols();
  Rng rng(seed);
  KmeansState st;
  st.centroids = detail::kmeanspp_seed(data, k, rng);
  st.assignments.assign(n, -1);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    std::vector<int> next(n);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = detail::squared_distance(data, i, st.centroids, c);
        if (dd < best) {
          best = dd;
          arg = static_cast<int>(c);
        }
      }
      next[i] = arg;
      dist[i] = best;
      sse += best;
    }
    st.sse_history.push_back(sse);
    st.iterations = it + 1;
    const bool same = next == st.assignments;
    st.assignments = std::move(next);
    if (same) {
      st.converged = true;
      break;
    }

    Tensor sums(Shape{k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(st.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += data[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const std::size_t far = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (std::size_t j = 0; j < d; ++j) st.centroids[c * d + j] = data[far * d + j];
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) {
        st.centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
      }
    }
  }
  return st;
}

/// Best of `restarts` independent K-means runs by final SSE.
inline KmeansState kmeans_restarts(const Tensor& data, std::size_t k, std::uint64_t seed,
                                   std::size_t restarts, std::size_t max_iters = 300) {
  KmeansState best = kmeans(data, k, seed, max_iters);
  for (std::size_t r = 1; r < restarts; ++r) {
    KmeansState cand = kmeans(data, k, splitmix64(seed + r), max_iters);
    if (cand.sse() < best.sse()) best = std::move(cand);
  }
  return best;
}

struct EmGmmState {
  std::vector<double> weights;  // [k]
  Tensor means;                 // [k x d]
  Tensor variances;             // [k x d]
  Tensor responsibilities;      // [N x k]
  std::vector<double> log_likelihood_history;
  std::size_t iterations = 0;
  bool converged = false;

  std::vector<int> assignments() const {
    std::vector<int> out(responsibilities.rows());
    const std::size_t k = weights.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (responsibilities[i * k + c] > responsibilities[i * k + best]) best = c;
      }
      out[i] = static_cast<int>(best);
    }
    return out;
  }
};

/// EM for a diagonal GMM initialised from K-means. Stops once the
/// log-likelihood improves by less than `tol` or after max_iters E-steps.
/// Variances are clamped at `variance_floor`.
inline EmGmmState em_gmm(const Tensor& data, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters = 200, double tol = 1e-6,
                         double variance_floor = 1e-6) {
  detail::check_clusterable(data, k);
  const std::size_t n = data.rows(), d = data.cols();
  EmGmmState st;
  st.means = Tensor(Shape{k, d});
  st.variances = Tensor(Shape{k, d});
  st.weights.assign(k, 0.0);

  {
    const KmeansState init = kmeans(data, k, seed, 50);
    std::vector<double> counts(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(init.assignments[i])] += 1.0;
    st.means = init.centroids;
    std::vector<double> global_var(d, 0.0), global_mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) global_mean[j] += data[i * d + j] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = data[i * d + j] - global_mean[j];
        global_var[j] += diff * diff / static_cast<double>(n);
      }
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(init.assignments[i]);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = data[i * d + j] - st.means[c * d + j];
        st.variances[c * d + j] += diff * diff;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      st.weights[c] = std::max(counts[c], 1.0) / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double v = counts[c] > 1.0 ? st.variances[c * d + j] / counts[c] : global_var[j];
        st.variances[c * d + j] = std::max(v, variance_floor);
      }
    }
    double wsum = 0.0;
    for (double w : st.weights) wsum += w;
    for (double& w : st.weights) w /= wsum;
  }

  const double log_2pi = std::log(2.0 * std::numbers::pi);
  st.responsibilities = Tensor(Shape{n, k});
  std::vector<double> row(k);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double lp = std::log(st.weights[c]);
        for (std::size_t j = 0; j < d; ++j) {
          const double v = st.variances[c * d + j];
          const double diff = data[i * d + j] - st.means[c * d + j];
          lp -= 0.5 * (log_2pi + std::log(v) + diff * diff / v);
        }
        row[c] = lp;
      }
      const double lse = logsumexp_values(row);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) st.responsibilities[i * k + c] = std::exp(row[c] - lse);
    }
    st.log_likelihood_history.push_back(ll);
    st.iterations = it + 1;
    const auto& h = st.log_likelihood_history;
    if (h.size() >= 2 && h[h.size() - 1] - h[h.size() - 2] < tol) {
      st.converged = true;
      break;
    }
    if (it + 1 == max_iters) break;

    // M-step
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += st.responsibilities[i * k + c];
      if (nk < 1e-12) continue;  // vanished component keeps its parameters
      st.weights[c] = nk / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += st.responsibilities[i * k + c] * data[i * d + j];
        m /= nk;
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double diff = data[i * d + j] - m;
          v += st.responsibilities[i * k + c] * diff * diff;
        }
        st.means[c * d + j] = m;
        st.variances[c * d + j] = std::max(v / nk, variance_floor);
      }
    }
    double wsum = 0.0;
    for (double w : st.weights) wsum += w;
    for (double& w : st.weights) w /= wsum;
  }
  return st;
}

}  // namespace vibgmm
