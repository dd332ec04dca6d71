#pragma once

// Gaussian-mixture latent prior with diagonal covariances.
//
// All mixture arithmetic is carried out in log space; exp(-KL) for a distant
// component underflows long before the mixture itself becomes negligible.

#include <cmath>
#include <numbers>
#include <vector>

#include "vibgmm/autodiff.hpp"
#include "vibgmm/gaussian.hpp"
#include "vibgmm/rng.hpp"

namespace vibgmm {

/// Mixture weights (softmax of free logits), component means and diagonal
/// log-variances.
struct GmmParams {
  Parameter weight_logits;  // [C]
  Parameter means;          // [C x n_u]
  Parameter log_vars;       // [C x n_u]
  double variance_floor = kDefaultVarianceFloor;

  GmmParams() = default;
  GmmParams(std::size_t components, std::size_t dim, double floor = kDefaultVarianceFloor)
      : weight_logits{"gmm.weight_logits", Tensor(Shape{components}), {}},
        means{"gmm.means", Tensor(Shape{components, dim}), {}},
        log_vars{"gmm.log_vars", Tensor(Shape{components, dim}), {}},
        variance_floor(floor) {}

  /// Uniform weights, unit variances, means drawn from N(0, 0.25 I).
  static GmmParams random(std::size_t components, std::size_t dim, Rng& rng,
                          double floor = kDefaultVarianceFloor) {
    GmmParams g(components, dim, floor);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& m : g.means.value.data()) m = 0.5 * dist(rng);
    return g;
  }

  std::size_t components() const { return weight_logits.value.size(); }
  std::size_t dim() const { return means.value.cols(); }

  std::vector<Parameter*> parameters() { return {&weight_logits, &means, &log_vars}; }

  std::vector<double> weights() const {
    const auto& l = weight_logits.value;
    const double lse = logsumexp_values(l.data());
    std::vector<double> w(l.size());
    for (std::size_t c = 0; c < l.size(); ++c) w[c] = std::exp(l[c] - lse);
    return w;
  }
};

/// Tape view of GmmParams: log mixture weights and floor-clamped log-variances.
struct GmmVars {
  Var log_weights;  // [C]
  Var means;        // [C x n_u]
  Var log_vars;     // [C x n_u]

  std::size_t components() const { return log_weights.value().size(); }
};

inline GmmVars bind(Tape& tape, GmmParams& gmm) {
  return GmmVars{log_softmax(tape.param(gmm.weight_logits), 0), tape.param(gmm.means),
                 clamp_min(tape.param(gmm.log_vars), std::log(gmm.variance_floor))};
}

/// Builds GmmVars from raw tape values: `weight_logits` [C], `means` and
/// `log_vars` [C x n_u]. Useful when the caller owns the leaves.
inline GmmVars gmm_vars(const Var& weight_logits, const Var& means, const Var& log_vars) {
  return GmmVars{log_softmax(weight_logits, 0), means, log_vars};
}

/// KL(N(mean, diag exp(log_var)) || N(mean_c, diag exp(log_var_c))) for every
/// row of the posterior batch; returns [B].
inline Var kl_gauss_gauss_diag(const GaussianPosterior& p, const Var& mean_c,
                               const Var& log_var_c) {
  const auto& pm = p.mean.value();
  if (pm.rank() != 2 || p.log_var.value().shape() != pm.shape() ||
      mean_c.value().size() != pm.cols() || log_var_c.value().size() != pm.cols()) {
    throw DimensionError("kl_gauss_gauss_diag: posterior " + shape_string(pm.shape()) +
                         " vs component " + shape_string(mean_c.value().shape()));
  }
  const Var inv_var_c = exp(neg(log_var_c));
  const Var mahal = square(p.mean - mean_c) * inv_var_c;
  const Var log_ratio = log_var_c - p.log_var;
  const Var var_ratio = exp(p.log_var) * inv_var_c;
  return 0.5 * sum((mahal + log_ratio + var_ratio) - 1.0, 1);
}

/// [B x C] matrix of KL divergences from each posterior row to each component.
inline Var kl_to_components(const GaussianPosterior& p, const GmmVars& gmm) {
  std::vector<Var> cols;
  for (std::size_t c = 0; c < gmm.components(); ++c) {
    cols.push_back(kl_gauss_gauss_diag(p, select_row(gmm.means, c), select_row(gmm.log_vars, c)));
  }
  return stack_cols(cols);
}

/// Variational approximation of KL(posterior || mixture):
///   -log sum_c pi_c exp(-KL(posterior || component c)).
/// Returns [B].
inline Var kl_variational_lb(const GaussianPosterior& p, const GmmVars& gmm) {
  return neg(logsumexp(gmm.log_weights - kl_to_components(p, gmm), 1));
}

/// [B x C] matrix of log pi_c + log N(u_b; mu_c, Sigma_c).
inline Var joint_log_density(const Var& u, const GmmVars& gmm) {
  const auto& uv = u.value();
  if (uv.rank() != 2 || uv.cols() != gmm.means.value().cols()) {
    throw DimensionError("latent batch " + shape_string(uv.shape()) + " does not match GMM means " +
                         shape_string(gmm.means.value().shape()));
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<Var> cols;
  for (std::size_t c = 0; c < gmm.components(); ++c) {
    const Var mu = select_row(gmm.means, c);
    const Var lv = select_row(gmm.log_vars, c);
    const Var quad = square(u - mu) * exp(neg(lv));
    cols.push_back(-0.5 * sum((quad + lv) + log_2pi, 1));
  }
  return gmm.log_weights + stack_cols(cols);
}

/// log Q(u) for each latent row; returns [B].
inline Var gmm_log_density(const Var& u, const GmmVars& gmm) {
  return logsumexp(joint_log_density(u, gmm), 1);
}

/// Responsibilities q(c | u) for each latent row; returns [B x C] with rows
/// summing to one.
inline Var cluster_posterior(const Var& u, const GmmVars& gmm) {
  return exp(log_softmax(joint_log_density(u, gmm), 1));
}

/// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace vibgmm
