#pragma once

#include "vibgmm/autodiff.hpp"

namespace vibgmm {

inline constexpr double kDefaultVarianceFloor = 1e-6;

/// Diagonal Gaussian per sample: rows of `mean` and `log_var` are [n_u]
/// vectors, one row per sample in the batch.
struct GaussianPosterior {
  Var mean;
  Var log_var;

  std::size_t batch() const { return mean.value().rows(); }
  std::size_t dim() const { return mean.value().cols(); }
};

}  // namespace vibgmm
