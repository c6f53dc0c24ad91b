#pragma once

// Likelihood weights from a centered isotonic mean-variance fit.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/isotonic.hpp"
#include "mbias/likelihood.hpp"
#include "mbias/model.hpp"

namespace mbias {

inline constexpr double kVarianceFloor = 1e-12;

/// Weights v_ij proportional to (mu_ij + 1) / (sigma2_ij + 1), where sigma2 is
/// the centered isotonic regression of squared residuals on fitted means,
/// pooled over all cells. `mu_hat` are fitted means on the count scale.
inline WeightTable estimate_weights(const CountMatrix& W, const MatrixXd& mu_hat) {
  if (mu_hat.rows() != W.samples() || mu_hat.cols() != W.taxa()) {
    throw ShapeError("estimate_weights: fitted means and counts differ in shape");
  }
  const auto cells = static_cast<std::size_t>(mu_hat.size());
  std::vector<double> mu(cells), r2(cells);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < mu_hat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mu_hat.cols(); ++j, ++k) {
      mu[k] = mu_hat(i, j);
      const double r = W(i, j) - mu[k];
      r2[k] = r * r;
      if (!std::isfinite(mu[k]) || !std::isfinite(r2[k])) {
        throw DomainError("estimate_weights: non-finite fitted mean or residual");
      }
    }
  }
  const auto sigma2 = isotonic_fit_unsorted(mu, r2, true);
  MatrixXd v(mu_hat.rows(), mu_hat.cols());
  k = 0;
  for (Eigen::Index i = 0; i < mu_hat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mu_hat.cols(); ++j, ++k) {
      v(i, j) = (mu[k] + 1.0) / (std::max(sigma2[k], kVarianceFloor) + 1.0);
    }
  }
  return WeightTable(std::move(v));
}

}  // namespace mbias
