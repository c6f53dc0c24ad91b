#pragma once

// Weighted Poisson profile log-likelihood with the sample intensities gamma
// profiled out in closed form, plus the score and expected information of the
// profiled criterion in natural coordinates.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/model.hpp"
#include "mbias/numeric.hpp"

namespace mbias {

/// Per-cell likelihood weights, normalized so that they sum to n*J.
class WeightTable {
 public:
  WeightTable() = default;

  explicit WeightTable(MatrixXd v) : v_(std::move(v)) {
    if (v_.size() == 0) throw ShapeError("weight table is empty");
    for (Eigen::Index k = 0; k < v_.size(); ++k) {
      if (!std::isfinite(v_.data()[k]) || !(v_.data()[k] > 0.0)) {
        throw DomainError("likelihood weights must be positive and finite");
      }
    }
    v_ *= static_cast<double>(v_.size()) / v_.sum();
  }

  static WeightTable unit(Eigen::Index n, Eigen::Index J) {
    return WeightTable(MatrixXd::Ones(n, J));
  }

  const MatrixXd& values() const { return v_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return v_(i, j); }
  bool empty() const { return v_.size() == 0; }

 private:
  MatrixXd v_;
};

/// Closed-form maximizer over gamma_i of the weighted Poisson likelihood of one
/// sample: log[(v.W) / (v.mu)].
inline double profile_gamma(const VectorXd& w_row, const VectorXd& mu_row, const VectorXd& v_row) {
  if (w_row.size() != mu_row.size() || w_row.size() != v_row.size()) {
    throw ShapeError("profile_gamma: row lengths differ");
  }
  const double vw = v_row.dot(w_row);
  const double vmu = v_row.dot(mu_row);
  if (!(vw > 0.0)) throw DomainError("profile_gamma: weighted read total must be positive");
  if (!(vmu > 0.0)) {
    throw DomainError("profile_gamma: model assigns zero mean to a sample with observed reads");
  }
  return std::log(vw / vmu);
}

/// Result of evaluating the profiled criterion.
struct ProfileValue {
  double loglik = -std::numeric_limits<double>::infinity();  // M_n, -inf when infeasible
  double deviance = std::numeric_limits<double>::infinity();  // saturated bound minus M_n
  bool feasible = false;
  VectorXd gamma_hat;
};

/// The (weighted) profile criterion for one data set. Optional per-sample
/// multipliers scale each sample's contribution (used by the bootstrap).
///
/// The solver minimizes `deviance` = S - M_n, where S is the saturated bound
/// (1/n) sum_ij w_i v_ij (W_ij log W_ij - W_ij). It differs from -M_n by a
/// constant and stays O(nJ) near a good fit, which keeps objective differences
/// well conditioned.
class Objective {
 public:
  Objective(const CountMatrix& W, const ModelSpec& spec, const WeightTable* cell_weights = nullptr,
            const VectorXd* sample_weights = nullptr)
      : W_(&W), spec_(&spec) {
    spec.check_counts(W);
    const auto n = W.samples();
    const auto J = W.taxa();
    v_ = cell_weights && !cell_weights->empty() ? cell_weights->values() : MatrixXd::Ones(n, J);
    if (v_.rows() != n || v_.cols() != J) throw ShapeError("weight table shape differs from counts");
    if (sample_weights && sample_weights->size() > 0) {
      if (sample_weights->size() != n) throw ShapeError("sample weight length differs from counts");
      s_ = *sample_weights;
    } else {
      s_ = VectorXd::Ones(n);
    }
    vw_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) vw_(i) = v_.row(i).dot(W.values().row(i));
  }

  const ModelSpec& spec() const { return *spec_; }
  const CountMatrix& counts() const { return *W_; }
  const MatrixXd& cell_weights() const { return v_; }
  const VectorXd& sample_weights() const { return s_; }

  ProfileValue evaluate(const ParamSet& ps) const {
    MeanParts parts(ps, spec_->designs());
    return evaluate(parts);
  }

  ProfileValue evaluate(const MeanParts& parts) const {
    const auto& W = W_->values();
    const auto n = W.rows();
    const auto J = W.cols();
    ProfileValue out;
    out.gamma_hat.resize(n);
    CompensatedSum dev;
    CompensatedSum ll;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double vmu = v_.row(i).dot(parts.mu0.row(i));
      if (!(vmu > 0.0) || !std::isfinite(vmu)) return infeasible(n);
      const double c = vw_(i) / vmu;
      out.gamma_hat(i) = std::log(c);
      const double si = s_(i);
      if (si == 0.0) continue;
      CompensatedSum di;
      CompensatedSum li;
      for (Eigen::Index j = 0; j < J; ++j) {
        const double w = W(i, j);
        const double mu = c * parts.mu0(i, j);
        if (w > 0.0) {
          if (!(mu > 0.0)) return infeasible(n);
          di += v_(i, j) * w * std::log(w / mu);
          li += v_(i, j) * w * std::log(mu);
        }
        li += -v_(i, j) * mu;
      }
      dev += si * di.value();
      ll += si * li.value();
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    out.deviance = dev.value() * inv_n;
    out.loglik = ll.value() * inv_n;
    out.feasible = std::isfinite(out.deviance) && std::isfinite(out.loglik);
    if (!out.feasible) return infeasible(n);
    return out;
  }

  /// Minimization target; +inf marks an infeasible point.
  double value(const ParamSet& ps) const {
    const auto pv = evaluate(ps);
    return pv.feasible ? pv.deviance : std::numeric_limits<double>::infinity();
  }

  /// Saturated bound S (the supremum of M_n over all mean vectors).
  double saturated() const {
    const auto& W = W_->values();
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      CompensatedSum row;
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        const double w = W(i, j);
        row += v_(i, j) * (xlogy(w, w) - w);
      }
      acc += s_(i) * row.value();
    }
    return acc.value() / static_cast<double>(W.rows());
  }

  /// Gradient of the deviance and the expected (Fisher) information of the
  /// profiled criterion, restricted to natural coordinates [begin, end).
  void gradient_fim(const ParamSet& ps, int begin, int end, VectorXd& grad, MatrixXd& fim) const {
    MeanParts parts(ps, spec_->designs());
    gradient_fim(ps, parts, begin, end, grad, fim);
  }

  void gradient_fim(const ParamSet& ps, const MeanParts& parts, int begin, int end, VectorXd& grad,
                    MatrixXd& fim) const {
    const auto& d = spec_->designs();
    const auto& lay = spec_->layout();
    const auto& W = W_->values();
    const auto n = W.rows();
    const auto J = W.cols();
    const int L = end - begin;
    grad = VectorXd::Zero(L);
    fim = MatrixXd::Zero(L, L);
    VectorXd b(L);
    std::vector<std::pair<int, double>> cell;
    cell.reserve(16);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double si = s_(i);
      if (si == 0.0) continue;
      const double vmu = v_.row(i).dot(parts.mu0.row(i));
      if (!(vmu > 0.0)) throw SolverError("gradient requested at an infeasible point");
      const double c = vw_(i) / vmu;
      b.setZero();
      bool touched = false;
      for (Eigen::Index j = 0; j < J; ++j) {
        cell.clear();
        parts.for_each_partial(d, lay, ps, i, j, [&](int a, double val) {
          if (a >= begin && a < end) cell.emplace_back(a - begin, val);
        });
        if (cell.empty()) continue;
        touched = true;
        const double mu0 = parts.mu0(i, j);
        const double vij = v_(i, j);
        const double resid = (W(i, j) > 0.0 ? W(i, j) / mu0 : 0.0) - c;
        for (const auto& [a, val] : cell) {
          grad(a) -= si * vij * resid * val;
          b(a) += vij * val;
        }
        if (mu0 > 0.0) {
          const double h = si * c * vij / mu0;
          for (const auto& [a, va] : cell)
            for (const auto& [e, ve] : cell) fim(a, e) += h * va * ve;
        }
      }
      if (touched) fim.noalias() -= (si * c / vmu) * (b * b.transpose());
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    grad *= inv_n;
    fim *= inv_n;
    fim = 0.5 * (fim + fim.transpose()).eval();
  }

 private:
  static ProfileValue infeasible(Eigen::Index n) {
    ProfileValue out;
    out.gamma_hat = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    return out;
  }

  const CountMatrix* W_;
  const ModelSpec* spec_;
  MatrixXd v_;
  VectorXd s_;
  VectorXd vw_;
};

/// Profile log-likelihood M_n at `ps` (gamma ignored; profiled). Returns -inf
/// when the model puts zero mean on an observed count.
inline ProfileValue profile_loglik(const ParamSet& ps, const CountMatrix& W, const ModelSpec& spec,
                                   const WeightTable* weights = nullptr) {
  Objective obj(W, spec, weights);
  return obj.evaluate(ps);
}

}  // namespace mbias
