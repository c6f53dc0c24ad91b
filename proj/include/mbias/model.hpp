#pragma once

// Data model for the sequencing measurement model: counts, designs, parameters,
// estimability masks, and the mean function
//
//   mu = D_gamma (Z p) o exp(X beta) + D_gamma Z~' [p~ o exp(gamma~ 1^T)]
//
// where Z~' is Z~ with the rows of spurious scale group g multiplied by
// exp(alpha~_g).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mbias/errors.hpp"

namespace mbias {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kSimplexTol = 1e-8;

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

inline void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                          const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(what + " has shape " + dims(m.rows(), m.cols()) + ", expected " +
                     dims(rows, cols));
  }
}

}  // namespace detail

/// Observed reads (or other nonnegative abundance measurements), samples by taxa.
class CountMatrix {
 public:
  CountMatrix() = default;

  explicit CountMatrix(MatrixXd w) : w_(std::move(w)) {
    if (w_.rows() == 0 || w_.cols() == 0) throw ShapeError("count matrix is empty");
    for (Eigen::Index i = 0; i < w_.rows(); ++i) {
      for (Eigen::Index j = 0; j < w_.cols(); ++j) {
        const double x = w_(i, j);
        if (!std::isfinite(x) || x < 0.0) {
          throw DomainError("count W(" + std::to_string(i) + "," + std::to_string(j) +
                            ") is negative or not finite");
        }
      }
    }
    totals_ = w_.rowwise().sum();
    for (Eigen::Index i = 0; i < w_.rows(); ++i) {
      if (!(totals_(i) > 0.0)) {
        throw ValidationError("sample " + std::to_string(i) +
                              " has zero total reads; drop this sample before fitting");
      }
    }
  }

  const MatrixXd& values() const { return w_; }
  const VectorXd& row_totals() const { return totals_; }
  Eigen::Index samples() const { return w_.rows(); }
  Eigen::Index taxa() const { return w_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return w_(i, j); }

 private:
  MatrixXd w_;
  VectorXd totals_;
};

/// Design matrices linking samples to specimens (Z), detection covariates (X)
/// and contaminant sources (Z_tilde).
struct DesignSet {
  MatrixXd Z;        // n x K, rows on the simplex
  MatrixXd X;        // n x p_cov
  MatrixXd Z_tilde;  // n x K~, nonnegative
  // Spurious scale group of each sample, -1 for none. Empty means no groups.
  std::vector<int> spurious_group;
  int num_groups = 0;

  Eigen::Index samples() const { return Z.rows(); }
  Eigen::Index specimens() const { return Z.cols(); }
  Eigen::Index covariates() const { return X.cols(); }
  Eigen::Index sources() const { return Z_tilde.cols(); }

  int group_of(Eigen::Index i) const {
    return spurious_group.empty() ? -1 : spurious_group[static_cast<std::size_t>(i)];
  }

  void validate() const {
    const auto n = Z.rows();
    if (n == 0 || Z.cols() == 0) throw ShapeError("sample design Z is empty");
    if (X.rows() != n) throw ShapeError("detection design X has " + std::to_string(X.rows()) +
                                        " rows, Z has " + std::to_string(n));
    if (Z_tilde.rows() != n && !(Z_tilde.cols() == 0)) {
      throw ShapeError("spurious design Z_tilde has " + std::to_string(Z_tilde.rows()) +
                       " rows, Z has " + std::to_string(n));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < Z.cols(); ++k) {
        if (!std::isfinite(Z(i, k)) || Z(i, k) < 0.0) {
          throw DomainError("Z row " + std::to_string(i) + " has a negative or non-finite entry");
        }
        s += Z(i, k);
      }
      if (std::abs(s - 1.0) > kSimplexTol) {
        throw DomainError("Z row " + std::to_string(i) + " sums to " + std::to_string(s) +
                          ", rows of the sample design must lie on the simplex");
      }
      for (Eigen::Index q = 0; q < X.cols(); ++q) {
        if (!std::isfinite(X(i, q))) {
          throw DomainError("X row " + std::to_string(i) + " has a non-finite entry");
        }
      }
    }
    for (Eigen::Index i = 0; i < Z_tilde.rows(); ++i) {
      for (Eigen::Index k = 0; k < Z_tilde.cols(); ++k) {
        if (!std::isfinite(Z_tilde(i, k)) || Z_tilde(i, k) < 0.0) {
          throw DomainError("Z_tilde row " + std::to_string(i) +
                            " has a negative or non-finite entry");
        }
      }
    }
    if (!spurious_group.empty()) {
      if (static_cast<Eigen::Index>(spurious_group.size()) != n) {
        throw ShapeError("spurious scale groups given for " +
                         std::to_string(spurious_group.size()) + " samples, expected " +
                         std::to_string(n));
      }
      for (int g : spurious_group) {
        if (g < -1 || g >= num_groups) throw ShapeError("spurious scale group index out of range");
      }
    }
  }
};

/// Full parameter tuple (beta, p, p~, gamma~, gamma, alpha~).
struct ParamSet {
  MatrixXd beta;         // p_cov x J, log detection effects
  MatrixXd p;            // K x J, specimen relative abundances
  MatrixXd p_tilde;      // K~ x J, contaminant profiles
  VectorXd gamma_tilde;  // K~, log contaminant intensities
  VectorXd gamma;        // n, log sample intensities
  VectorXd alpha_tilde;  // G, spurious log-scales

  static ParamSet zeros(Eigen::Index n, Eigen::Index J, Eigen::Index K, Eigen::Index p_cov,
                        Eigen::Index K_tilde, Eigen::Index G) {
    ParamSet ps;
    ps.beta = MatrixXd::Zero(p_cov, J);
    ps.p = MatrixXd::Zero(K, J);
    ps.p_tilde = MatrixXd::Zero(K_tilde, J);
    ps.gamma_tilde = VectorXd::Zero(K_tilde);
    ps.gamma = VectorXd::Zero(n);
    ps.alpha_tilde = VectorXd::Zero(G);
    return ps;
  }

  Eigen::Index taxa() const { return p.cols(); }

  void check_shapes(const DesignSet& d) const {
    const auto J = p.cols();
    detail::require_shape(p, d.specimens(), J, "p");
    detail::require_shape(beta, d.covariates(), J, "beta");
    detail::require_shape(p_tilde, d.sources(), J, "p_tilde");
    if (gamma_tilde.size() != d.sources()) throw ShapeError("gamma_tilde length mismatch");
    if (gamma.size() != d.samples()) throw ShapeError("gamma length mismatch");
    if (alpha_tilde.size() != d.num_groups) throw ShapeError("alpha_tilde length mismatch");
  }

  bool all_finite() const {
    return beta.allFinite() && p.allFinite() && p_tilde.allFinite() && gamma_tilde.allFinite() &&
           gamma.allFinite() && alpha_tilde.allFinite();
  }
};

/// Known/estimable classification for every ParamSet entry. Fixed entries take
/// their value from `values`. gamma is always estimable (profiled out).
struct ParamMask {
  BoolMatrix beta_fixed;
  BoolMatrix p_fixed;
  BoolMatrix p_tilde_fixed;
  std::vector<bool> gamma_tilde_fixed;
  std::vector<bool> alpha_tilde_fixed;
  ParamSet values;

  /// Everything estimable except the reference taxon column of beta, which is
  /// fixed at zero when `reference_taxon` is non-negative.
  static ParamMask all_free(const DesignSet& d, Eigen::Index J, int reference_taxon) {
    ParamMask m;
    m.beta_fixed = BoolMatrix::Constant(d.covariates(), J, false);
    m.p_fixed = BoolMatrix::Constant(d.specimens(), J, false);
    m.p_tilde_fixed = BoolMatrix::Constant(d.sources(), J, false);
    m.gamma_tilde_fixed.assign(static_cast<std::size_t>(d.sources()), false);
    m.alpha_tilde_fixed.assign(static_cast<std::size_t>(d.num_groups), false);
    m.values = ParamSet::zeros(d.samples(), J, d.specimens(), d.covariates(), d.sources(),
                               d.num_groups);
    if (reference_taxon >= 0) {
      m.beta_fixed.col(reference_taxon).setConstant(true);
    }
    return m;
  }

  void fix_p_row(Eigen::Index k, const VectorXd& row) {
    p_fixed.row(k).setConstant(true);
    values.p.row(k) = row.transpose();
  }
  void fix_p_entry(Eigen::Index k, Eigen::Index j, double v) {
    p_fixed(k, j) = true;
    values.p(k, j) = v;
  }
  void fix_p_tilde_row(Eigen::Index k, const VectorXd& row) {
    p_tilde_fixed.row(k).setConstant(true);
    values.p_tilde.row(k) = row.transpose();
  }
  void fix_p_tilde_entry(Eigen::Index k, Eigen::Index j, double v) {
    p_tilde_fixed(k, j) = true;
    values.p_tilde(k, j) = v;
  }
  void fix_beta(Eigen::Index q, Eigen::Index j, double v) {
    beta_fixed(q, j) = true;
    values.beta(q, j) = v;
  }
  void fix_all_beta(double v = 0.0) {
    beta_fixed.setConstant(true);
    values.beta.setConstant(v);
  }
  void fix_gamma_tilde(Eigen::Index k, double v) {
    gamma_tilde_fixed[static_cast<std::size_t>(k)] = true;
    values.gamma_tilde(k) = v;
  }
  void fix_alpha_tilde(Eigen::Index g, double v) {
    alpha_tilde_fixed[static_cast<std::size_t>(g)] = true;
    values.alpha_tilde(g) = v;
  }
};

/// One simplex-constrained row (of p or p~) with at least two free entries.
/// The free entries sum to `budget` = 1 - (sum of fixed entries in the row).
struct SimplexRow {
  bool tilde = false;
  Eigen::Index row = 0;
  std::vector<Eigen::Index> cols;  // free taxa
  double budget = 1.0;
  int offset = 0;          // natural index of cols[0]
  int barrier_offset = 0;  // index of the first log-ratio coordinate
};

/// Which parameterization a coordinate vector or Jacobian refers to.
enum class Coords { natural, barrier };

/// Flat indexing of the estimable coordinates. Natural coordinates are
/// [beta, gamma~, alpha~, p rows, p~ rows]; barrier coordinates replace each
/// simplex row by log-ratios rho_j = log(p_j / p_ref), ref = last free taxon.
class Layout {
 public:
  Layout() = default;

  explicit Layout(const ParamMask& mask) {
    const auto p_cov = mask.beta_fixed.rows();
    const auto J = mask.beta_fixed.cols();
    int next = 0;
    beta_idx_ = MatrixXi::Constant(p_cov, J, -1);
    for (Eigen::Index q = 0; q < p_cov; ++q)
      for (Eigen::Index j = 0; j < J; ++j)
        if (!mask.beta_fixed(q, j)) beta_idx_(q, j) = next++;
    gt_idx_.assign(mask.gamma_tilde_fixed.size(), -1);
    for (std::size_t k = 0; k < gt_idx_.size(); ++k)
      if (!mask.gamma_tilde_fixed[k]) gt_idx_[k] = next++;
    at_idx_.assign(mask.alpha_tilde_fixed.size(), -1);
    for (std::size_t g = 0; g < at_idx_.size(); ++g)
      if (!mask.alpha_tilde_fixed[g]) at_idx_[g] = next++;
    n_euclid_ = next;
    int barrier_next = n_euclid_;

    auto add_rows = [&](const BoolMatrix& fixed, const MatrixXd& vals, bool tilde,
                        MatrixXi& idx) {
      idx = MatrixXi::Constant(fixed.rows(), fixed.cols(), -1);
      for (Eigen::Index k = 0; k < fixed.rows(); ++k) {
        SimplexRow r;
        r.tilde = tilde;
        r.row = k;
        double fixed_sum = 0.0;
        for (Eigen::Index j = 0; j < fixed.cols(); ++j) {
          if (fixed(k, j)) {
            fixed_sum += vals(k, j);
          } else {
            r.cols.push_back(j);
          }
        }
        if (r.cols.size() < 2) continue;
        r.budget = 1.0 - fixed_sum;
        r.offset = next;
        r.barrier_offset = barrier_next;
        for (auto j : r.cols) idx(k, j) = next++;
        barrier_next += static_cast<int>(r.cols.size()) - 1;
        rows_.push_back(std::move(r));
      }
    };
    add_rows(mask.p_fixed, mask.values.p, false, p_idx_);
    add_rows(mask.p_tilde_fixed, mask.values.p_tilde, true, pt_idx_);
    n_natural_ = next;
    n_barrier_ = barrier_next;
  }

  int natural_size() const { return n_natural_; }
  int barrier_size() const { return n_barrier_; }
  int size(Coords c) const { return c == Coords::natural ? n_natural_ : n_barrier_; }
  int euclid_size() const { return n_euclid_; }
  const std::vector<SimplexRow>& rows() const { return rows_; }

  int beta_index(Eigen::Index q, Eigen::Index j) const { return beta_idx_(q, j); }
  int p_index(Eigen::Index k, Eigen::Index j) const { return p_idx_(k, j); }
  int p_tilde_index(Eigen::Index k, Eigen::Index j) const { return pt_idx_(k, j); }
  int gamma_tilde_index(Eigen::Index k) const { return gt_idx_[static_cast<std::size_t>(k)]; }
  int alpha_tilde_index(Eigen::Index g) const { return at_idx_[static_cast<std::size_t>(g)]; }

  const MatrixXd& row_matrix(const ParamSet& ps, const SimplexRow& r) const {
    return r.tilde ? ps.p_tilde : ps.p;
  }
  MatrixXd& row_matrix(ParamSet& ps, const SimplexRow& r) const {
    return r.tilde ? ps.p_tilde : ps.p;
  }

  VectorXd pack(const ParamSet& ps) const {
    VectorXd x(n_natural_);
    pack_euclid(ps, x);
    for (const auto& r : rows_) {
      const auto& m = row_matrix(ps, r);
      for (std::size_t a = 0; a < r.cols.size(); ++a) x(r.offset + static_cast<int>(a)) = m(r.row, r.cols[a]);
    }
    return x;
  }

  void unpack(const VectorXd& x, ParamSet& ps) const {
    unpack_euclid(x, ps);
    for (const auto& r : rows_) {
      auto& m = row_matrix(ps, r);
      for (std::size_t a = 0; a < r.cols.size(); ++a) m(r.row, r.cols[a]) = x(r.offset + static_cast<int>(a));
    }
  }

  /// Log-ratio coordinates; requires every free simplex entry to be positive.
  VectorXd to_barrier(const ParamSet& ps) const {
    VectorXd u(n_barrier_);
    pack_euclid(ps, u);
    for (const auto& r : rows_) {
      const auto& m = row_matrix(ps, r);
      const double ref = m(r.row, r.cols.back());
      for (std::size_t a = 0; a + 1 < r.cols.size(); ++a) {
        u(r.barrier_offset + static_cast<int>(a)) = std::log(m(r.row, r.cols[a]) / ref);
      }
    }
    return u;
  }

  void from_barrier(const VectorXd& u, ParamSet& ps) const {
    unpack_euclid(u, ps);
    for (const auto& r : rows_) {
      auto& m = row_matrix(ps, r);
      const auto q = r.cols.size();
      double mx = 0.0;  // the reference coordinate is 0
      for (std::size_t a = 0; a + 1 < q; ++a) mx = std::max(mx, u(r.barrier_offset + static_cast<int>(a)));
      double denom = std::exp(-mx);
      for (std::size_t a = 0; a + 1 < q; ++a) denom += std::exp(u(r.barrier_offset + static_cast<int>(a)) - mx);
      for (std::size_t a = 0; a + 1 < q; ++a) {
        m(r.row, r.cols[a]) = r.budget * std::exp(u(r.barrier_offset + static_cast<int>(a)) - mx) / denom;
      }
      m(r.row, r.cols.back()) = r.budget * std::exp(-mx) / denom;
    }
  }

  /// d(natural) / d(barrier), natural_size x barrier_size.
  MatrixXd barrier_jacobian(const ParamSet& ps) const {
    MatrixXd T = MatrixXd::Zero(n_natural_, n_barrier_);
    for (int a = 0; a < n_euclid_; ++a) T(a, a) = 1.0;
    for (const auto& r : rows_) {
      const auto& m = row_matrix(ps, r);
      const auto q = r.cols.size();
      for (std::size_t a = 0; a < q; ++a) {
        const double pa = m(r.row, r.cols[a]);
        for (std::size_t l = 0; l + 1 < q; ++l) {
          const double pl = m(r.row, r.cols[l]);
          T(r.offset + static_cast<int>(a), r.barrier_offset + static_cast<int>(l)) =
              (a == l ? pa : 0.0) - pa * pl / r.budget;
        }
      }
    }
    return T;
  }

 private:
  template <typename Vec>
  void pack_euclid(const ParamSet& ps, Vec& x) const {
    for (Eigen::Index q = 0; q < beta_idx_.rows(); ++q)
      for (Eigen::Index j = 0; j < beta_idx_.cols(); ++j)
        if (beta_idx_(q, j) >= 0) x(beta_idx_(q, j)) = ps.beta(q, j);
    for (std::size_t k = 0; k < gt_idx_.size(); ++k)
      if (gt_idx_[k] >= 0) x(gt_idx_[k]) = ps.gamma_tilde(static_cast<Eigen::Index>(k));
    for (std::size_t g = 0; g < at_idx_.size(); ++g)
      if (at_idx_[g] >= 0) x(at_idx_[g]) = ps.alpha_tilde(static_cast<Eigen::Index>(g));
  }

  template <typename Vec>
  void unpack_euclid(const Vec& x, ParamSet& ps) const {
    for (Eigen::Index q = 0; q < beta_idx_.rows(); ++q)
      for (Eigen::Index j = 0; j < beta_idx_.cols(); ++j)
        if (beta_idx_(q, j) >= 0) ps.beta(q, j) = x(beta_idx_(q, j));
    for (std::size_t k = 0; k < gt_idx_.size(); ++k)
      if (gt_idx_[k] >= 0) ps.gamma_tilde(static_cast<Eigen::Index>(k)) = x(gt_idx_[k]);
    for (std::size_t g = 0; g < at_idx_.size(); ++g)
      if (at_idx_[g] >= 0) ps.alpha_tilde(static_cast<Eigen::Index>(g)) = x(at_idx_[g]);
  }

  MatrixXi beta_idx_, p_idx_, pt_idx_;
  std::vector<int> gt_idx_, at_idx_;
  std::vector<SimplexRow> rows_;
  int n_euclid_ = 0;
  int n_natural_ = 0;
  int n_barrier_ = 0;
};

/// Designs plus the estimability mask, validated and resolved once.
class ModelSpec {
 public:
  ModelSpec() = default;

  ModelSpec(DesignSet designs, ParamMask mask)
      : designs_(std::move(designs)), mask_(std::move(mask)) {
    if (designs_.Z_tilde.cols() == 0) designs_.Z_tilde.resize(designs_.Z.rows(), 0);
    designs_.validate();
    J_ = mask_.p_fixed.cols();
    if (J_ < 2) throw ShapeError("at least two taxa are required");
    mask_.values.check_shapes(designs_);
    check_mask_shapes();
    resolve_rows(mask_.p_fixed, mask_.values.p, "p");
    resolve_rows(mask_.p_tilde_fixed, mask_.values.p_tilde, "p_tilde");
    if (!mask_.values.beta.allFinite() || !mask_.values.gamma_tilde.allFinite() ||
        !mask_.values.alpha_tilde.allFinite()) {
      throw DomainError("fixed parameter values must be finite");
    }
    layout_ = Layout(mask_);
  }

  const DesignSet& designs() const { return designs_; }
  const ParamMask& mask() const { return mask_; }
  const Layout& layout() const { return layout_; }
  Eigen::Index samples() const { return designs_.samples(); }
  Eigen::Index taxa() const { return J_; }

  void check_counts(const CountMatrix& W) const {
    if (W.samples() != samples() || W.taxa() != J_) {
      throw ShapeError("count matrix is " + detail::dims(W.samples(), W.taxa()) +
                       ", model expects " + detail::dims(samples(), J_));
    }
  }

  /// Starting point: fixed entries at their values, free simplex entries
  /// uniform over the row budget, other free entries zero.
  ParamSet initial_params() const {
    ParamSet ps = mask_.values;
    for (Eigen::Index q = 0; q < ps.beta.rows(); ++q)
      for (Eigen::Index j = 0; j < J_; ++j)
        if (!mask_.beta_fixed(q, j)) ps.beta(q, j) = 0.0;
    for (Eigen::Index k = 0; k < ps.gamma_tilde.size(); ++k)
      if (!mask_.gamma_tilde_fixed[static_cast<std::size_t>(k)]) ps.gamma_tilde(k) = 0.0;
    for (Eigen::Index g = 0; g < ps.alpha_tilde.size(); ++g)
      if (!mask_.alpha_tilde_fixed[static_cast<std::size_t>(g)]) ps.alpha_tilde(g) = 0.0;
    for (const auto& r : layout_.rows()) {
      auto& m = layout_.row_matrix(ps, r);
      for (auto j : r.cols) m(r.row, j) = r.budget / static_cast<double>(r.cols.size());
    }
    ps.gamma.setZero();
    return ps;
  }

  /// Copy of this spec with additional constraints applied to the mask.
  template <typename F>
  ModelSpec with_mask(F&& edit) const {
    ParamMask m = mask_;
    edit(m);
    return ModelSpec(designs_, std::move(m));
  }

 private:
  void check_mask_shapes() const {
    const auto& d = designs_;
    auto check = [](const BoolMatrix& b, Eigen::Index r, Eigen::Index c, const char* what) {
      if (b.rows() != r || b.cols() != c) throw ShapeError(std::string("mask for ") + what + " has wrong shape");
    };
    check(mask_.beta_fixed, d.covariates(), J_, "beta");
    check(mask_.p_fixed, d.specimens(), J_, "p");
    check(mask_.p_tilde_fixed, d.sources(), J_, "p_tilde");
    if (static_cast<Eigen::Index>(mask_.gamma_tilde_fixed.size()) != d.sources())
      throw ShapeError("mask for gamma_tilde has wrong length");
    if (static_cast<int>(mask_.alpha_tilde_fixed.size()) != d.num_groups)
      throw ShapeError("mask for alpha_tilde has wrong length");
  }

  // A row with a single free entry is determined by the others; fix it.
  void resolve_rows(BoolMatrix& fixed, MatrixXd& vals, const char* what) {
    for (Eigen::Index k = 0; k < fixed.rows(); ++k) {
      double fixed_sum = 0.0;
      int n_free = 0;
      Eigen::Index last_free = -1;
      for (Eigen::Index j = 0; j < fixed.cols(); ++j) {
        if (fixed(k, j)) {
          const double v = vals(k, j);
          if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw DomainError(std::string("fixed ") + what + " entry (" + std::to_string(k) + "," +
                              std::to_string(j) + ") is outside [0,1]");
          }
          fixed_sum += v;
        } else {
          ++n_free;
          last_free = j;
        }
      }
      const std::string row_name = std::string(what) + " row " + std::to_string(k);
      if (n_free == 0) {
        if (std::abs(fixed_sum - 1.0) > kSimplexTol) {
          throw DomainError("known " + row_name + " sums to " + std::to_string(fixed_sum));
        }
      } else {
        const double budget = 1.0 - fixed_sum;
        if (!(budget > kSimplexTol)) {
          throw DomainError(row_name + ": fixed entries leave no mass for the free entries");
        }
        if (n_free == 1) {
          fixed(k, last_free) = true;
          vals(k, last_free) = budget;
        }
      }
    }
  }

  DesignSet designs_;
  ParamMask mask_;
  Layout layout_;
  Eigen::Index J_ = 0;
};

/// Mean-model building blocks at gamma = 0.
struct MeanParts {
  MatrixXd exp_xb;      // exp(X beta)
  MatrixXd signal;      // (Z p) o exp(X beta)
  MatrixXd spurious;    // Z~' [p~ o exp(gamma~ 1^T)]
  MatrixXd zt_scaled;   // Z~'
  VectorXd exp_gt;      // exp(gamma~)
  MatrixXd mu0;         // signal + spurious

  MeanParts(const ParamSet& ps, const DesignSet& d) {
    exp_xb = (d.X * ps.beta).array().exp().matrix();
    signal = ((d.Z * ps.p).array() * exp_xb.array()).matrix();
    zt_scaled = d.Z_tilde;
    if (d.num_groups > 0) {
      for (Eigen::Index i = 0; i < d.samples(); ++i) {
        const int g = d.group_of(i);
        if (g >= 0) zt_scaled.row(i) *= std::exp(ps.alpha_tilde(g));
      }
    }
    exp_gt = ps.gamma_tilde.array().exp().matrix();
    if (d.sources() > 0) {
      spurious = zt_scaled * (exp_gt.asDiagonal() * ps.p_tilde);
    } else {
      spurious = MatrixXd::Zero(d.samples(), ps.p.cols());
    }
    mu0 = signal + spurious;
  }

  /// Calls fn(index, value) for each nonzero natural-coordinate partial
  /// d mu0(i,j) / d theta.
  template <typename Fn>
  void for_each_partial(const DesignSet& d, const Layout& lay, const ParamSet& ps, Eigen::Index i,
                        Eigen::Index j, Fn&& fn) const {
    for (Eigen::Index q = 0; q < d.covariates(); ++q) {
      const int a = lay.beta_index(q, j);
      if (a >= 0 && d.X(i, q) != 0.0) fn(a, signal(i, j) * d.X(i, q));
    }
    for (Eigen::Index k = 0; k < d.specimens(); ++k) {
      const int a = lay.p_index(k, j);
      if (a >= 0 && d.Z(i, k) != 0.0) fn(a, d.Z(i, k) * exp_xb(i, j));
    }
    for (Eigen::Index k = 0; k < d.sources(); ++k) {
      if (zt_scaled(i, k) == 0.0) continue;
      const int a = lay.p_tilde_index(k, j);
      if (a >= 0) fn(a, zt_scaled(i, k) * exp_gt(k));
      const int b = lay.gamma_tilde_index(k);
      if (b >= 0) fn(b, zt_scaled(i, k) * ps.p_tilde(k, j) * exp_gt(k));
    }
    const int g = d.group_of(i);
    if (g >= 0) {
      const int a = lay.alpha_tilde_index(g);
      if (a >= 0) fn(a, spurious(i, j));
    }
  }
};

/// Expected counts mu (n x J), including the sample intensities gamma.
inline MatrixXd mean_model(const ParamSet& ps, const DesignSet& d) {
  ps.check_shapes(d);
  if (!ps.all_finite()) throw DomainError("mean_model: parameters must be finite");
  MeanParts parts(ps, d);
  return ps.gamma.array().exp().matrix().asDiagonal() * parts.mu0;
}

/// Partials of mu (including gamma) with respect to the estimable coordinates.
/// Row i*J + j holds d mu_ij / d theta. In barrier coordinates, simplex rows are
/// differentiated with respect to their log-ratios.
inline MatrixXd mean_jacobian(const ParamSet& ps, const ModelSpec& spec, Coords coords) {
  const auto& d = spec.designs();
  const auto& lay = spec.layout();
  if (lay.natural_size() == 0) throw ValidationError("mask leaves no estimable parameters");
  ps.check_shapes(d);
  MeanParts parts(ps, d);
  const auto n = d.samples();
  const auto J = ps.taxa();
  MatrixXd jac = MatrixXd::Zero(n * J, lay.natural_size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double scale = std::exp(ps.gamma(i));
    for (Eigen::Index j = 0; j < J; ++j) {
      parts.for_each_partial(d, lay, ps, i, j,
                             [&](int a, double v) { jac(i * J + j, a) += scale * v; });
    }
  }
  if (coords == Coords::natural) return jac;
  return jac * lay.barrier_jacobian(ps);
}

/// Partials in the coordinates the optimizer works in (log-ratios for p, p~).
inline MatrixXd mean_gradient(const ParamSet& ps, const ModelSpec& spec) {
  return mean_jacobian(ps, spec, Coords::barrier);
}

/// Root mean squared difference between two abundance vectors.
inline double rmse(const VectorXd& p_hat, const VectorXd& p_true) {
  if (p_hat.size() != p_true.size() || p_hat.size() == 0) {
    throw ShapeError("rmse: vectors must have equal, nonzero length");
  }
  return std::sqrt((p_hat - p_true).squaredNorm() / static_cast<double>(p_hat.size()));
}

}  // namespace mbias
