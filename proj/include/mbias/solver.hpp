#pragma once

// Two-stage maximization of the (weighted) profile likelihood.
//
// Stage 1 runs a log-barrier method in log-ratio coordinates, solving each
// penalized subproblem by Fisher scoring. Stage 2 cycles over the simplex rows
// and takes constrained Newton steps whose directions come from an augmented
// Lagrangian with nonnegative least squares, which lets estimates reach the
// simplex boundary exactly. Detection effects, contaminant intensities and
// spurious scales are updated by Fisher scoring at the end of each sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/likelihood.hpp"
#include "mbias/model.hpp"
#include "mbias/nnls.hpp"
#include "mbias/reweight.hpp"

namespace mbias {

enum class Estimator { unweighted, reweighted };

inline const char* to_string(Estimator e) {
  return e == Estimator::unweighted ? "unweighted" : "reweighted";
}

struct SolverOptions {
  double t0 = 1.0;
  double a = 10.0;
  double t_cutoff = 1e12;
  double fisher_rel_tol = 1e-10;
  int fisher_max_iter = 100;
  double eps_sum = 1e-10;
  double tol = 1e-8;
  int max_sweeps = 500;
  int max_backtracks = 50;
  double backtrack_factor = 0.5;
  int al_max_rounds = 100;
  double zero_snap = 1e-12;  // simplex entries below this with a zero target are set to 0
};

// ---------------------------------------------------------------------------
// Building blocks

/// Solves (fim + lambda I) s = score. `score` is the ascent direction of the
/// criterion (minus the gradient of the minimization target).
inline VectorXd fisher_step(const VectorXd& score, const MatrixXd& fim, double lambda) {
  if (score.size() != fim.rows() || fim.rows() != fim.cols()) {
    throw ShapeError("fisher_step: gradient and information disagree in size");
  }
  if (score.size() == 0 || score.isZero(0.0)) return VectorXd::Zero(score.size());
  MatrixXd H = fim;
  const double ridge = std::max(lambda, 0.0) +
                       1e-12 * std::max(fim.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  H.diagonal().array() += ridge;
  Eigen::LDLT<MatrixXd> ldlt(H);
  VectorXd s;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) s = ldlt.solve(score);
  if (s.size() == 0 || !s.allFinite()) {
    s = H.completeOrthogonalDecomposition().solve(score);
  }
  if (!s.allFinite()) throw SolverError("fisher_step: singular system after regularization");
  return s;
}

/// Quadratic model of the minimization target around `center`:
/// Q(x) = f0 + g'(x - c) + 0.5 (x - c)'(F + |g| I)(x - c).
struct QuadModel {
  double f0 = 0.0;
  VectorXd center;
  VectorXd grad;
  MatrixXd hess;

  double operator()(const VectorXd& x) const {
    const VectorXd d = x - center;
    return f0 + grad.dot(d) + 0.5 * d.dot(hess * d);
  }
};

inline QuadModel quad_approx(double f_value, const VectorXd& center, const VectorXd& grad,
                             const MatrixXd& fim) {
  if (!std::isfinite(f_value) || !grad.allFinite() || !fim.allFinite()) {
    throw SolverError("quad_approx: non-finite objective, gradient or information");
  }
  QuadModel q;
  q.f0 = f_value;
  q.center = center;
  q.grad = grad;
  q.hess = fim;
  q.hess.diagonal().array() += grad.norm();
  return q;
}


/// Multiplier state for one simplex row.
struct LagrangianState {
  double lagrange_nu = 0.0;
  double penalty_mu = 0.0;  // 0 selects a scale-aware starting value
  double sum_tolerance = 1e-10;
  VectorXd p;         // current row
  VectorXd p_update;  // minimizer of the augmented Lagrangian
  VectorXd step;      // p_update - p
  int rounds = 0;
};

/// Minimizes Q + nu (1'x - budget) + mu (1'x - budget)^2 over x >= 0 by NNLS,
/// updating nu and mu until the sum constraint holds to `sum_tolerance`.
inline const VectorXd& aug_lagrangian_update(LagrangianState& st, const QuadModel& Q, double budget,
                                             int max_rounds = 100) {
  const auto q = st.p.size();
  if (Q.grad.size() != q) throw ShapeError("aug_lagrangian_update: model size mismatch");
  const VectorXd ones = VectorXd::Ones(q);
  if (!(st.penalty_mu > 0.0)) {
    st.penalty_mu = std::max(Q.hess.diagonal().cwiseAbs().mean(), 1e-8);
  }
  const VectorXd lin = Q.grad - Q.hess * Q.center;  // linear term of Q in x
  double prev_violation = std::numeric_limits<double>::infinity();
  for (st.rounds = 1; st.rounds <= max_rounds; ++st.rounds) {
    MatrixXd G = Q.hess;
    G.array() += 2.0 * st.penalty_mu;
    const VectorXd h = -(lin + (st.lagrange_nu - 2.0 * st.penalty_mu * budget) * ones);
    st.p_update = nnls_gram(G, h).x;
    const double violation = st.p_update.sum() - budget;
    if (std::abs(violation) < st.sum_tolerance) {
      st.step = st.p_update - st.p;
      return st.step;
    }
    st.lagrange_nu += 2.0 * st.penalty_mu * violation;
    if (std::abs(violation) > 0.25 * prev_violation) st.penalty_mu *= 10.0;
    prev_violation = std::abs(violation);
  }
  throw SolverError("augmented Lagrangian: sum constraint not met within " +
                    std::to_string(max_rounds) + " multiplier rounds");
}

struct LineSearchResult {
  VectorXd x;
  double value = 0.0;
  double step = 0.0;
  int halvings = 0;
  bool stalled = false;
};

/// Backtracking from a full step along `direction` until `f` decreases.
/// On failure returns `x0` unchanged with `stalled` set.
inline LineSearchResult line_search(const VectorXd& x0, double f0, const VectorXd& direction,
                                    const std::function<double(const VectorXd&)>& f,
                                    int max_halvings = 50, double factor = 0.5) {
  LineSearchResult res;
  double eps = 1.0;
  for (int h = 0; h <= max_halvings; ++h) {
    VectorXd x = x0 + eps * direction;
    const double v = f(x);
    if (std::isfinite(v) && v < f0) {
      res.x = std::move(x);
      res.value = v;
      res.step = eps;
      res.halvings = h;
      return res;
    }
    eps *= factor;
  }
  res.x = x0;
  res.value = f0;
  res.stalled = true;
  res.halvings = max_halvings;
  return res;
}

// ---------------------------------------------------------------------------
// Stage 1: barrier method

struct BarrierState {
  double t = 1.0;
  double a = 10.0;
  double t_cutoff = 1e12;
  VectorXd rho;  // barrier coordinates (euclidean block followed by log-ratios)
  int rounds = 0;
  int fisher_iterations = 0;
  std::vector<double> trace;  // unpenalized objective after each round
};

namespace detail {

// -sum(rho) + q log(1 + sum exp(rho)) per simplex row, with gradient and
// Hessian. Equals -sum_j log p_j up to a constant.
struct BarrierPenalty {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
};

inline BarrierPenalty barrier_penalty(const Layout& lay, const VectorXd& u) {
  BarrierPenalty pen;
  const int nb = lay.barrier_size();
  pen.grad = VectorXd::Zero(nb);
  pen.hess = MatrixXd::Zero(nb, nb);
  for (const auto& r : lay.rows()) {
    const int m = static_cast<int>(r.cols.size()) - 1;
    const double q = static_cast<double>(r.cols.size());
    const auto rho = u.segment(r.barrier_offset, m);
    const double mx = std::max(0.0, rho.maxCoeff());
    const VectorXd e = (rho.array() - mx).exp().matrix();
    const double denom = std::exp(-mx) + e.sum();
    const VectorXd pi = e / denom;
    pen.value += -rho.sum() + q * (mx + std::log(denom));
    pen.grad.segment(r.barrier_offset, m) = q * pi - VectorXd::Ones(m);
    pen.hess.block(r.barrier_offset, r.barrier_offset, m, m) =
        q * (MatrixXd(pi.asDiagonal()) - pi * pi.transpose());
  }
  return pen;
}

inline double penalized_value(const Objective& obj, const Layout& lay, const VectorXd& u, double t,
                              ParamSet& scratch) {
  if (!u.allFinite()) return std::numeric_limits<double>::infinity();
  lay.from_barrier(u, scratch);
  const double f = obj.value(scratch);
  if (!std::isfinite(f)) return f;
  return f + barrier_penalty(lay, u).value / t;
}

}  // namespace detail

struct BarrierResult {
  ParamSet params;
  BarrierState state;
  double objective = 0.0;
};

inline void require_interior(const ModelSpec& spec, const ParamSet& ps) {
  for (const auto& r : spec.layout().rows()) {
    const auto& m = spec.layout().row_matrix(ps, r);
    for (auto j : r.cols) {
      if (!(m(r.row, j) > 0.0)) {
        throw SolverError("barrier start must be strictly inside the simplex for unknown rows");
      }
    }
  }
}

/// Stage 1. Solves the sequence of penalized subproblems for t = t0, a t0, ...
/// while t <= t_cutoff and returns the interior solution of the last one.
inline BarrierResult barrier_solve(const Objective& obj, const ParamSet& init,
                                   const SolverOptions& opts = {}) {
  const auto& spec = obj.spec();
  const auto& lay = spec.layout();
  require_interior(spec, init);
  BarrierResult res;
  res.params = init;
  BarrierState& st = res.state;
  st.t = opts.t0;
  st.a = opts.a;
  st.t_cutoff = opts.t_cutoff;
  st.rho = lay.to_barrier(init);
  if (!std::isfinite(obj.value(init))) throw SolverError("objective is not finite at the starting point");

  ParamSet scratch = init;
  const int nb = lay.barrier_size();
  while (true) {
    if (nb > 0) {
      double val = detail::penalized_value(obj, lay, st.rho, st.t, scratch);
      for (int it = 0; it < opts.fisher_max_iter; ++it) {
        lay.from_barrier(st.rho, res.params);
        VectorXd g;
        MatrixXd F;
        obj.gradient_fim(res.params, 0, lay.natural_size(), g, F);
        const MatrixXd T = lay.barrier_jacobian(res.params);
        const auto pen = detail::barrier_penalty(lay, st.rho);
        const VectorXd gu = T.transpose() * g + pen.grad / st.t;
        const MatrixXd Hu = T.transpose() * F * T + pen.hess / st.t;
        const VectorXd dir = fisher_step(-gu, Hu, gu.norm());
        ++st.fisher_iterations;
        const auto ls = line_search(
            st.rho, val, dir,
            [&](const VectorXd& u) { return detail::penalized_value(obj, lay, u, st.t, scratch); },
            opts.max_backtracks, opts.backtrack_factor);
        if (ls.stalled) break;
        const double change = val - ls.value;
        st.rho = ls.x;
        val = ls.value;
        if (change <= opts.fisher_rel_tol * std::max(1.0, std::abs(val))) break;
      }
    }
    lay.from_barrier(st.rho, res.params);
    ++st.rounds;
    st.trace.push_back(obj.value(res.params));
    const double t_next = st.a * st.t;
    if (t_next > st.t_cutoff) break;
    st.t = t_next;
  }
  res.objective = obj.value(res.params);
  if (!std::isfinite(res.objective)) throw SolverError("barrier stage diverged");
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2: constrained Newton sweeps

namespace detail {

// Joint Fisher step over every free coordinate on the current face: simplex
// entries at zero stay there, positive ones move along directions that keep
// each row sum fixed. Couples the blocks that the row-wise sweeps update one
// at a time. Returns true when the objective decreased.
inline bool face_step(const Objective& obj, ParamSet& ps, double& f, const SolverOptions& opts,
                      ParamSet& scratch) {
  const auto& lay = obj.spec().layout();
  const int L = lay.natural_size();
  const int ne = lay.euclid_size();
  const VectorXd x0 = lay.pack(ps);
  std::vector<VectorXd> basis;
  for (int a = 0; a < ne; ++a) basis.push_back(VectorXd::Unit(L, a));
  for (const auto& r : lay.rows()) {
    std::vector<int> pos;
    int ref = -1;
    for (int a = 0; a < static_cast<int>(r.cols.size()); ++a) {
      const int idx = r.offset + a;
      if (x0(idx) > 0.0) {
        pos.push_back(idx);
        if (ref < 0 || x0(idx) > x0(ref)) ref = idx;
      }
    }
    for (int idx : pos) {
      if (idx == ref) continue;
      VectorXd v = VectorXd::Zero(L);
      v(idx) = 1.0;
      v(ref) = -1.0;
      basis.push_back(std::move(v));
    }
  }
  if (basis.empty()) return false;
  MatrixXd T(L, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t c = 0; c < basis.size(); ++c) T.col(static_cast<Eigen::Index>(c)) = basis[c];
  VectorXd g;
  MatrixXd F;
  obj.gradient_fim(ps, 0, L, g, F);
  const VectorXd gt = T.transpose() * g;
  const MatrixXd H = T.transpose() * F * T;
  VectorXd d = T * fisher_step(-gt, H, gt.norm());
  double cap = 1.0;
  for (int k = ne; k < L; ++k)
    if (d(k) < 0.0) cap = std::min(cap, x0(k) / -d(k));
  d *= cap;
  auto eval = [&](const VectorXd& x) {
    VectorXd y = x;
    for (int k = ne; k < L; ++k) y(k) = std::max(y(k), 0.0);
    scratch = ps;
    lay.unpack(y, scratch);
    return obj.value(scratch);
  };
  const auto ls = line_search(x0, f, d, eval, opts.max_backtracks, opts.backtrack_factor);
  if (ls.stalled) return false;
  VectorXd y = ls.x;
  for (int k = ne; k < L; ++k) y(k) = std::max(y(k), 0.0);
  lay.unpack(y, ps);
  f = ls.value;
  return true;
}

}  // namespace detail

struct Stage2Result {
  ParamSet params;
  double objective = 0.0;
  int sweeps = 0;
  int stalled_steps = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each sweep
};

inline Stage2Result constrained_newton(const Objective& obj, const ParamSet& start,
                                       const SolverOptions& opts = {}) {
  const auto& spec = obj.spec();
  const auto& lay = spec.layout();
  Stage2Result res;
  res.params = start;
  double f = obj.value(res.params);
  if (!std::isfinite(f)) throw SolverError("objective is not finite at the stage-2 start");
  ParamSet scratch = res.params;

  for (res.sweeps = 1; res.sweeps <= opts.max_sweeps; ++res.sweeps) {
    const double f_start = f;
    for (const auto& r : lay.rows()) {
      const int q = static_cast<int>(r.cols.size());
      VectorXd g;
      MatrixXd F;
      obj.gradient_fim(res.params, r.offset, r.offset + q, g, F);
      VectorXd pk(q);
      const auto& m = lay.row_matrix(res.params, r);
      for (int a = 0; a < q; ++a) pk(a) = m(r.row, r.cols[static_cast<std::size_t>(a)]);
      const QuadModel Q = quad_approx(f, pk, g, F);
      LagrangianState al;
      al.sum_tolerance = opts.eps_sum;
      al.p = pk;
      aug_lagrangian_update(al, Q, r.budget, opts.al_max_rounds);
      scratch = res.params;
      auto eval_row = [&](const VectorXd& x) {
        auto& sm = lay.row_matrix(scratch, r);
        for (int a = 0; a < q; ++a) {
          const double v = x(a);
          if (v < 0.0) return std::numeric_limits<double>::infinity();
          sm(r.row, r.cols[static_cast<std::size_t>(a)]) = v;
        }
        return obj.value(scratch);
      };
      const auto ls = line_search(pk, f, al.step, eval_row, opts.max_backtracks,
                                  opts.backtrack_factor);
      if (ls.stalled) {
        ++res.stalled_steps;
        continue;
      }
      VectorXd x = ls.x;
      double fx = ls.value;
      // Partial steps toward a zero target only shrink an entry geometrically;
      // entries that are already negligible are moved onto the bound.
      bool snapped = false;
      for (int a = 0; a < q; ++a) {
        if (x(a) > 0.0 && x(a) < opts.zero_snap && pk(a) + al.step(a) == 0.0) {
          x(a) = 0.0;
          snapped = true;
        }
      }
      if (snapped) {
        const double fs = eval_row(x);
        if (fs <= fx) fx = fs;
        else x = ls.x;
      }
      auto& rm = lay.row_matrix(res.params, r);
      for (int a = 0; a < q; ++a) rm(r.row, r.cols[static_cast<std::size_t>(a)]) = x(a);
      f = fx;
    }
    const int ne = lay.euclid_size();
    if (ne > 0) {
      VectorXd g;
      MatrixXd F;
      obj.gradient_fim(res.params, 0, ne, g, F);
      const VectorXd dir = fisher_step(-g, F, g.norm());
      VectorXd x0(ne);
      {
        VectorXd full = lay.pack(res.params);
        x0 = full.head(ne);
      }
      auto eval_euclid = [&](const VectorXd& x) {
        scratch = res.params;
        VectorXd full = lay.pack(scratch);
        full.head(ne) = x;
        lay.unpack(full, scratch);
        return obj.value(scratch);
      };
      const auto ls = line_search(x0, f, dir, eval_euclid, opts.max_backtracks,
                                  opts.backtrack_factor);
      if (ls.stalled) {
        ++res.stalled_steps;
      } else {
        VectorXd full = lay.pack(res.params);
        full.head(ne) = ls.x;
        lay.unpack(full, res.params);
        f = ls.value;
      }
    }
    if (lay.rows().size() + (ne > 0 ? 1 : 0) > 1) detail::face_step(obj, res.params, f, opts, scratch);
    res.trace.push_back(f);
    if (std::abs(f_start - f) <= opts.tol * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  if (res.sweeps > opts.max_sweeps) res.sweeps = opts.max_sweeps;
  res.objective = f;
  return res;
}

// ---------------------------------------------------------------------------
// Full fit

struct FitDiagnostics {
  int barrier_rounds = 0;
  int fisher_iterations = 0;
  int sweeps = 0;
  int stalled_steps = 0;
  bool converged = false;
  int estimable = 0;   // natural coordinates
  int tangent_dim = 0; // estimable directions after the sum constraints
  int information_rank = 0;
  bool beta_connected = true;
  std::vector<double> barrier_trace;
  std::vector<double> sweep_trace;
};

struct FitResult {
  ParamSet params;       // estimates; gamma holds the profiled intensities
  MatrixXd mu_hat;       // fitted means on the count scale
  double loglik = 0.0;   // M_n at the estimate (weighted when reweighted)
  double deviance = 0.0; // saturated bound minus loglik
  Estimator estimator = Estimator::unweighted;
  WeightTable weights;   // cell weights used by the final objective
  FitDiagnostics diagnostics;
};

namespace detail {

inline void finalize(const Objective& obj, FitResult& fr) {
  const auto pv = obj.evaluate(fr.params);
  if (!pv.feasible) throw SolverError("fit ended at an infeasible point");
  fr.params.gamma = pv.gamma_hat;
  fr.loglik = pv.loglik;
  fr.deviance = pv.deviance;
  fr.mu_hat = mean_model(fr.params, obj.spec().designs());
}

inline int tangent_dim(const Layout& lay) {
  int t = lay.euclid_size();
  for (const auto& r : lay.rows()) t += static_cast<int>(r.cols.size()) - 1;
  return t;
}

// Rank of the information restricted to the tangent space of the simplex rows,
// after scaling to unit diagonal.
inline int information_rank(const Objective& obj, const ParamSet& ps) {
  const auto& lay = obj.spec().layout();
  const int L = lay.natural_size();
  if (L == 0) return 0;
  VectorXd g;
  MatrixXd F;
  obj.gradient_fim(ps, 0, L, g, F);
  const int tangent = tangent_dim(lay);
  MatrixXd B = MatrixXd::Zero(L, tangent);
  for (int a = 0; a < lay.euclid_size(); ++a) B(a, a) = 1.0;
  int col = lay.euclid_size();
  for (const auto& r : lay.rows()) {
    const int q = static_cast<int>(r.cols.size());
    for (int a = 0; a + 1 < q; ++a, ++col) {
      B(r.offset + a, col) = 1.0;
      B(r.offset + q - 1, col) = -1.0;
    }
  }
  MatrixXd Ft = B.transpose() * F * B;
  VectorXd dg = Ft.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index a = 0; a < dg.size(); ++a) dg(a) = dg(a) > 0.0 ? 1.0 / dg(a) : 0.0;
  Ft = dg.asDiagonal() * Ft * dg.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ft);
  const auto& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int rank = 0;
  for (Eigen::Index a = 0; a < ev.size(); ++a)
    if (ev(a) > 1e-9 * top) ++rank;
  return rank;
}

// Taxa connected through co-occurrence in samples of fully known specimens;
// detection effects are only pinned down when the graph is connected.
inline bool beta_connected(const ModelSpec& spec) {
  const auto& d = spec.designs();
  const auto& mask = spec.mask();
  const auto J = spec.taxa();
  bool any_free_beta = false;
  for (Eigen::Index q = 0; q < mask.beta_fixed.rows(); ++q)
    for (Eigen::Index j = 0; j < J; ++j) any_free_beta |= !mask.beta_fixed(q, j);
  if (!any_free_beta) return true;
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(J));
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  std::function<Eigen::Index(Eigen::Index)> find = [&](Eigen::Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (Eigen::Index i = 0; i < d.samples(); ++i) {
    bool known = true;
    for (Eigen::Index k = 0; k < d.specimens(); ++k) {
      if (d.Z(i, k) > 0.0 && !mask.p_fixed.row(k).all()) known = false;
    }
    if (!known) continue;
    VectorXd comp = d.Z.row(i) * mask.values.p;
    Eigen::Index first = -1;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (comp(j) <= 0.0) continue;
      if (first < 0) {
        first = j;
      } else {
        parent[static_cast<std::size_t>(find(j))] = find(first);
      }
    }
  }
  // Only taxa present in some known sample, or carrying a free beta, matter.
  Eigen::Index root = -1;
  for (Eigen::Index j = 0; j < J; ++j) {
    bool free_col = false;
    for (Eigen::Index q = 0; q < mask.beta_fixed.rows(); ++q) free_col |= !mask.beta_fixed(q, j);
    bool reference = mask.beta_fixed.col(j).all() && mask.values.beta.col(j).isZero(0.0);
    if (!free_col && !reference) continue;
    const auto r = find(j);
    if (root < 0) {
      root = r;
    } else if (r != root) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Fits the model. The reweighted estimator computes cell weights from the
/// unweighted stage-1 fit and reruns stage 1 on the weighted objective.
inline FitResult fit(const ModelSpec& spec, const CountMatrix& W, Estimator estimator,
                     const SolverOptions& opts = {}) {
  spec.check_counts(W);
  FitResult fr;
  fr.estimator = estimator;
  auto& diag = fr.diagnostics;
  diag.estimable = spec.layout().natural_size();
  diag.tangent_dim = detail::tangent_dim(spec.layout());
  diag.beta_connected = detail::beta_connected(spec);

  const ParamSet init = spec.initial_params();
  Objective unweighted(W, spec);
  const WeightTable* weights = nullptr;
  if (diag.estimable == 0) {
    fr.params = init;
    fr.weights = WeightTable::unit(W.samples(), W.taxa());
    detail::finalize(unweighted, fr);
    diag.converged = true;
    return fr;
  }

  auto stage1 = barrier_solve(unweighted, init, opts);
  diag.barrier_rounds += stage1.state.rounds;
  diag.fisher_iterations += stage1.state.fisher_iterations;
  diag.barrier_trace = stage1.state.trace;

  if (estimator == Estimator::reweighted) {
    const ParamSet& p1 = stage1.params;
    const auto pv = unweighted.evaluate(p1);
    ParamSet with_gamma = p1;
    with_gamma.gamma = pv.gamma_hat;
    fr.weights = estimate_weights(W, mean_model(with_gamma, spec.designs()));
    weights = &fr.weights;
    Objective weighted(W, spec, weights);
    auto stage1w = barrier_solve(weighted, stage1.params, opts);
    diag.barrier_rounds += stage1w.state.rounds;
    diag.fisher_iterations += stage1w.state.fisher_iterations;
    diag.barrier_trace = stage1w.state.trace;
    stage1 = std::move(stage1w);
  } else {
    fr.weights = WeightTable::unit(W.samples(), W.taxa());
  }

  Objective final_obj(W, spec, weights);
  auto stage2 = constrained_newton(final_obj, stage1.params, opts);
  diag.sweeps = stage2.sweeps;
  diag.stalled_steps = stage2.stalled_steps;
  diag.converged = stage2.converged;
  diag.sweep_trace = stage2.trace;
  fr.params = std::move(stage2.params);
  detail::finalize(final_obj, fr);
  diag.information_rank = detail::information_rank(final_obj, fr.params);
  return fr;
}

/// Fits with fixed cell weights (both stages on the weighted objective).
inline FitResult fit_weighted(const ModelSpec& spec, const CountMatrix& W, const WeightTable& weights,
                              const SolverOptions& opts = {}) {
  spec.check_counts(W);
  FitResult fr;
  fr.estimator = Estimator::reweighted;
  fr.weights = weights;
  auto& diag = fr.diagnostics;
  diag.estimable = spec.layout().natural_size();
  diag.tangent_dim = detail::tangent_dim(spec.layout());
  diag.beta_connected = detail::beta_connected(spec);
  Objective obj(W, spec, &fr.weights);
  const ParamSet init = spec.initial_params();
  if (diag.estimable == 0) {
    fr.params = init;
    detail::finalize(obj, fr);
    diag.converged = true;
    return fr;
  }
  auto stage1 = barrier_solve(obj, init, opts);
  diag.barrier_rounds = stage1.state.rounds;
  diag.fisher_iterations = stage1.state.fisher_iterations;
  diag.barrier_trace = stage1.state.trace;
  auto stage2 = constrained_newton(obj, stage1.params, opts);
  diag.sweeps = stage2.sweeps;
  diag.stalled_steps = stage2.stalled_steps;
  diag.converged = stage2.converged;
  diag.sweep_trace = stage2.trace;
  fr.params = std::move(stage2.params);
  detail::finalize(obj, fr);
  diag.information_rank = detail::information_rank(obj, fr.params);
  return fr;
}

/// Refit from a warm start with an explicit objective (custom cell and sample
/// weights), using the boundary-permitting stage only.
inline FitResult refit(const Objective& obj, const ParamSet& start, const SolverOptions& opts = {}) {
  FitResult fr;
  fr.weights = WeightTable(obj.cell_weights());
  auto& diag = fr.diagnostics;
  diag.estimable = obj.spec().layout().natural_size();
  diag.tangent_dim = detail::tangent_dim(obj.spec().layout());
  if (diag.estimable == 0) {
    fr.params = start;
    detail::finalize(obj, fr);
    diag.converged = true;
    return fr;
  }
  auto stage2 = constrained_newton(obj, start, opts);
  diag.sweeps = stage2.sweeps;
  diag.stalled_steps = stage2.stalled_steps;
  diag.converged = stage2.converged;
  diag.sweep_trace = stage2.trace;
  fr.params = std::move(stage2.params);
  detail::finalize(obj, fr);
  return fr;
}

}  // namespace mbias
