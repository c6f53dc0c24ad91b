#pragma once

// Bayesian subsampled bootstrap: Dirichlet((m/n) 1) sample weights, refits of
// the weighted criterion, marginal intervals, and likelihood-ratio tests
// calibrated on data projected onto the null.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/likelihood.hpp"
#include "mbias/model.hpp"
#include "mbias/numeric.hpp"
#include "mbias/reweight.hpp"
#include "mbias/solver.hpp"

namespace mbias {

enum class MRule { ceil_sqrt, round_sqrt, fixed };

struct BootstrapConfig {
  int B = 1000;
  MRule m_rule = MRule::ceil_sqrt;
  int m_fixed = 0;  // used with MRule::fixed
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int threads = 1;
  bool reestimate_weights = false;
  double max_failure_fraction = 0.10;
  SolverOptions solver;

  int m_for(Eigen::Index n) const {
    int m = 0;
    const double r = std::sqrt(static_cast<double>(n));
    switch (m_rule) {
      case MRule::ceil_sqrt: m = static_cast<int>(std::ceil(r - 1e-12)); break;
      case MRule::round_sqrt: m = static_cast<int>(std::lround(r)); break;
      case MRule::fixed: m = m_fixed; break;
    }
    return m;
  }

  void validate(Eigen::Index n) const {
    if (B < 1) throw ValidationError("bootstrap: B must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bootstrap: alpha must lie in (0, 1)");
    if (threads < 1) throw ValidationError("bootstrap: threads must be at least 1");
    const int m = m_for(n);
    if (m < 1 || m > n) {
      throw ValidationError("bootstrap: m = " + std::to_string(m) + " must lie in [1, n = " +
                            std::to_string(n) + "]");
    }
  }
};

inline const char* to_string(MRule r) {
  switch (r) {
    case MRule::ceil_sqrt: return "ceil_sqrt";
    case MRule::round_sqrt: return "round_sqrt";
    case MRule::fixed: return "fixed";
  }
  return "?";
}

/// Parameter blocks addressable by coordinates, intervals and constraints.
enum class Block { beta, p, p_tilde, gamma_tilde, alpha_tilde };

inline const char* to_string(Block b) {
  switch (b) {
    case Block::beta: return "beta";
    case Block::p: return "p";
    case Block::p_tilde: return "p_tilde";
    case Block::gamma_tilde: return "gamma_tilde";
    case Block::alpha_tilde: return "alpha_tilde";
  }
  return "?";
}

struct Coordinate {
  Block block = Block::beta;
  Eigen::Index row = 0;
  Eigen::Index col = 0;  // ignored for gamma_tilde and alpha_tilde

  bool on_simplex() const { return block == Block::p || block == Block::p_tilde; }

  std::string label() const {
    std::string s = to_string(block);
    if (block == Block::gamma_tilde || block == Block::alpha_tilde) return s + "[" + std::to_string(row) + "]";
    return s + "[" + std::to_string(row) + "," + std::to_string(col) + "]";
  }
};

/// Every reportable coordinate of a parameter set, in a fixed order:
/// beta, p, p_tilde (row-major), gamma_tilde, alpha_tilde.
inline std::vector<Coordinate> all_coordinates(const ParamSet& ps) {
  std::vector<Coordinate> out;
  auto add_matrix = [&](Block b, const MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back({b, r, c});
  };
  add_matrix(Block::beta, ps.beta);
  add_matrix(Block::p, ps.p);
  add_matrix(Block::p_tilde, ps.p_tilde);
  for (Eigen::Index k = 0; k < ps.gamma_tilde.size(); ++k) out.push_back({Block::gamma_tilde, k, 0});
  for (Eigen::Index g = 0; g < ps.alpha_tilde.size(); ++g) out.push_back({Block::alpha_tilde, g, 0});
  return out;
}

inline double coordinate_value(const ParamSet& ps, const Coordinate& c) {
  switch (c.block) {
    case Block::beta: return ps.beta(c.row, c.col);
    case Block::p: return ps.p(c.row, c.col);
    case Block::p_tilde: return ps.p_tilde(c.row, c.col);
    case Block::gamma_tilde: return ps.gamma_tilde(c.row);
    case Block::alpha_tilde: return ps.alpha_tilde(c.row);
  }
  return 0.0;
}

inline VectorXd flatten(const ParamSet& ps) {
  const auto coords = all_coordinates(ps);
  VectorXd v(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t a = 0; a < coords.size(); ++a) v(static_cast<Eigen::Index>(a)) = coordinate_value(ps, coords[a]);
  return v;
}

/// Natural-coordinate index of `c` in `spec`, or -1 when the mask fixes it.
inline int natural_index(const ModelSpec& spec, const Coordinate& c) {
  const auto& lay = spec.layout();
  const auto& mask = spec.mask();
  auto in = [](Eigen::Index x, Eigen::Index hi) { return x >= 0 && x < hi; };
  switch (c.block) {
    case Block::beta:
      if (!in(c.row, mask.beta_fixed.rows()) || !in(c.col, mask.beta_fixed.cols())) break;
      return lay.beta_index(c.row, c.col);
    case Block::p:
      if (!in(c.row, mask.p_fixed.rows()) || !in(c.col, mask.p_fixed.cols())) break;
      return lay.p_index(c.row, c.col);
    case Block::p_tilde:
      if (!in(c.row, mask.p_tilde_fixed.rows()) || !in(c.col, mask.p_tilde_fixed.cols())) break;
      return lay.p_tilde_index(c.row, c.col);
    case Block::gamma_tilde:
      if (!in(c.row, static_cast<Eigen::Index>(mask.gamma_tilde_fixed.size()))) break;
      return lay.gamma_tilde_index(c.row);
    case Block::alpha_tilde:
      if (!in(c.row, static_cast<Eigen::Index>(mask.alpha_tilde_fixed.size()))) break;
      return lay.alpha_tilde_index(c.row);
  }
  throw ShapeError("coordinate " + c.label() + " is out of range");
}

/// xi ~ Dirichlet((m/n) 1_n).
inline VectorXd dirichlet_weights(Eigen::Index n, int m, std::mt19937_64& rng) {
  if (n < 2) throw ValidationError("dirichlet_weights: n must be at least 2");
  if (m < 1) throw ValidationError("dirichlet_weights: m must be at least 1");
  std::gamma_distribution<double> gam(static_cast<double>(m) / static_cast<double>(n), 1.0);
  VectorXd xi(n);
  // Small shapes can underflow every variate; redraw in that case.
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (Eigen::Index i = 0; i < n; ++i) xi(i) = gam(rng);
    const double s = xi.sum();
    if (s > 0.0 && std::isfinite(s)) return xi / s;
  }
  throw InferenceError("dirichlet_weights: random generator produced no usable draw");
}

namespace detail {

// Runs fn(b) for b in [0, count) on up to `threads` workers. Each call writes
// only its own output slot, so results do not depend on scheduling.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int b = 0; b < count; ++b) fn(b);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int b = next++; b < count; b = next++) {
        try {
          fn(b);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline void check_failures(int failures, int B, double max_fraction, const char* what) {
  if (failures > max_fraction * B || failures >= B) {
    throw InferenceError(std::string(what) + ": " + std::to_string(failures) + " of " + std::to_string(B) +
                         " replicate fits failed");
  }
}

}  // namespace detail

struct BootstrapDraws {
  std::vector<Coordinate> coords;
  MatrixXd draws;          // successful replicates x coordinates, sqrt(m)(theta_xi - theta_hat)
  std::vector<int> index;  // replicate number of each row of `draws`
  int B = 0;
  int m = 0;
  int failures = 0;
};

/// One replicate: refit the xi-weighted criterion warm-started at `fit_full`
/// and return sqrt(m)(theta_xi - theta_hat) over all coordinates.
inline std::optional<VectorXd> bootstrap_replicate(const ModelSpec& spec, const CountMatrix& W,
                                                   const FitResult& fit_full, const VectorXd& xi, int m,
                                                   const SolverOptions& opts = {},
                                                   bool reestimate_weights = false) {
  const auto n = W.samples();
  if (xi.size() != n) throw ShapeError("bootstrap: weight vector length differs from sample count");
  const VectorXd sw = static_cast<double>(n) * xi;
  try {
    WeightTable weights = fit_full.weights;
    if (reestimate_weights && fit_full.estimator == Estimator::reweighted) {
      Objective plain(W, spec, nullptr, &sw);
      const FitResult pre = refit(plain, fit_full.params, opts);
      if (!pre.diagnostics.converged) return std::nullopt;
      weights = estimate_weights(W, pre.mu_hat);
    }
    Objective obj(W, spec, &weights, &sw);
    const FitResult r = refit(obj, fit_full.params, opts);
    if (!r.diagnostics.converged) return std::nullopt;
    return std::sqrt(static_cast<double>(m)) * (flatten(r.params) - flatten(fit_full.params));
  } catch (const SolverError&) {
    return std::nullopt;
  }
}

inline BootstrapDraws bootstrap_params(const ModelSpec& spec, const CountMatrix& W, const FitResult& fit_full,
                                       const BootstrapConfig& cfg) {
  const auto n = W.samples();
  cfg.validate(n);
  if (!fit_full.diagnostics.converged) throw InferenceError("bootstrap: the full fit did not converge");
  BootstrapDraws out;
  out.coords = all_coordinates(fit_full.params);
  out.B = cfg.B;
  out.m = cfg.m_for(n);
  std::vector<std::optional<VectorXd>> reps(static_cast<std::size_t>(cfg.B));
  detail::parallel_for(cfg.B, cfg.threads, [&](int b) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b)));
    const VectorXd xi = dirichlet_weights(n, out.m, rng);
    reps[static_cast<std::size_t>(b)] =
        bootstrap_replicate(spec, W, fit_full, xi, out.m, cfg.solver, cfg.reestimate_weights);
  });
  for (const auto& r : reps) out.failures += r ? 0 : 1;
  detail::check_failures(out.failures, cfg.B, cfg.max_failure_fraction, "bootstrap");
  out.draws.resize(cfg.B - out.failures, static_cast<Eigen::Index>(out.coords.size()));
  Eigen::Index row = 0;
  for (int b = 0; b < cfg.B; ++b) {
    const auto& r = reps[static_cast<std::size_t>(b)];
    if (!r) continue;
    out.draws.row(row++) = r->transpose();
    out.index.push_back(b);
  }
  return out;
}

struct Interval {
  Coordinate coord;
  double estimate = 0.0;
  double lower = 0.0;      // as computed
  double upper = 0.0;
  double lower_clip = 0.0; // clipped to [0, 1] for simplex coordinates
  double upper_clip = 0.0;
};

/// (theta - L_{1-alpha/2}/sqrt(n), theta - L_{alpha/2}/sqrt(n)) per coordinate.
inline std::vector<Interval> marginal_ci(const BootstrapDraws& draws, const VectorXd& theta_hat, double alpha,
                                         Eigen::Index n) {
  if (draws.draws.rows() < 1) throw InferenceError("marginal_ci: no successful bootstrap replicates");
  if (theta_hat.size() != draws.draws.cols() ||
      draws.coords.size() != static_cast<std::size_t>(theta_hat.size())) {
    throw ShapeError("marginal_ci: estimate length differs from draw width");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("marginal_ci: alpha must lie in (0, 1)");
  if (n < 1) throw ValidationError("marginal_ci: n must be positive");
  const double rn = std::sqrt(static_cast<double>(n));
  std::vector<Interval> out;
  out.reserve(draws.coords.size());
  std::vector<double> col(static_cast<std::size_t>(draws.draws.rows()));
  for (Eigen::Index q = 0; q < theta_hat.size(); ++q) {
    for (Eigen::Index b = 0; b < draws.draws.rows(); ++b) col[static_cast<std::size_t>(b)] = draws.draws(b, q);
    Interval iv;
    iv.coord = draws.coords[static_cast<std::size_t>(q)];
    iv.estimate = theta_hat(q);
    iv.lower = theta_hat(q) - quantile(col, 1.0 - alpha / 2.0) / rn;
    iv.upper = theta_hat(q) - quantile(col, alpha / 2.0) / rn;
    iv.lower_clip = iv.lower;
    iv.upper_clip = iv.upper;
    if (iv.coord.on_simplex()) {
      iv.lower_clip = std::clamp(iv.lower, 0.0, 1.0);
      iv.upper_clip = std::clamp(iv.upper, 0.0, 1.0);
    }
    out.push_back(iv);
  }
  return out;
}

/// W_ij * mu0_ij / mu_ij (mu up to the sample intensity), rows rescaled to the
/// original read totals.
inline CountMatrix null_project(const CountMatrix& W, const FitResult& fit_full, const FitResult& fit_null,
                                const DesignSet& designs) {
  const MatrixXd mu = MeanParts(fit_full.params, designs).mu0;
  const MatrixXd mu0 = MeanParts(fit_null.params, designs).mu0;
  const auto& w = W.values();
  if (mu.rows() != w.rows() || mu.cols() != w.cols()) throw ShapeError("null_project: fit and counts differ in shape");
  MatrixXd out(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (mu(i, j) > 0.0) {
        out(i, j) = w(i, j) * (mu0(i, j) / mu(i, j));
      } else if (w(i, j) > 0.0) {
        throw InferenceError("null_project: full fit has zero mean at observed cell (" + std::to_string(i) +
                             ", " + std::to_string(j) + ")");
      } else {
        out(i, j) = 0.0;
      }
    }
  }
  // Same reduction as CountMatrix uses for its totals, so unchanged rows stay bit-identical.
  const VectorXd sums = out.rowwise().sum();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (!(sums(i) > 0.0)) {
      throw InferenceError("null_project: sample " + std::to_string(i) + " has no reads under the null fit");
    }
    const double scale = W.row_totals()(i) / sums(i);
    if (scale != 1.0) out.row(i) *= scale;
  }
  return CountMatrix(std::move(out));
}

/// Null hypothesis: each listed coordinate equals its value.
struct TestSpec {
  struct Constraint {
    Coordinate coord;
    double value = 0.0;
  };
  std::string name = "lrt";
  std::vector<Constraint> constraints;

  /// The null model: the full mask with every constrained coordinate fixed.
  ModelSpec null_spec(const ModelSpec& full) const {
    for (const auto& c : constraints) {
      if (natural_index(full, c.coord) < 0) {
        throw ValidationError("test: coordinate " + c.coord.label() + " is not estimable in the full model");
      }
      if (!std::isfinite(c.value)) throw DomainError("test: constraint value must be finite");
    }
    return full.with_mask([&](ParamMask& mk) {
      for (const auto& c : constraints) {
        switch (c.coord.block) {
          case Block::beta: mk.fix_beta(c.coord.row, c.coord.col, c.value); break;
          case Block::p: mk.fix_p_entry(c.coord.row, c.coord.col, c.value); break;
          case Block::p_tilde: mk.fix_p_tilde_entry(c.coord.row, c.coord.col, c.value); break;
          case Block::gamma_tilde: mk.fix_gamma_tilde(c.coord.row, c.value); break;
          case Block::alpha_tilde: mk.fix_alpha_tilde(c.coord.row, c.value); break;
        }
      }
    });
  }
};

/// Fraction of replicate statistics at or above `statistic`.
inline double bootstrap_p_value(const std::vector<double>& replicates, double statistic) {
  if (replicates.empty()) throw InferenceError("p-value: no replicate statistics");
  const auto exceed = std::count_if(replicates.begin(), replicates.end(), [&](double t) { return t >= statistic; });
  return static_cast<double>(exceed) / static_cast<double>(replicates.size());
}

struct LrtResult {
  std::string name;
  double statistic = 0.0;      // T_n
  double null_quantile = 0.0;  // (1 - alpha) quantile of the replicate statistics
  double p_value = 1.0;
  bool reject = false;
  int B = 0;
  int m = 0;
  int failures = 0;
  double alpha = 0.05;
  std::vector<double> replicates;
  FitResult fit_full;
  FitResult fit_null;
};

inline constexpr double kLrtSlack = 1e-6;

namespace detail {

// 2 * scale * (null - full), refitting the full model from the null solution
// when the optimizer left it worse than the nested null.
inline double lrt_statistic(const Objective& full_obj, FitResult& full, const FitResult& null, double scale,
                            const SolverOptions& opts) {
  if (null.deviance < full.deviance) {
    FitResult polished = refit(full_obj, null.params, opts);
    if (polished.deviance < full.deviance) full = std::move(polished);
  }
  return 2.0 * scale * (null.deviance - full.deviance);
}

}  // namespace detail

/// Likelihood-ratio test of `test` within `spec`, calibrated by the
/// subsampled bootstrap on null-projected counts. Cell weights of the
/// reweighted estimator come from the full-model fit and are shared by the
/// null fit and every replicate.
inline LrtResult lrt(const ModelSpec& spec, const CountMatrix& W, const TestSpec& test, Estimator estimator,
                     const BootstrapConfig& cfg) {
  const auto n = W.samples();
  cfg.validate(n);
  LrtResult res;
  res.name = test.name;
  res.alpha = cfg.alpha;
  res.B = cfg.B;
  res.m = cfg.m_for(n);
  const ModelSpec null_spec = test.null_spec(spec);
  res.fit_full = fit(spec, W, estimator, cfg.solver);
  if (test.constraints.empty()) {
    res.fit_null = res.fit_full;
    res.statistic = 0.0;
    res.p_value = 1.0;
    res.replicates.assign(static_cast<std::size_t>(cfg.B), 0.0);
    return res;
  }
  const WeightTable& v = res.fit_full.weights;
  res.fit_null = fit_weighted(null_spec, W, v, cfg.solver);
  res.fit_null.estimator = estimator;

  Objective full_obj(W, spec, &v);
  double T = detail::lrt_statistic(full_obj, res.fit_full, res.fit_null, static_cast<double>(n), cfg.solver);
  if (T < -kLrtSlack) {
    throw SolverError("lrt: null fit beats the full fit (T = " + std::to_string(T) + ")");
  }
  res.statistic = std::max(T, 0.0);

  const CountMatrix W0 = null_project(W, res.fit_full, res.fit_null, spec.designs());
  Objective full0_obj(W0, spec, &v);
  Objective null0_obj(W0, null_spec, &v);
  const FitResult null0 = refit(null0_obj, res.fit_null.params, cfg.solver);
  FitResult full0 = refit(full0_obj, res.fit_null.params, cfg.solver);
  if (null0.deviance < full0.deviance) full0 = refit(full0_obj, null0.params, cfg.solver);

  const int m = res.m;
  std::vector<std::optional<double>> stats(static_cast<std::size_t>(cfg.B));
  detail::parallel_for(cfg.B, cfg.threads, [&](int b) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b)));
    const VectorXd sw = static_cast<double>(n) * dirichlet_weights(n, m, rng);
    try {
      Objective f_obj(W0, spec, &v, &sw);
      Objective n_obj(W0, null_spec, &v, &sw);
      const FitResult nb = refit(n_obj, null0.params, cfg.solver);
      FitResult fb = refit(f_obj, full0.params, cfg.solver);
      if (!nb.diagnostics.converged || !fb.diagnostics.converged) return;
      const double t = detail::lrt_statistic(f_obj, fb, nb, static_cast<double>(m), cfg.solver);
      if (t < -kLrtSlack) return;
      stats[static_cast<std::size_t>(b)] = std::max(t, 0.0);
    } catch (const SolverError&) {
    }
  });
  for (const auto& s : stats) {
    if (s) {
      res.replicates.push_back(*s);
    } else {
      ++res.failures;
    }
  }
  detail::check_failures(res.failures, cfg.B, cfg.max_failure_fraction, "lrt");
  res.null_quantile = quantile(res.replicates, 1.0 - cfg.alpha);
  res.p_value = bootstrap_p_value(res.replicates, res.statistic);
  // A zero statistic is never evidence against the null.
  res.reject = res.statistic > 0.0 && res.statistic >= res.null_quantile;
  return res;
}

}  // namespace mbias
