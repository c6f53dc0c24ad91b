#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mbias/inference.hpp"
#include "test_support.hpp"

using namespace mbias;

namespace {

MatrixXd poisson_counts(const MatrixXd& mu, std::mt19937_64& rng) {
  MatrixXd w(mu.rows(), mu.cols());
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    std::poisson_distribution<long> pois(mu.data()[k]);
    w.data()[k] = static_cast<double>(pois(rng));
  }
  return w;
}

struct Fitted {
  testkit::SmallProblem sp;
  ModelSpec spec;
  CountMatrix W;
  FitResult fr;
};

Fitted fitted_problem(std::uint64_t seed, Eigen::Index n = 12, Eigen::Index J = 4) {
  std::mt19937_64 rng(seed);
  Fitted f;
  f.sp = testkit::small_problem(n, J, rng);
  f.spec = ModelSpec(f.sp.d, f.sp.mask);
  f.W = CountMatrix(poisson_counts(mean_model(f.sp.truth, f.sp.d), rng));
  f.fr = fit(f.spec, f.W, Estimator::unweighted);
  return f;
}

// Two specimens (first known) measured under two protocols with replicates;
// the second covariate column is the protocol indicator.
struct ProtocolData {
  ModelSpec spec;
  CountMatrix W;
};

ProtocolData protocol_data(const VectorXd& protocol_effect, std::uint64_t seed) {
  const Eigen::Index J = protocol_effect.size(), reps = 4, n = 2 * 2 * reps;
  std::mt19937_64 rng(seed);
  DesignSet d;
  d.Z = MatrixXd::Zero(n, 2);
  d.X = MatrixXd::Zero(n, 2);
  d.Z_tilde = MatrixXd::Zero(n, 0);
  Eigen::Index i = 0;
  for (int k = 0; k < 2; ++k)
    for (int prot = 0; prot < 2; ++prot)
      for (int r = 0; r < reps; ++r, ++i) {
        d.Z(i, k) = 1.0;
        d.X(i, 0) = 1.0;
        d.X(i, 1) = prot;
      }
  ParamSet truth = ParamSet::zeros(n, J, 2, 2, 0, 0);
  truth.p.row(0) = testkit::random_simplex(J, rng, 0.2).transpose();
  truth.p.row(1) = testkit::random_simplex(J, rng, 0.2).transpose();
  for (Eigen::Index j = 0; j + 1 < J; ++j) truth.beta(0, j) = 0.3 * static_cast<double>(j) - 0.4;
  truth.beta.row(1) = protocol_effect.transpose();
  truth.gamma.setConstant(9.0);
  ParamMask mask = ParamMask::all_free(d, J, static_cast<int>(J - 1));
  mask.fix_p_row(0, truth.p.row(0).transpose());
  ProtocolData out{ModelSpec(d, mask), CountMatrix(poisson_counts(mean_model(truth, d), rng))};
  return out;
}

TestSpec no_protocol_effect(Eigen::Index J) {
  TestSpec t;
  t.name = "protocol";
  for (Eigen::Index j = 0; j + 1 < J; ++j) t.constraints.push_back({{Block::beta, 1, j}, 0.0});
  return t;
}

}  // namespace

TEST(Quantile, TypeSevenInterpolation) {
  const std::vector<double> x{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(x, 0.9), 3.7);
  EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 4.0);
}

TEST(BootstrapConfig, SubsampleSize) {
  BootstrapConfig cfg;
  EXPECT_EQ(cfg.m_for(10), 4);
  EXPECT_EQ(cfg.m_for(16), 4);
  EXPECT_EQ(cfg.m_for(17), 5);
  cfg.m_rule = MRule::round_sqrt;
  EXPECT_EQ(cfg.m_for(10), 3);
  cfg.m_rule = MRule::fixed;
  cfg.m_fixed = 11;
  EXPECT_THROW(cfg.validate(10), ValidationError);
  EXPECT_NO_THROW(cfg.validate(11));
  cfg.alpha = 1.0;
  EXPECT_THROW(cfg.validate(11), ValidationError);
}

TEST(Dirichlet, MomentsMatchTheory) {
  const Eigen::Index n = 10;
  const int m = 4;
  std::mt19937_64 rng(1);
  const int R = 20000;
  double mean = 0.0, sq = 0.0;
  for (int r = 0; r < R; ++r) {
    const VectorXd xi = dirichlet_weights(n, m, rng);
    ASSERT_NEAR(xi.sum(), 1.0, 1e-12);
    ASSERT_GE(xi.minCoeff(), 0.0);
    mean += xi(3);
    sq += xi(3) * xi(3);
  }
  mean /= R;
  const double var = sq / R - mean * mean;
  const double expect_var = (1.0 / n) * (1.0 - 1.0 / n) / (m + 1.0);
  EXPECT_NEAR(mean, 1.0 / n, 4.0 * std::sqrt(expect_var / R));
  EXPECT_NEAR(var / expect_var, 1.0, 0.05);
}

TEST(Dirichlet, RejectsBadArguments) {
  std::mt19937_64 rng(2);
  EXPECT_THROW(dirichlet_weights(1, 1, rng), ValidationError);
  EXPECT_THROW(dirichlet_weights(5, 0, rng), ValidationError);
}

TEST(Coordinates, OrderAndValues) {
  auto ps = ParamSet::zeros(3, 2, 1, 1, 1, 1);
  ps.beta << 0.1, 0.2;
  ps.p << 0.3, 0.7;
  ps.p_tilde << 0.4, 0.6;
  ps.gamma_tilde << -1.0;
  ps.alpha_tilde << 0.5;
  const VectorXd flat = flatten(ps);
  VectorXd expect(8);
  expect << 0.1, 0.2, 0.3, 0.7, 0.4, 0.6, -1.0, 0.5;
  EXPECT_EQ(flat, expect);
  const auto coords = all_coordinates(ps);
  EXPECT_EQ(coords[2].label(), "p[0,0]");
  EXPECT_EQ(coords[6].label(), "gamma_tilde[0]");
  EXPECT_TRUE(coords[4].on_simplex());
  EXPECT_FALSE(coords[7].on_simplex());
}

TEST(Bootstrap, UniformWeightsReproduceEstimate) {
  const auto f = fitted_problem(3);
  const VectorXd xi = VectorXd::Constant(12, 1.0 / 12.0);
  const auto draw = bootstrap_replicate(f.spec, f.W, f.fr, xi, 4);
  ASSERT_TRUE(draw.has_value());
  EXPECT_LT(draw->cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Bootstrap, FixedCoordinatesHaveZeroDraws) {
  const auto f = fitted_problem(4);
  BootstrapConfig cfg;
  cfg.B = 20;
  const auto bd = bootstrap_params(f.spec, f.W, f.fr, cfg);
  ASSERT_EQ(bd.draws.rows(), 20);
  for (std::size_t a = 0; a < bd.coords.size(); ++a) {
    if (natural_index(f.spec, bd.coords[a]) >= 0) continue;
    EXPECT_TRUE(bd.draws.col(static_cast<Eigen::Index>(a)).isZero(0.0)) << bd.coords[a].label();
  }
  // Free simplex rows keep summing to one, so their draws sum to zero.
  double row_sum = 0.0;
  for (std::size_t a = 0; a < bd.coords.size(); ++a)
    if (bd.coords[a].block == Block::p && bd.coords[a].row == 1) row_sum += bd.draws(0, static_cast<Eigen::Index>(a));
  EXPECT_NEAR(row_sum, 0.0, 1e-8);
}

TEST(Bootstrap, ReproducibleAcrossRunsAndThreads) {
  const auto f = fitted_problem(5);
  BootstrapConfig cfg;
  cfg.B = 12;
  cfg.seed = 77;
  const auto a = bootstrap_params(f.spec, f.W, f.fr, cfg);
  const auto b = bootstrap_params(f.spec, f.W, f.fr, cfg);
  cfg.threads = 3;
  const auto c = bootstrap_params(f.spec, f.W, f.fr, cfg);
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(a.draws, c.draws);
  cfg.seed = 78;
  const auto d = bootstrap_params(f.spec, f.W, f.fr, cfg);
  EXPECT_NE(a.draws, d.draws);
}

TEST(Bootstrap, RequiresConvergedFit) {
  auto f = fitted_problem(6);
  f.fr.diagnostics.converged = false;
  BootstrapConfig cfg;
  cfg.B = 5;
  EXPECT_THROW(bootstrap_params(f.spec, f.W, f.fr, cfg), InferenceError);
}

TEST(MarginalCi, DegenerateDrawsGiveDegenerateInterval) {
  BootstrapDraws bd;
  bd.coords = {{Block::p, 0, 0}, {Block::beta, 0, 0}};
  bd.draws = MatrixXd::Zero(50, 2);
  VectorXd theta(2);
  theta << 0.3, -1.2;
  const auto ci = marginal_ci(bd, theta, 0.05, 16);
  for (int q = 0; q < 2; ++q) {
    EXPECT_EQ(ci[q].lower, theta(q));
    EXPECT_EQ(ci[q].upper, theta(q));
  }
}

TEST(MarginalCi, MatchesQuantileFormula) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  BootstrapDraws bd;
  bd.coords = {{Block::beta, 0, 0}};
  bd.draws.resize(101, 1);
  std::vector<double> col(101);
  for (int b = 0; b < 101; ++b) col[b] = bd.draws(b, 0) = z(rng);
  std::sort(col.begin(), col.end());
  VectorXd theta(1);
  theta << 2.0;
  const auto ci = marginal_ci(bd, theta, 0.1, 25);
  // Type 7 with 101 points puts the 5% and 95% quantiles on order statistics.
  EXPECT_NEAR(ci[0].lower, 2.0 - col[95] / 5.0, 1e-14);
  EXPECT_NEAR(ci[0].upper, 2.0 - col[5] / 5.0, 1e-14);
}

TEST(MarginalCi, ClipsSimplexCoordinatesOnly) {
  BootstrapDraws bd;
  bd.coords = {{Block::p, 0, 0}, {Block::beta, 0, 0}};
  bd.draws = MatrixXd::Constant(10, 2, -4.0);
  bd.draws(0, 0) = bd.draws(0, 1) = 4.0;
  VectorXd theta(2);
  theta << 0.9, 0.9;
  const auto ci = marginal_ci(bd, theta, 0.05, 1);
  EXPECT_DOUBLE_EQ(ci[0].upper, 4.9);
  EXPECT_DOUBLE_EQ(ci[0].upper_clip, 1.0);
  EXPECT_DOUBLE_EQ(ci[1].upper_clip, 4.9);
  EXPECT_LE(ci[0].lower_clip, ci[0].upper_clip);
}

TEST(MarginalCi, ShiftEquivariant) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  BootstrapDraws bd;
  bd.coords = {{Block::beta, 0, 0}};
  bd.draws.resize(40, 1);
  for (int b = 0; b < 40; ++b) bd.draws(b, 0) = z(rng);
  VectorXd t1(1), t2(1);
  t1 << 0.0;
  t2 << 3.5;
  const auto a = marginal_ci(bd, t1, 0.05, 9);
  const auto b = marginal_ci(bd, t2, 0.05, 9);
  EXPECT_NEAR(b[0].lower - a[0].lower, 3.5, 1e-12);
  EXPECT_NEAR(b[0].upper - a[0].upper, 3.5, 1e-12);
}

TEST(NullProject, IdentityWhenFitsAgree) {
  const auto f = fitted_problem(9);
  const CountMatrix W0 = null_project(f.W, f.fr, f.fr, f.sp.d);
  EXPECT_EQ(W0.values(), f.W.values());
}

TEST(NullProject, CellFormulaAndRowTotals) {
  const auto f = fitted_problem(10);
  std::mt19937_64 rng(3);
  FitResult other = f.fr;
  other.params.p.row(1) = testkit::random_simplex(4, rng).transpose();
  other.params.beta(0, 0) += 0.2;
  const CountMatrix W0 = null_project(f.W, f.fr, other, f.sp.d);
  auto unit = [](ParamSet ps) {
    ps.gamma.setZero();
    return ps;
  };
  const MatrixXd mu = mean_model(unit(f.fr.params), f.sp.d);
  const MatrixXd mu0 = mean_model(unit(other.params), f.sp.d);
  for (Eigen::Index i = 0; i < f.W.samples(); ++i) {
    VectorXd raw(f.W.taxa());
    for (Eigen::Index j = 0; j < f.W.taxa(); ++j) raw(j) = f.W(i, j) * mu0(i, j) / mu(i, j);
    raw *= f.W.row_totals()(i) / raw.sum();
    for (Eigen::Index j = 0; j < f.W.taxa(); ++j) EXPECT_NEAR(W0(i, j), raw(j), 1e-12 * (1.0 + raw(j)));
    EXPECT_NEAR(W0.row_totals()(i), f.W.row_totals()(i), 1e-9 * f.W.row_totals()(i));
  }
}

TEST(Lrt, EmptyNullNeverRejects) {
  const auto f = fitted_problem(11);
  BootstrapConfig cfg;
  cfg.B = 10;
  const auto r = lrt(f.spec, f.W, TestSpec{}, Estimator::unweighted, cfg);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_FALSE(r.reject);
}

TEST(Lrt, RejectsNonEstimableConstraint) {
  const auto f = fitted_problem(12);
  TestSpec t;
  t.constraints.push_back({{Block::beta, 0, 3}, 0.0});  // reference taxon, already fixed
  EXPECT_THROW(t.null_spec(f.spec), ValidationError);
}

TEST(Lrt, PValueIsMonotoneInStatistic) {
  const std::vector<double> reps{0.5, 1.0, 2.0, 3.0, 8.0};
  double prev = 1.0;
  for (double t = 0.0; t < 10.0; t += 0.25) {
    const double p = bootstrap_p_value(reps, t);
    EXPECT_LE(p, prev);
    EXPECT_GE(p, 0.0);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(bootstrap_p_value(reps, 2.0), 0.6);
}

TEST(Lrt, DetectsProtocolEffect) {
  VectorXd effect(5);
  effect << 0.8, -0.6, 0.4, -0.3, 0.0;
  const auto pd = protocol_data(effect, 13);
  BootstrapConfig cfg;
  cfg.B = 60;
  cfg.seed = 5;
  const auto r = lrt(pd.spec, pd.W, no_protocol_effect(5), Estimator::reweighted, cfg);
  EXPECT_TRUE(r.reject);
  EXPECT_LT(r.p_value, 0.05);
  EXPECT_GT(r.statistic, r.null_quantile);
  EXPECT_EQ(r.failures, 0);
}

TEST(Lrt, ReproducibleAcrossThreads) {
  VectorXd effect = VectorXd::Zero(4);
  const auto pd = protocol_data(effect, 14);
  BootstrapConfig cfg;
  cfg.B = 20;
  cfg.seed = 9;
  const auto a = lrt(pd.spec, pd.W, no_protocol_effect(4), Estimator::unweighted, cfg);
  cfg.threads = 2;
  const auto b = lrt(pd.spec, pd.W, no_protocol_effect(4), Estimator::unweighted, cfg);
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.replicates, b.replicates);
  EXPECT_GE(a.statistic, 0.0);
}
