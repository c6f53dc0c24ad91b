#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mbias/likelihood.hpp"
#include "test_support.hpp"

using namespace mbias;

namespace {

// One unknown specimen, no contamination, no detection effects.
ModelSpec composition_only(Eigen::Index n, Eigen::Index J) {
  DesignSet d;
  d.Z = MatrixXd::Ones(n, 1);
  d.X = MatrixXd::Ones(n, 1);
  d.Z_tilde = MatrixXd::Zero(n, 0);
  ParamMask mask = ParamMask::all_free(d, J, -1);
  mask.fix_all_beta(0.0);
  return ModelSpec(d, mask);
}

// Direct evaluation of the weighted log-likelihood at a given gamma.
double loglik_at(const MatrixXd& W, const MatrixXd& mu0, const MatrixXd& v, const VectorXd& gamma) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      const double mu = std::exp(gamma(i)) * mu0(i, j);
      total += v(i, j) * ((W(i, j) > 0 ? W(i, j) * std::log(mu) : 0.0) - mu);
    }
  }
  return total / static_cast<double>(W.rows());
}

MatrixXd poisson_counts(const MatrixXd& mu, std::mt19937_64& rng) {
  MatrixXd w(mu.rows(), mu.cols());
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    std::poisson_distribution<long> pois(mu.data()[k]);
    w.data()[k] = static_cast<double>(pois(rng));
  }
  return w;
}

}  // namespace

TEST(ProfileGamma, ClosedFormExamples) {
  VectorXd w(2), mu(2), v = VectorXd::Ones(2);
  w << 4, 0;
  mu << 1, 1;
  EXPECT_NEAR(profile_gamma(w, mu, v), std::log(2.0), 1e-15);
  w << 2, 2;
  mu << 0.5, 0.5;
  EXPECT_NEAR(profile_gamma(w, mu, v), std::log(4.0), 1e-15);
}

TEST(ProfileGamma, MaximizesOverGrid) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd w(4), mu(4), v(4);
    for (int j = 0; j < 4; ++j) {
      w(j) = std::floor(40.0 * u(rng));
      mu(j) = u(rng);
      v(j) = u(rng);
    }
    if (w.sum() == 0.0) w(0) = 1.0;
    const double g = profile_gamma(w, mu, v);
    auto ll = [&](double gam) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += v(j) * (w(j) * gam + w(j) * std::log(mu(j)) - std::exp(gam) * mu(j));
      return s;
    };
    const double best = ll(g);
    for (int k = -200; k <= 200; ++k) EXPECT_GE(best + 1e-12 * std::abs(best), ll(g + 0.01 * k));
  }
}

TEST(ProfileGamma, RejectsZeroMeanWithReads) {
  VectorXd w(2), mu(2), v = VectorXd::Ones(2);
  w << 1, 1;
  mu << 0, 0;
  EXPECT_THROW(profile_gamma(w, mu, v), DomainError);
}

TEST(ProfileLoglik, EqualsFullMaximumOverGamma) {
  std::mt19937_64 rng(2);
  const auto sp = testkit::small_problem(6, 4, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const MatrixXd mu = mean_model(sp.truth, sp.d);
  const CountMatrix W(poisson_counts(mu, rng));
  const auto pv = profile_loglik(sp.truth, W, spec);
  ASSERT_TRUE(pv.feasible);
  auto zero_gamma = sp.truth;
  zero_gamma.gamma.setZero();
  const MatrixXd mu0 = mean_model(zero_gamma, sp.d);
  const MatrixXd v = MatrixXd::Ones(6, 4);
  EXPECT_NEAR(pv.loglik, loglik_at(W.values(), mu0, v, pv.gamma_hat), 1e-9 * std::abs(pv.loglik));
  // Perturbing any intensity lowers the criterion.
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (double h : {-0.01, 0.01}) {
      VectorXd g = pv.gamma_hat;
      g(i) += h;
      EXPECT_LT(loglik_at(W.values(), mu0, v, g), pv.loglik);
    }
  }
}

TEST(ProfileLoglik, SaturatedBoundHolds) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const auto sp = testkit::small_problem(5, 3, rng);
    const ModelSpec spec(sp.d, sp.mask);
    const CountMatrix W(poisson_counts(mean_model(sp.truth, sp.d), rng));
    const Objective obj(W, spec);
    const auto pv = obj.evaluate(sp.truth);
    EXPECT_LE(pv.loglik, obj.saturated() + 1e-9);
    EXPECT_GE(pv.deviance, -1e-9);
    EXPECT_NEAR(pv.deviance, obj.saturated() - pv.loglik, 1e-8 * (1.0 + std::abs(pv.loglik)));
  }
}

TEST(ProfileLoglik, AttainsBoundAtExactMeans) {
  std::mt19937_64 rng(6);
  const auto sp = testkit::small_problem(5, 3, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const CountMatrix W(mean_model(sp.truth, sp.d));
  const Objective obj(W, spec);
  EXPECT_NEAR(obj.evaluate(sp.truth).deviance, 0.0, 1e-10);
}

TEST(ProfileLoglik, SingleSampleGridOracle) {
  const ModelSpec spec = composition_only(1, 2);
  MatrixXd w(1, 2);
  w << 3, 1;
  const CountMatrix W(w);
  const Objective obj(W, spec);
  double best = -1.0, best_val = -std::numeric_limits<double>::infinity();
  auto ps = spec.initial_params();
  for (int k = 1; k < 10000; ++k) {
    const double p1 = k / 10000.0;
    ps.p << p1, 1.0 - p1;
    const double ll = obj.evaluate(ps).loglik;
    if (ll > best_val) {
      best_val = ll;
      best = p1;
    }
  }
  EXPECT_NEAR(best, 0.75, 1e-4);
}

TEST(ProfileLoglik, UnitWeightsMatchUnweighted) {
  std::mt19937_64 rng(8);
  const auto sp = testkit::small_problem(6, 4, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const CountMatrix W(poisson_counts(mean_model(sp.truth, sp.d), rng));
  const auto unit = WeightTable::unit(6, 4);
  const auto a = profile_loglik(sp.truth, W, spec);
  const auto b = profile_loglik(sp.truth, W, spec, &unit);
  EXPECT_DOUBLE_EQ(a.loglik, b.loglik);
  EXPECT_EQ(a.gamma_hat, b.gamma_hat);
}

TEST(ProfileLoglik, InfeasibleWhenObservedCellHasZeroMean) {
  const ModelSpec spec = composition_only(1, 3);
  MatrixXd w(1, 3);
  w << 3, 1, 2;
  const CountMatrix W(w);
  auto ps = spec.initial_params();
  ps.p << 0.5, 0.5, 0.0;
  const auto pv = profile_loglik(ps, W, spec);
  EXPECT_FALSE(pv.feasible);
  EXPECT_EQ(pv.loglik, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(Objective(W, spec).value(ps), std::numeric_limits<double>::infinity());
}

TEST(ProfileLoglik, ZeroMeanOnEmptyCellIsFeasible) {
  const ModelSpec spec = composition_only(1, 3);
  MatrixXd w(1, 3);
  w << 3, 1, 0;
  const CountMatrix W(w);
  auto ps = spec.initial_params();
  ps.p << 0.75, 0.25, 0.0;
  const auto pv = profile_loglik(ps, W, spec);
  ASSERT_TRUE(pv.feasible);
  EXPECT_NEAR(pv.deviance, 0.0, 1e-12);
}

TEST(ProfileLoglik, RowWeightRescalingKeepsIntensities) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const auto sp = testkit::small_problem(5, 4, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const CountMatrix W(poisson_counts(mean_model(sp.truth, sp.d), rng));
  MatrixXd v(5, 4);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = u(rng);
  MatrixXd v2 = v;
  v2.row(2) *= 7.0;
  const WeightTable t1(v), t2(v2);
  const auto a = profile_loglik(sp.truth, W, spec, &t1);
  const auto b = profile_loglik(sp.truth, W, spec, &t2);
  EXPECT_LT((a.gamma_hat - b.gamma_hat).cwiseAbs().maxCoeff(), 1e-12);
  // Recompute directly from the normalized weights.
  auto zero_gamma = sp.truth;
  zero_gamma.gamma.setZero();
  const MatrixXd mu0 = mean_model(zero_gamma, sp.d);
  EXPECT_NEAR(b.loglik, loglik_at(W.values(), mu0, t2.values(), b.gamma_hat), 1e-10 * std::abs(b.loglik));
}

TEST(WeightTable, NormalizesAndValidates) {
  MatrixXd v(2, 2);
  v << 1, 2, 3, 4;
  const WeightTable t(v);
  EXPECT_NEAR(t.values().sum(), 4.0, 1e-14);
  EXPECT_NEAR(t(1, 1) / t(0, 0), 4.0, 1e-14);
  v(0, 0) = 0.0;
  EXPECT_THROW(WeightTable{v}, DomainError);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto sp = testkit::small_problem(6, 4, rng);
    const ModelSpec spec(sp.d, sp.mask);
    const CountMatrix W(poisson_counts(mean_model(sp.truth, sp.d), rng));
    const Objective obj(W, spec);
    const auto& lay = spec.layout();
    const int L = lay.natural_size();
    VectorXd g;
    MatrixXd F;
    obj.gradient_fim(sp.truth, 0, L, g, F);
    const VectorXd x0 = lay.pack(sp.truth);
    for (int a = 0; a < L; ++a) {
      const double h = 1e-6;
      auto up = sp.truth, dn = sp.truth;
      VectorXd xu = x0, xd = x0;
      xu(a) += h;
      xd(a) -= h;
      lay.unpack(xu, up);
      lay.unpack(xd, dn);
      const double fd = (obj.value(up) - obj.value(dn)) / (2.0 * h);
      EXPECT_NEAR(g(a), fd, 1e-5 * (1.0 + std::abs(fd))) << "coordinate " << a;
    }
  }
}

// At W equal to the model mean the profiled information is the Schur
// complement of the full (theta, gamma) Poisson information. The oracle builds
// that from a finite-difference Jacobian of the mean.
TEST(Objective, InformationMatchesSchurComplementOracle) {
  std::mt19937_64 rng(14);
  const Eigen::Index n = 6, J = 4;
  const auto sp = testkit::small_problem(n, J, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const MatrixXd mu = mean_model(sp.truth, sp.d);
  const CountMatrix W(mu);
  const Objective obj(W, spec);
  const auto& lay = spec.layout();
  const int L = lay.natural_size();
  VectorXd g;
  MatrixXd F;
  obj.gradient_fim(sp.truth, 0, L, g, F);
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-9);

  MatrixXd jac(n * J, L + n);
  const VectorXd x0 = lay.pack(sp.truth);
  const double h = 1e-6;
  for (int a = 0; a < L + n; ++a) {
    auto up = sp.truth, dn = sp.truth;
    if (a < L) {
      VectorXd xu = x0, xd = x0;
      xu(a) += h;
      xd(a) -= h;
      lay.unpack(xu, up);
      lay.unpack(xd, dn);
    } else {
      up.gamma(a - L) += h;
      dn.gamma(a - L) -= h;
    }
    const MatrixXd d = (mean_model(up, sp.d) - mean_model(dn, sp.d)) / (2.0 * h);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < J; ++j) jac(i * J + j, a) = d(i, j);
  }
  VectorXd inv_mu(n * J);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < J; ++j) inv_mu(i * J + j) = 1.0 / mu(i, j);
  const MatrixXd I = jac.transpose() * inv_mu.asDiagonal() * jac;
  const MatrixXd Itt = I.topLeftCorner(L, L);
  const MatrixXd Itg = I.topRightCorner(L, n);
  const MatrixXd Igg = I.bottomRightCorner(n, n);
  const MatrixXd schur = (Itt - Itg * Igg.ldlt().solve(Itg.transpose())) / static_cast<double>(n);
  EXPECT_LT((F - schur).norm(), 1e-4 * schur.norm());
}

// Monte Carlo check of the same identity: the covariance of the score under
// Poisson sampling approaches F / n.
TEST(Objective, InformationMatchesScoreCovariance) {
  std::mt19937_64 rng(15);
  const Eigen::Index n = 4, J = 3;
  const auto sp = testkit::small_problem(n, J, rng);
  const ModelSpec spec(sp.d, sp.mask);
  const MatrixXd mu = mean_model(sp.truth, sp.d);
  const auto& lay = spec.layout();
  const int L = lay.natural_size();
  VectorXd g;
  MatrixXd F;
  Objective(CountMatrix(mu), spec).gradient_fim(sp.truth, 0, L, g, F);
  const int R = 4000;
  MatrixXd cov = MatrixXd::Zero(L, L);
  for (int r = 0; r < R; ++r) {
    MatrixXd w = poisson_counts(mu, rng);
    for (Eigen::Index i = 0; i < n; ++i)
      if (w.row(i).sum() == 0.0) w(i, 0) = 1.0;
    const CountMatrix Wr(w);
    VectorXd gr;
    MatrixXd Fr;
    Objective(Wr, spec).gradient_fim(sp.truth, 0, L, gr, Fr);
    cov += gr * gr.transpose();
  }
  cov /= R;
  const MatrixXd target = F / static_cast<double>(n);
  EXPECT_LT((cov - target).norm(), 0.1 * target.norm());
}
