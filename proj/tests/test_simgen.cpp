#include <gtest/gtest.h>

#include <cmath>

#include "mbias/simgen.hpp"

using namespace mbias;

TEST(Simgen, BetaStarPatterns) {
  VectorXd b5(5);
  b5 << 3, -1, 1, -3, 0;
  EXPECT_EQ(make_beta_star(5), b5);
  const VectorXd b20 = make_beta_star(20);
  for (int j = 0; j < 18; ++j) EXPECT_EQ(b20(j), (std::array<double, 4>{3, -1, 1, -3})[j % 4]);
  EXPECT_EQ(b20(18), -3.0);
  EXPECT_EQ(b20(19), 0.0);
  EXPECT_THROW(make_beta_star(7), ValidationError);
}

TEST(Simgen, SpecimenCompositions) {
  for (int J : {5, 20}) {
    const MatrixXd s = make_specimens(J);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(s.row(k).sum(), 1.0, 1e-14);
    // Known specimens: geometric from 1 to 16, the second mirrored.
    EXPECT_NEAR(s(0, J - 1) / s(0, 0), 16.0, 1e-12);
    for (int j = 0; j < J; ++j) EXPECT_NEAR(s(1, j), s(0, J - 1 - j), 1e-15);
    const int zeros = J == 5 ? 2 : 8;
    for (int j = 0; j < zeros; ++j) {
      EXPECT_EQ(s(2, j), 0.0);
      EXPECT_EQ(s(3, J - 1 - j), 0.0);
    }
    EXPECT_NEAR(s(2, J - 1) / s(2, zeros), 100.0, 1e-10);
  }
  const MatrixXd s5 = make_specimens(5);
  for (int j = 1; j < 5; ++j) EXPECT_NEAR(s5(0, j) / s5(0, j - 1), 2.0, 1e-12);
}

TEST(Simgen, LayoutAndTruth) {
  SimScenario scn;
  scn.series_per_specimen = 2;
  scn.beta_scale = 0.5;
  const auto sd = simulate(scn);
  ASSERT_EQ(sd.W.rows(), 32);
  ASSERT_EQ(sd.W.cols(), 5);
  EXPECT_EQ(sd.truth.beta.row(0).transpose(), 0.5 * make_beta_star(5));
  EXPECT_EQ(sd.truth.p, make_specimens(5));
  EXPECT_NEAR(sd.truth.p_tilde.sum(), 1.0, 1e-15);
  for (Eigen::Index i = 0; i < 32; ++i) {
    EXPECT_EQ(sd.designs.Z.row(i).sum(), 1.0);
    EXPECT_EQ(sd.designs.Z(i, sd.specimen[static_cast<std::size_t>(i)]), 1.0);
    EXPECT_EQ(sd.designs.Z_tilde(i, 0), std::pow(9.0, sd.dilution[static_cast<std::size_t>(i)]));
    EXPECT_GT(sd.W.row(i).sum(), 0.0);
  }
  EXPECT_NO_THROW(dilution_model(sd));
}

TEST(Simgen, ContaminationGrowsNinefoldPerDilution) {
  const auto sd = simulate(SimScenario{});
  const MeanParts parts(sd.truth, sd.designs);
  for (Eigen::Index i = 0; i + 1 < sd.W.rows(); ++i) {
    if (sd.specimen[i] != sd.specimen[i + 1]) continue;
    const double r0 = parts.spurious.row(i).sum() / parts.signal.row(i).sum();
    const double r1 = parts.spurious.row(i + 1).sum() / parts.signal.row(i + 1).sum();
    EXPECT_NEAR(r1 / r0, 9.0, 1e-12);
  }
}

TEST(Simgen, DepthMeansFollowDilution) {
  SimScenario scn;
  scn.series_per_specimen = 50;
  const auto sd = simulate(scn);
  std::array<double, 4> sum{}, cnt{};
  for (std::size_t i = 0; i < sd.dilution.size(); ++i) {
    sum[static_cast<std::size_t>(sd.dilution[i])] += sd.truth.gamma(static_cast<Eigen::Index>(i));
    cnt[static_cast<std::size_t>(sd.dilution[i])] += 1.0;
  }
  const double se = std::sqrt(0.05 / 200.0);
  for (int d = 0; d < 4; ++d) EXPECT_NEAR(sum[d] / cnt[d], std::min(13.5 - 1.5 * d, 12.0), 5.0 * se);
}

TEST(Simgen, SeedReproducibility) {
  SimScenario scn;
  scn.seed = 42;
  const auto a = simulate(scn);
  const auto b = simulate(scn);
  EXPECT_EQ(a.W, b.W);
  scn.seed = 43;
  EXPECT_NE(a.W, simulate(scn).W);
}

TEST(Simgen, CountMoments) {
  const MatrixXd mu = MatrixXd::Constant(200, 200, 50.0);
  std::mt19937_64 rng(1);
  for (auto dist : {CountDist::poisson, CountDist::negbin}) {
    const MatrixXd w = detail::draw_counts(mu, dist, 13.0, rng);
    const double mean = w.mean();
    const double var = (w.array() - mean).square().sum() / (w.size() - 1.0);
    const double expect_var = dist == CountDist::poisson ? 50.0 : 50.0 + 2500.0 / 13.0;
    EXPECT_NEAR(mean, 50.0, 0.5);
    EXPECT_NEAR(var / expect_var, 1.0, 0.03);
  }
}

TEST(Simgen, AbsentTaxaHaveZeroSignal) {
  const auto sd = simulate(SimScenario{});
  const MeanParts parts(sd.truth, sd.designs);
  for (Eigen::Index i = 0; i < sd.W.rows(); ++i) {
    if (sd.specimen[i] != 2) continue;
    EXPECT_EQ(parts.signal(i, 0), 0.0);
    EXPECT_EQ(parts.signal(i, 1), 0.0);
  }
}

TEST(Simgen, SingleSpecimenScenario) {
  SingleSpecimenScenario scn;
  const auto sd = simulate_single_specimen(scn);
  ASSERT_EQ(sd.W.rows(), 9);
  ASSERT_EQ(sd.W.cols(), 30);
  EXPECT_NEAR(sd.truth.p.sum(), 1.0, 1e-14);
  EXPECT_EQ(sd.truth.p(0, 0), 0.0);
  EXPECT_EQ(sd.truth.p_tilde(0, 29), 0.0);
  const auto spec = single_specimen_model(sd);
  EXPECT_EQ(spec.layout().natural_size(), 30 + 29 + 1);
}
