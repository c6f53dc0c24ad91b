#pragma once

// Synthetic dilution-series data sets.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/model.hpp"

namespace mbias {

enum class CountDist { poisson, negbin };

inline const char* to_string(CountDist d) { return d == CountDist::poisson ? "poisson" : "negbin"; }

/// Four specimens (two of known composition, two unknown: A and B), each
/// sequenced as one or more dilution series.
struct SimScenario {
  int J = 5;
  double beta_scale = 0.0;
  int series_per_specimen = 1;
  CountDist dist = CountDist::poisson;
  double nb_size = 13.0;
  std::vector<int> dilutions{0, 1, 2, 3};
  double dilution_factor = 9.0;
  double gamma_tilde = -3.7;
  double depth_sigma2 = 0.05;
  std::uint64_t seed = 1;
  std::optional<MatrixXd> specimens;  // overrides make_specimens(J)
  std::optional<VectorXd> beta_star;  // overrides make_beta_star(J)
};

/// Detection-effect pattern: (3, -1, 1, -3) repeated over the first J-2 taxa,
/// followed by (-3, 0). J=5 gives (3, -1, 1, -3, 0).
inline VectorXd make_beta_star(int J) {
  if (J != 5 && J != 20) throw ValidationError("make_beta_star: J must be 5 or 20");
  static constexpr double pattern[4] = {3.0, -1.0, 1.0, -3.0};
  VectorXd b(J);
  for (int j = 0; j < J - 2; ++j) b(j) = pattern[j % 4];
  b(J - 2) = -3.0;
  b(J - 1) = 0.0;
  return b;
}

/// Rows: known specimen 1, known specimen 2, specimen A, specimen B.
inline MatrixXd make_specimens(int J) {
  if (J != 5 && J != 20) throw ValidationError("make_specimens: J must be 5 or 20");
  MatrixXd s = MatrixXd::Zero(4, J);
  for (int j = 0; j < J; ++j) {
    s(0, j) = std::pow(2.0, 4.0 * j / (J - 1));
    s(1, J - 1 - j) = s(0, j);
  }
  const int zeros = J == 5 ? 2 : 8;
  const int present = J - zeros;
  for (int t = 0; t < present; ++t) {
    s(2, zeros + t) = std::pow(100.0, static_cast<double>(t) / (present - 1));
  }
  for (int j = 0; j < J; ++j) s(3, j) = s(2, J - 1 - j);
  for (int k = 0; k < 4; ++k) s.row(k) /= s.row(k).sum();
  return s;
}

struct SimData {
  MatrixXd W;
  DesignSet designs;
  ParamSet truth;
  std::vector<int> dilution;  // per sample
  std::vector<int> specimen;  // per sample
};

namespace detail {

inline MatrixXd draw_counts(const MatrixXd& mu, CountDist dist, double nb_size, std::mt19937_64& rng) {
  MatrixXd W(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      const double m = mu(i, j);
      if (!(m > 0.0)) {
        W(i, j) = 0.0;
        continue;
      }
      double lambda = m;
      if (dist == CountDist::negbin) {
        std::gamma_distribution<double> gam(nb_size, m / nb_size);
        lambda = gam(rng);
      }
      if (!(lambda > 0.0)) {
        W(i, j) = 0.0;
        continue;
      }
      std::poisson_distribution<long long> pois(lambda);
      W(i, j) = static_cast<double>(pois(rng));
    }
  }
  return W;
}

}  // namespace detail

/// Dilution-series data: d in `dilutions` means a dilution_factor^d-fold
/// dilution. Contamination comes from one uniform source with Z~_i =
/// dilution_factor^d_i; log depths are normal with mean min(13.5 - 1.5 d, 12)
/// and variance depth_sigma2.
inline SimData simulate(const SimScenario& scn) {
  if (scn.series_per_specimen < 1) throw ValidationError("series_per_specimen must be >= 1");
  if (scn.dilutions.empty()) throw ValidationError("at least one dilution level is required");
  if (scn.dist == CountDist::negbin && !(scn.nb_size > 0.0)) throw ValidationError("nb size must be positive");
  const MatrixXd spec_p = scn.specimens ? *scn.specimens : make_specimens(scn.J);
  const VectorXd beta_star = scn.beta_star ? *scn.beta_star : make_beta_star(scn.J);
  const int J = static_cast<int>(spec_p.cols());
  if (spec_p.rows() != 4 || beta_star.size() != J) throw ShapeError("scenario overrides have the wrong shape");

  const int levels = static_cast<int>(scn.dilutions.size());
  const int n = 4 * scn.series_per_specimen * levels;
  SimData sd;
  sd.designs.Z = MatrixXd::Zero(n, 4);
  sd.designs.X = MatrixXd::Ones(n, 1);
  sd.designs.Z_tilde = MatrixXd::Zero(n, 1);
  int i = 0;
  for (int k = 0; k < 4; ++k) {
    for (int s = 0; s < scn.series_per_specimen; ++s) {
      for (int d : scn.dilutions) {
        sd.designs.Z(i, k) = 1.0;
        sd.designs.Z_tilde(i, 0) = std::pow(scn.dilution_factor, d);
        sd.dilution.push_back(d);
        sd.specimen.push_back(k);
        ++i;
      }
    }
  }

  std::mt19937_64 rng(scn.seed);
  sd.truth = ParamSet::zeros(n, J, 4, 1, 1, 0);
  sd.truth.beta.row(0) = scn.beta_scale * beta_star.transpose();
  sd.truth.p = spec_p;
  sd.truth.p_tilde.setConstant(1.0 / J);
  sd.truth.gamma_tilde(0) = scn.gamma_tilde;
  std::normal_distribution<double> norm01(0.0, 1.0);
  for (int s = 0; s < n; ++s) {
    const double mean = std::min(13.5 - 1.5 * sd.dilution[static_cast<std::size_t>(s)], 12.0);
    sd.truth.gamma(s) = mean + std::sqrt(scn.depth_sigma2) * norm01(rng);
  }
  const MatrixXd mu = mean_model(sd.truth, sd.designs);
  sd.W = detail::draw_counts(mu, scn.dist, scn.nb_size, rng);
  // Resample any empty sample; vanishingly rare at these depths.
  for (int s = 0; s < n; ++s) {
    while (sd.W.row(s).sum() <= 0.0) {
      sd.W.row(s) = detail::draw_counts(mu.row(s), scn.dist, scn.nb_size, rng);
    }
  }
  return sd;
}

/// Analysis model for `simulate` output: specimens 1 and 2 known, A and B
/// unknown, one detection effect per taxon with the last taxon as reference,
/// contaminant profile and intensity unknown.
inline ModelSpec dilution_model(const SimData& sd, bool beta_free = true) {
  const auto J = sd.truth.p.cols();
  ParamMask mask = ParamMask::all_free(sd.designs, J, static_cast<int>(J - 1));
  mask.fix_p_row(0, sd.truth.p.row(0).transpose());
  mask.fix_p_row(1, sd.truth.p.row(1).transpose());
  if (!beta_free) mask.fix_all_beta(0.0);
  return ModelSpec(sd.designs, std::move(mask));
}

/// One mock community sequenced as a single dilution series: `targets` taxa in
/// equal abundance (the last `targets` columns), the remaining taxa absent from
/// the specimen but present in one contaminant source.
struct SingleSpecimenScenario {
  int J = 30;
  int targets = 8;
  int levels = 9;  // dilutions d = 0..levels-1
  double dilution_factor = 3.0;
  double gamma_tilde = -5.5;
  double log_depth0 = 11.5;
  double log_depth_slope = -0.25;
  double depth_sigma2 = 0.05;
  CountDist dist = CountDist::poisson;
  double nb_size = 13.0;
  int series = 1;
  std::uint64_t seed = 1;
};

inline SimData simulate_single_specimen(const SingleSpecimenScenario& scn) {
  if (scn.targets < 1 || scn.targets >= scn.J) throw ValidationError("need 1 <= targets < J");
  const int J = scn.J;
  const int n = scn.levels * scn.series;
  SimData sd;
  sd.designs.Z = MatrixXd::Ones(n, 1);
  sd.designs.X = MatrixXd::Ones(n, 1);
  sd.designs.Z_tilde = MatrixXd::Zero(n, 1);
  for (int s = 0, i = 0; s < scn.series; ++s) {
    for (int d = 0; d < scn.levels; ++d, ++i) {
      sd.designs.Z_tilde(i, 0) = std::pow(scn.dilution_factor, d);
      sd.dilution.push_back(d);
      sd.specimen.push_back(0);
    }
  }
  std::mt19937_64 rng(scn.seed);
  sd.truth = ParamSet::zeros(n, J, 1, 1, 1, 0);
  const int off = J - scn.targets;
  for (int j = off; j < J; ++j) sd.truth.p(0, j) = 1.0 / scn.targets;
  // Contaminant profile: geometric decay over the off-target taxa.
  for (int j = 0; j < off; ++j) sd.truth.p_tilde(0, j) = std::pow(0.85, j);
  sd.truth.p_tilde.row(0) /= sd.truth.p_tilde.row(0).sum();
  sd.truth.gamma_tilde(0) = scn.gamma_tilde;
  std::normal_distribution<double> norm01(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    sd.truth.gamma(i) = scn.log_depth0 + scn.log_depth_slope * sd.dilution[static_cast<std::size_t>(i)] +
                        std::sqrt(scn.depth_sigma2) * norm01(rng);
  }
  const MatrixXd mu = mean_model(sd.truth, sd.designs);
  sd.W = detail::draw_counts(mu, scn.dist, scn.nb_size, rng);
  for (int s = 0; s < n; ++s) {
    while (sd.W.row(s).sum() <= 0.0) sd.W.row(s) = detail::draw_counts(mu.row(s), scn.dist, scn.nb_size, rng);
  }
  return sd;
}

/// Single-specimen analysis model: p unknown, beta fixed at zero, one
/// contaminant source with its last taxon fixed at zero for identifiability.
inline ModelSpec single_specimen_model(const SimData& sd) {
  const auto J = sd.truth.p.cols();
  ParamMask mask = ParamMask::all_free(sd.designs, J, -1);
  mask.fix_all_beta(0.0);
  mask.fix_p_tilde_entry(0, J - 1, 0.0);
  return ModelSpec(sd.designs, std::move(mask));
}

}  // namespace mbias
