#pragma once

// Command-line front end: JSON analysis configs, CSV tables, JSON results.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mbias/errors.hpp"
#include "mbias/inference.hpp"
#include "mbias/io.hpp"
#include "mbias/likelihood.hpp"
#include "mbias/model.hpp"
#include "mbias/simgen.hpp"
#include "mbias/solver.hpp"

namespace mbias::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kSolver = 3, kInference = 4 };

/// Flag values that override the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<std::string> estimator;
  std::optional<int> bootstrap_B;
  std::optional<std::string> m_rule;
  std::optional<double> alpha;
};

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline json matrix_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

inline MatrixXd json_matrix(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(what + ": ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

inline Eigen::Index resolve_name(const json& j, const std::vector<std::string>& names, const std::string& what) {
  if (j.is_number_integer()) {
    const auto k = j.get<long long>();
    if (k < 0 || k >= static_cast<long long>(names.size())) {
      throw ValidationError(what + " index " + std::to_string(k) + " is out of range");
    }
    return static_cast<Eigen::Index>(k);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    const auto it = std::find(names.begin(), names.end(), s);
    if (it == names.end()) throw ValidationError(what + " '" + s + "' not found");
    return static_cast<Eigen::Index>(it - names.begin());
  }
  throw ValidationError(what + " must be a name or an index");
}

inline std::vector<std::string> index_names(Eigen::Index count, const std::string& prefix) {
  std::vector<std::string> out;
  for (Eigen::Index k = 0; k < count; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

inline std::string zero_pad(int k, int width) {
  std::string s = std::to_string(k);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ValidationError("write to '" + path + "' failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Analysis: config plus loaded tables

struct Analysis {
  json config;  // resolved (overrides applied)
  fs::path base;
  io::Table counts;
  io::Table specimen_design;
  io::Table covariates;
  io::Table contaminant_design;
  std::vector<int> spurious_group;
  int num_groups = 0;
  DesignSet designs;
  ParamMask mask;
  Estimator estimator = Estimator::reweighted;
  SolverOptions solver;
  std::uint64_t seed = 1;
  int threads = 1;

  const std::vector<std::string>& samples() const { return counts.row_names; }
  const std::vector<std::string>& taxa() const { return counts.col_names; }
  const std::vector<std::string>& specimens() const { return specimen_design.col_names; }
  const std::vector<std::string>& covariate_names() const { return covariates.col_names; }
  const std::vector<std::string>& sources() const { return contaminant_design.col_names; }

  ModelSpec spec() const { return ModelSpec(designs, mask); }
  CountMatrix count_matrix() const { return CountMatrix(counts.values); }
};

inline json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
}

inline void apply_overrides(json& cfg, const Overrides& ov) {
  if (ov.seed) cfg["seed"] = *ov.seed;
  if (ov.threads) cfg["threads"] = *ov.threads;
  if (ov.out) cfg["out"] = *ov.out;
  if (ov.estimator) cfg["estimator"] = *ov.estimator;
  if (ov.bootstrap_B) cfg["bootstrap"]["B"] = *ov.bootstrap_B;
  if (ov.m_rule) {
    const auto& r = *ov.m_rule;
    const bool numeric = !r.empty() && std::all_of(r.begin(), r.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric) {
      cfg["bootstrap"]["m_rule"] = std::stoi(r);
    } else {
      cfg["bootstrap"]["m_rule"] = r;
    }
  }
  if (ov.alpha) cfg["bootstrap"]["alpha"] = *ov.alpha;
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "unweighted") return Estimator::unweighted;
  if (s == "reweighted") return Estimator::reweighted;
  throw ValidationError("estimator must be 'unweighted' or 'reweighted', got '" + s + "'");
}

inline SolverOptions parse_solver(const json& j) {
  SolverOptions o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw ValidationError("config 'solver' must be an object");
  o.t0 = detail::get_or(j, "t0", o.t0);
  o.a = detail::get_or(j, "a", o.a);
  o.t_cutoff = detail::get_or(j, "t_cutoff", o.t_cutoff);
  o.fisher_rel_tol = detail::get_or(j, "fisher_rel_tol", o.fisher_rel_tol);
  o.fisher_max_iter = detail::get_or(j, "fisher_max_iter", o.fisher_max_iter);
  o.eps_sum = detail::get_or(j, "eps_sum", o.eps_sum);
  o.tol = detail::get_or(j, "tol", o.tol);
  o.max_sweeps = detail::get_or(j, "max_sweeps", o.max_sweeps);
  o.max_backtracks = detail::get_or(j, "max_backtracks", o.max_backtracks);
  o.backtrack_factor = detail::get_or(j, "backtrack_factor", o.backtrack_factor);
  o.al_max_rounds = detail::get_or(j, "al_max_rounds", o.al_max_rounds);
  o.zero_snap = detail::get_or(j, "zero_snap", o.zero_snap);
  if (!(o.t0 > 0.0) || !(o.a > 1.0) || !(o.t_cutoff >= o.t0)) throw ValidationError("solver: need t0 > 0, a > 1, t_cutoff >= t0");
  if (!(o.zero_snap >= 0.0)) throw ValidationError("solver: zero_snap must be nonnegative");
  if (!(o.tol > 0.0) || !(o.eps_sum > 0.0)) throw ValidationError("solver: tolerances must be positive");
  if (o.max_sweeps < 1 || o.max_backtracks < 0 || o.fisher_max_iter < 1 || o.al_max_rounds < 1) {
    throw ValidationError("solver: iteration limits must be positive");
  }
  if (!(o.backtrack_factor > 0.0 && o.backtrack_factor < 1.0)) throw ValidationError("solver: backtrack_factor must lie in (0, 1)");
  return o;
}

inline BootstrapConfig parse_bootstrap(const json& cfg, int default_B) {
  BootstrapConfig b;
  const json j = cfg.contains("bootstrap") ? cfg.at("bootstrap") : json::object();
  b.B = detail::get_or(j, "B", default_B);
  b.alpha = detail::get_or(j, "alpha", b.alpha);
  b.reestimate_weights = detail::get_or(j, "reestimate_weights", false);
  b.seed = detail::get_or<std::uint64_t>(cfg, "seed", 1);
  b.threads = detail::get_or(cfg, "threads", 1);
  if (j.contains("m_rule")) {
    const auto& r = j.at("m_rule");
    if (r.is_number_integer()) {
      b.m_rule = MRule::fixed;
      b.m_fixed = r.get<int>();
    } else if (r == "ceil_sqrt" || r == "sqrt") {
      b.m_rule = MRule::ceil_sqrt;
    } else if (r == "round_sqrt") {
      b.m_rule = MRule::round_sqrt;
    } else {
      throw ValidationError("bootstrap m_rule must be 'ceil_sqrt', 'round_sqrt' or an integer");
    }
  }
  b.solver = parse_solver(cfg.contains("solver") ? cfg.at("solver") : json());
  return b;
}

namespace detail {

inline fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void require_same_samples(const io::Table& ref, const io::Table& t, const std::string& what) {
  if (t.row_names != ref.row_names) {
    throw ValidationError(what + ": sample IDs must match the count table row for row");
  }
}

inline void apply_fixed_entry(Analysis& a, const json& e, ParamMask& mask) {
  if (!e.is_object() || !e.contains("param") || !e.contains("value")) {
    throw ValidationError("fixed entries need 'param' and 'value'");
  }
  const auto param = e.at("param").get<std::string>();
  const double value = e.at("value").get<double>();
  auto row = [&](const std::vector<std::string>& names, const char* what) {
    if (!e.contains("row")) throw ValidationError(std::string("fixed ") + param + " entry needs 'row'");
    return resolve_name(e.at("row"), names, what);
  };
  auto col = [&] {
    if (!e.contains("col")) throw ValidationError("fixed " + param + " entry needs 'col'");
    return resolve_name(e.at("col"), a.taxa(), "taxon");
  };
  if (param == "p") {
    mask.fix_p_entry(row(a.specimens(), "specimen"), col(), value);
  } else if (param == "p_tilde") {
    mask.fix_p_tilde_entry(row(a.sources(), "contaminant source"), col(), value);
  } else if (param == "beta") {
    mask.fix_beta(row(a.covariate_names(), "covariate"), col(), value);
  } else if (param == "gamma_tilde") {
    mask.fix_gamma_tilde(row(a.sources(), "contaminant source"), value);
  } else if (param == "alpha_tilde") {
    mask.fix_alpha_tilde(row(index_names(a.num_groups, ""), "spurious group"), value);
  } else {
    throw ValidationError("unknown parameter block '" + param + "'");
  }
}

}  // namespace detail

/// Loads tables and builds the design and mask described by `cfg`. Relative
/// paths resolve against `base` (the config file's directory).
inline Analysis load_analysis(json cfg, const fs::path& base) {
  using detail::get_or;
  Analysis a;
  a.base = base;
  if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
  auto path_of = [&](const char* key) -> std::optional<fs::path> {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
    return detail::resolve_path(base, cfg.at(key).get<std::string>());
  };
  const auto counts_path = path_of("counts");
  if (!counts_path) throw ValidationError("config needs 'counts'");
  a.counts = io::read_csv(counts_path->string());
  const auto n = a.counts.rows();
  const auto J = a.counts.cols();
  if (n < 1) throw ValidationError("count table has no samples");

  if (const auto p = path_of("specimen_design")) {
    a.specimen_design = io::read_csv(p->string());
    detail::require_same_samples(a.counts, a.specimen_design, p->string());
  } else {
    throw ValidationError("config needs 'specimen_design'");
  }
  if (const auto p = path_of("covariates")) {
    a.covariates = io::read_csv(p->string());
    detail::require_same_samples(a.counts, a.covariates, p->string());
  } else {
    a.covariates.row_names = a.counts.row_names;
    a.covariates.col_names = {"intercept"};
    a.covariates.values = MatrixXd::Ones(n, 1);
  }
  if (const auto p = path_of("contaminant_design")) {
    a.contaminant_design = io::read_csv(p->string());
    detail::require_same_samples(a.counts, a.contaminant_design, p->string());
  } else {
    a.contaminant_design.row_names = a.counts.row_names;
    a.contaminant_design.values = MatrixXd::Zero(n, 0);
  }

  a.spurious_group.assign(static_cast<std::size_t>(n), -1);
  if (cfg.contains("spurious_groups") && !cfg.at("spurious_groups").is_null()) {
    const auto& g = cfg.at("spurious_groups");
    if (!g.is_array() || static_cast<Eigen::Index>(g.size()) != n) {
      throw ValidationError("spurious_groups must list one group (or -1) per sample");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      a.spurious_group[i] = g[i].get<int>();
      if (a.spurious_group[i] < -1) throw ValidationError("spurious group ids must be >= -1");
      a.num_groups = std::max(a.num_groups, a.spurious_group[i] + 1);
    }
  }

  a.designs.Z = a.specimen_design.values;
  a.designs.X = a.covariates.values;
  a.designs.Z_tilde = a.contaminant_design.values;
  a.designs.spurious_group = a.spurious_group;
  a.designs.num_groups = a.num_groups;
  a.designs.validate();

  int reference = -1;
  if (cfg.contains("reference_taxon") && !cfg.at("reference_taxon").is_null()) {
    reference = static_cast<int>(detail::resolve_name(cfg.at("reference_taxon"), a.taxa(), "reference taxon"));
  }
  a.mask = ParamMask::all_free(a.designs, J, reference);

  if (const auto p = path_of("known_p")) {
    const auto known = io::read_csv(p->string());
    for (Eigen::Index r = 0; r < known.rows(); ++r) {
      const auto k = detail::resolve_name(json(known.row_names[static_cast<std::size_t>(r)]), a.specimens(), "specimen");
      VectorXd row = VectorXd::Zero(J);
      if (known.cols() != J) throw ValidationError(p->string() + ": known composition must list every taxon");
      for (Eigen::Index c = 0; c < known.cols(); ++c) {
        const auto j = detail::resolve_name(json(known.col_names[static_cast<std::size_t>(c)]), a.taxa(), "taxon");
        row(j) = known.values(r, c);
      }
      a.mask.fix_p_row(k, row);
    }
  }
  if (cfg.contains("fix_all_beta") && !cfg.at("fix_all_beta").is_null()) {
    a.mask.fix_all_beta(cfg.at("fix_all_beta").get<double>());
  }
  if (cfg.contains("fixed")) {
    if (!cfg.at("fixed").is_array()) throw ValidationError("'fixed' must be an array");
    for (const auto& e : cfg.at("fixed")) detail::apply_fixed_entry(a, e, a.mask);
  }
  bool free_beta = false;
  for (Eigen::Index q = 0; q < a.mask.beta_fixed.rows(); ++q)
    for (Eigen::Index j = 0; j < J; ++j) free_beta |= !a.mask.beta_fixed(q, j);
  if (free_beta && reference < 0) {
    throw ValidationError("detection effects have unknowns; set 'reference_taxon' (or 'fix_all_beta')");
  }

  a.estimator = parse_estimator(get_or<std::string>(cfg, "estimator", "reweighted"));
  a.solver = parse_solver(cfg.contains("solver") ? cfg.at("solver") : json());
  a.seed = get_or<std::uint64_t>(cfg, "seed", 1);
  a.threads = get_or(cfg, "threads", 1);
  if (a.threads < 1) throw ValidationError("threads must be at least 1");
  a.config = std::move(cfg);
  return a;
}

// ---------------------------------------------------------------------------
// Result records

namespace detail {

inline json names_json(const Analysis& a) {
  return {{"samples", a.samples()},
          {"taxa", a.taxa()},
          {"specimens", a.specimens()},
          {"covariates", a.covariate_names()},
          {"sources", a.sources()},
          {"spurious_groups", a.num_groups}};
}

inline json estimates_json(const ParamSet& ps) {
  return {{"p", matrix_json(ps.p)},
          {"beta", matrix_json(ps.beta)},
          {"p_tilde", matrix_json(ps.p_tilde)},
          {"gamma_tilde", vector_json(ps.gamma_tilde)},
          {"alpha_tilde", vector_json(ps.alpha_tilde)},
          {"gamma", vector_json(ps.gamma)}};
}

inline json diagnostics_json(const FitDiagnostics& d) {
  return {{"converged", d.converged},
          {"barrier_rounds", d.barrier_rounds},
          {"fisher_iterations", d.fisher_iterations},
          {"sweeps", d.sweeps},
          {"stalled_steps", d.stalled_steps},
          {"estimable", d.estimable},
          {"tangent_dim", d.tangent_dim},
          {"information_rank", d.information_rank},
          {"beta_connected", d.beta_connected}};
}

inline json header(const char* command) { return {{"schema_version", kSchemaVersion}, {"command", command}}; }

inline json fit_json(const Analysis& a, const FitResult& fr) {
  json out = header("fit");
  out["estimator"] = to_string(fr.estimator);
  out["names"] = names_json(a);
  out["estimates"] = estimates_json(fr.params);
  out["objective"] = {{"loglik", fr.loglik}, {"deviance", fr.deviance}};
  out["diagnostics"] = diagnostics_json(fr.diagnostics);
  out["config"] = a.config;
  return out;
}

inline std::vector<std::string> warnings_for(const FitResult& fr) {
  std::vector<std::string> w;
  const auto& d = fr.diagnostics;
  if (!d.converged) w.push_back("stage 2 stopped at the sweep limit before meeting the tolerance");
  if (d.information_rank < d.tangent_dim) {
    w.push_back("information has rank " + std::to_string(d.information_rank) + " of " +
                std::to_string(d.tangent_dim) + "; some parameters may not be identifiable");
  }
  if (!d.beta_connected) w.push_back("taxa are not connected through known specimens; detection effects may not be identifiable");
  return w;
}

inline std::string coord_row_name(const Analysis& a, const Coordinate& c) {
  switch (c.block) {
    case Block::beta: return a.covariate_names()[static_cast<std::size_t>(c.row)];
    case Block::p: return a.specimens()[static_cast<std::size_t>(c.row)];
    case Block::p_tilde:
    case Block::gamma_tilde: return a.sources()[static_cast<std::size_t>(c.row)];
    case Block::alpha_tilde: return std::to_string(c.row);
  }
  return "";
}

}  // namespace detail

struct CommandResult {
  json record;
  std::vector<std::string> warnings;
};

inline CommandResult cmd_fit(const Analysis& a) {
  const ModelSpec spec = a.spec();
  const FitResult fr = fit(spec, a.count_matrix(), a.estimator, a.solver);
  return {detail::fit_json(a, fr), detail::warnings_for(fr)};
}

inline CommandResult cmd_ci(const Analysis& a) {
  const ModelSpec spec = a.spec();
  const CountMatrix W = a.count_matrix();
  BootstrapConfig cfg = parse_bootstrap(a.config, 1000);
  cfg.solver = a.solver;
  const FitResult fr = fit(spec, W, a.estimator, a.solver);
  const auto draws = bootstrap_params(spec, W, fr, cfg);
  const auto intervals = marginal_ci(draws, flatten(fr.params), cfg.alpha, W.samples());
  json out = detail::fit_json(a, fr);
  out["command"] = "ci";
  out["bootstrap"] = {{"B", cfg.B},      {"m", draws.m},         {"seed", cfg.seed},
                      {"alpha", cfg.alpha}, {"failures", draws.failures}, {"m_rule", to_string(cfg.m_rule)},
                      {"reestimate_weights", cfg.reestimate_weights}};
  json list = json::array();
  for (const auto& iv : intervals) {
    json e = {{"param", to_string(iv.coord.block)}, {"row", detail::coord_row_name(a, iv.coord)}};
    if (iv.coord.block != Block::gamma_tilde && iv.coord.block != Block::alpha_tilde) {
      e["col"] = a.taxa()[static_cast<std::size_t>(iv.coord.col)];
    }
    e["estimate"] = iv.estimate;
    e["lower"] = iv.lower_clip;
    e["upper"] = iv.upper_clip;
    e["lower_unclipped"] = iv.lower;
    e["upper_unclipped"] = iv.upper;
    list.push_back(std::move(e));
  }
  out["intervals"] = std::move(list);
  auto warnings = detail::warnings_for(fr);
  if (draws.failures > 0) warnings.push_back(std::to_string(draws.failures) + " bootstrap replicates failed and were excluded");
  return {std::move(out), std::move(warnings)};
}

/// Builds the null hypothesis from the config's "test" section.
inline TestSpec parse_test(const Analysis& a, const ModelSpec& spec) {
  if (!a.config.contains("test")) throw ValidationError("config needs a 'test' section");
  const auto& t = a.config.at("test");
  TestSpec ts;
  ts.name = detail::get_or<std::string>(t, "name", "lrt");
  if (detail::get_or(t, "beta_zero", false)) {
    const auto& mk = spec.mask();
    for (Eigen::Index q = 0; q < mk.beta_fixed.rows(); ++q)
      for (Eigen::Index j = 0; j < mk.beta_fixed.cols(); ++j)
        if (!mk.beta_fixed(q, j)) ts.constraints.push_back({{Block::beta, q, j}, 0.0});
  }
  if (t.contains("constraints")) {
    for (const auto& e : t.at("constraints")) {
      if (!e.is_object() || !e.contains("param") || !e.contains("value")) {
        throw ValidationError("test constraints need 'param' and 'value'");
      }
      const auto param = e.at("param").get<std::string>();
      Coordinate c;
      auto row = [&](const std::vector<std::string>& names, const char* what) {
        if (!e.contains("row")) throw ValidationError("test constraint on " + param + " needs 'row'");
        return detail::resolve_name(e.at("row"), names, what);
      };
      auto col = [&] {
        if (!e.contains("col")) throw ValidationError("test constraint on " + param + " needs 'col'");
        return detail::resolve_name(e.at("col"), a.taxa(), "taxon");
      };
      if (param == "p") {
        c = {Block::p, row(a.specimens(), "specimen"), col()};
      } else if (param == "p_tilde") {
        c = {Block::p_tilde, row(a.sources(), "contaminant source"), col()};
      } else if (param == "beta") {
        c = {Block::beta, row(a.covariate_names(), "covariate"), col()};
      } else if (param == "gamma_tilde") {
        c = {Block::gamma_tilde, row(a.sources(), "contaminant source"), 0};
      } else if (param == "alpha_tilde") {
        c = {Block::alpha_tilde, row(detail::index_names(a.num_groups, ""), "spurious group"), 0};
      } else {
        throw ValidationError("unknown parameter block '" + param + "'");
      }
      ts.constraints.push_back({c, e.at("value").get<double>()});
    }
  }
  return ts;
}

inline CommandResult cmd_test(const Analysis& a) {
  const ModelSpec spec = a.spec();
  const CountMatrix W = a.count_matrix();
  BootstrapConfig cfg = parse_bootstrap(a.config, 250);
  cfg.solver = a.solver;
  const TestSpec ts = parse_test(a, spec);
  const LrtResult r = lrt(spec, W, ts, a.estimator, cfg);
  json out = detail::header("test");
  out["estimator"] = to_string(a.estimator);
  out["names"] = detail::names_json(a);
  json constraints = json::array();
  for (const auto& c : ts.constraints) {
    json e = {{"param", to_string(c.coord.block)}, {"row", detail::coord_row_name(a, c.coord)}, {"value", c.value}};
    if (c.coord.block != Block::gamma_tilde && c.coord.block != Block::alpha_tilde) {
      e["col"] = a.taxa()[static_cast<std::size_t>(c.coord.col)];
    }
    constraints.push_back(std::move(e));
  }
  out["test"] = {{"name", r.name},
                 {"constraints", std::move(constraints)},
                 {"statistic", r.statistic},
                 {"null_quantile", r.null_quantile},
                 {"p_value", r.p_value},
                 {"reject", r.reject},
                 {"alpha", r.alpha},
                 {"B", r.B},
                 {"m", r.m},
                 {"failures", r.failures},
                 {"seed", cfg.seed}};
  out["full"] = {{"deviance", r.fit_full.deviance}, {"estimates", detail::estimates_json(r.fit_full.params)}};
  out["null"] = {{"deviance", r.fit_null.deviance}, {"estimates", detail::estimates_json(r.fit_null.params)}};
  out["config"] = a.config;
  auto warnings = detail::warnings_for(r.fit_full);
  if (r.failures > 0) warnings.push_back(std::to_string(r.failures) + " bootstrap replicates failed and were excluded");
  return {std::move(out), std::move(warnings)};
}

// ---------------------------------------------------------------------------
// simulate

inline SimScenario parse_scenario(const json& s) {
  SimScenario scn;
  scn.J = detail::get_or(s, "J", scn.J);
  scn.beta_scale = detail::get_or(s, "beta_scale", scn.beta_scale);
  scn.series_per_specimen = detail::get_or(s, "series", scn.series_per_specimen);
  const auto dist = detail::get_or<std::string>(s, "dist", "poisson");
  if (dist == "poisson") {
    scn.dist = CountDist::poisson;
  } else if (dist == "negbin") {
    scn.dist = CountDist::negbin;
  } else {
    throw ValidationError("scenario dist must be 'poisson' or 'negbin'");
  }
  scn.nb_size = detail::get_or(s, "nb_size", scn.nb_size);
  scn.dilutions = detail::get_or(s, "dilutions", scn.dilutions);
  scn.dilution_factor = detail::get_or(s, "dilution_factor", scn.dilution_factor);
  scn.gamma_tilde = detail::get_or(s, "gamma_tilde", scn.gamma_tilde);
  scn.depth_sigma2 = detail::get_or(s, "depth_sigma2", scn.depth_sigma2);
  return scn;
}

inline SingleSpecimenScenario parse_single_scenario(const json& s) {
  SingleSpecimenScenario scn;
  scn.J = detail::get_or(s, "J", scn.J);
  scn.targets = detail::get_or(s, "targets", scn.targets);
  scn.levels = detail::get_or(s, "levels", scn.levels);
  scn.dilution_factor = detail::get_or(s, "dilution_factor", scn.dilution_factor);
  scn.gamma_tilde = detail::get_or(s, "gamma_tilde", scn.gamma_tilde);
  scn.log_depth0 = detail::get_or(s, "log_depth0", scn.log_depth0);
  scn.log_depth_slope = detail::get_or(s, "log_depth_slope", scn.log_depth_slope);
  scn.depth_sigma2 = detail::get_or(s, "depth_sigma2", scn.depth_sigma2);
  scn.series = detail::get_or(s, "series", scn.series);
  const auto dist = detail::get_or<std::string>(s, "dist", "poisson");
  if (dist != "poisson" && dist != "negbin") throw ValidationError("scenario dist must be 'poisson' or 'negbin'");
  scn.dist = dist == "poisson" ? CountDist::poisson : CountDist::negbin;
  scn.nb_size = detail::get_or(s, "nb_size", scn.nb_size);
  return scn;
}

/// Writes a simulated data set and a ready-to-run analysis config into `dir`.
inline CommandResult cmd_simulate(const json& cfg, const std::string& dir) {
  const json scn_json = cfg.contains("scenario") ? cfg.at("scenario") : json::object();
  const auto kind = detail::get_or<std::string>(scn_json, "kind", "dilution");
  const auto seed = detail::get_or<std::uint64_t>(cfg, "seed", 1);
  SimData sd;
  json analysis = json::object();
  if (kind == "dilution") {
    SimScenario scn = parse_scenario(scn_json);
    scn.seed = seed;
    sd = simulate(scn);
  } else if (kind == "single_specimen") {
    SingleSpecimenScenario scn = parse_single_scenario(scn_json);
    scn.seed = seed;
    sd = simulate_single_specimen(scn);
  } else {
    throw ValidationError("scenario kind must be 'dilution' or 'single_specimen'");
  }
  const auto n = static_cast<int>(sd.W.rows());
  const auto J = static_cast<int>(sd.W.cols());
  const int K = static_cast<int>(sd.designs.Z.cols());
  std::vector<std::string> samples, taxa, specimens;
  for (int i = 0; i < n; ++i) samples.push_back("s" + detail::zero_pad(i + 1, 3));
  for (int j = 0; j < J; ++j) taxa.push_back("taxon" + detail::zero_pad(j + 1, 2));
  if (kind == "dilution") {
    specimens = {"known1", "known2", "A", "B"};
  } else {
    specimens = {"mock"};
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
  const fs::path d(dir);
  auto write = [&](const char* name, const MatrixXd& m, const std::vector<std::string>& rows,
                   const std::vector<std::string>& cols) {
    io::write_csv((d / name).string(), io::Table{rows, cols, m}, "sample");
  };
  write("counts.csv", sd.W, samples, taxa);
  write("specimen_design.csv", sd.designs.Z, samples, specimens);
  write("covariates.csv", sd.designs.X, samples, {"intercept"});
  write("contaminant_design.csv", sd.designs.Z_tilde, samples, {"contaminant"});
  write("truth_composition.csv", sd.designs.Z * sd.truth.p, samples, taxa);

  analysis["counts"] = "counts.csv";
  analysis["specimen_design"] = "specimen_design.csv";
  analysis["covariates"] = "covariates.csv";
  analysis["contaminant_design"] = "contaminant_design.csv";
  analysis["estimator"] = "reweighted";
  analysis["seed"] = seed;
  if (kind == "dilution") {
    io::write_csv((d / "known_p.csv").string(),
                  io::Table{{"known1", "known2"}, taxa, sd.truth.p.topRows(2)}, "specimen");
    analysis["known_p"] = "known_p.csv";
    analysis["reference_taxon"] = taxa.back();
    analysis["test"] = {{"name", "beta_zero"}, {"beta_zero", true}};
  } else {
    analysis["fix_all_beta"] = 0.0;
    analysis["fixed"] = json::array({{{"param", "p_tilde"}, {"row", "contaminant"}, {"col", taxa.back()}, {"value", 0.0}}});
    std::vector<int> folds;
    for (int i = 0; i < n; ++i) folds.push_back(sd.dilution[static_cast<std::size_t>(i)] % 3);
    analysis["cv"] = {{"fold_of", folds}, {"unit", "specimen"}, {"heldout_alpha", true},
                      {"truth", "truth_composition.csv"}};
  }
  detail::write_text((d / "config.json").string(), analysis.dump(2) + "\n");

  json truth = {{"p", detail::matrix_json(sd.truth.p)},
                {"beta", detail::matrix_json(sd.truth.beta)},
                {"p_tilde", detail::matrix_json(sd.truth.p_tilde)},
                {"gamma_tilde", detail::vector_json(sd.truth.gamma_tilde)},
                {"gamma", detail::vector_json(sd.truth.gamma)},
                {"dilution", sd.dilution}};
  json out = detail::header("simulate");
  out["kind"] = kind;
  out["seed"] = seed;
  out["scenario"] = scn_json;
  out["samples"] = n;
  out["taxa"] = J;
  out["specimens"] = K;
  out["truth"] = std::move(truth);
  detail::write_text((d / "truth.json").string(), out.dump(2) + "\n");
  return {std::move(out), {}};
}

// ---------------------------------------------------------------------------
// cv

/// Fold assignment: explicit per-sample ids, or units (samples, or groups of
/// samples sharing a specimen design row) shuffled with the seed and dealt
/// round-robin into k folds.
inline std::vector<int> assign_folds(const Analysis& a, const json& cv, int& folds) {
  const auto n = static_cast<int>(a.counts.rows());
  std::vector<int> fold_of(static_cast<std::size_t>(n), 0);
  if (cv.contains("fold_of")) {
    const auto& f = cv.at("fold_of");
    if (!f.is_array() || static_cast<int>(f.size()) != n) throw ValidationError("cv fold_of must list one fold per sample");
    folds = 0;
    for (int i = 0; i < n; ++i) {
      fold_of[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)].get<int>();
      if (fold_of[static_cast<std::size_t>(i)] < 0) throw ValidationError("cv fold ids must be nonnegative");
      folds = std::max(folds, fold_of[static_cast<std::size_t>(i)] + 1);
    }
    return fold_of;
  }
  folds = detail::get_or(cv, "folds", 0);
  if (folds < 1) throw ValidationError("cv needs 'folds' >= 1 or 'fold_of'");
  const auto unit = detail::get_or<std::string>(cv, "unit", "sample");
  std::vector<int> unit_of(static_cast<std::size_t>(n));
  int units = 0;
  if (unit == "sample") {
    for (int i = 0; i < n; ++i) unit_of[static_cast<std::size_t>(i)] = units++;
  } else if (unit == "specimen") {
    std::vector<int> first;
    for (int i = 0; i < n; ++i) {
      int u = -1;
      for (std::size_t k = 0; k < first.size(); ++k) {
        if (a.designs.Z.row(i) == a.designs.Z.row(first[k])) u = static_cast<int>(k);
      }
      if (u < 0) {
        u = static_cast<int>(first.size());
        first.push_back(i);
      }
      unit_of[static_cast<std::size_t>(i)] = u;
    }
    units = static_cast<int>(first.size());
  } else {
    throw ValidationError("cv unit must be 'sample' or 'specimen'");
  }
  if (folds > units) throw ValidationError("cv has more folds than units");
  std::vector<int> order(static_cast<std::size_t>(units));
  for (int u = 0; u < units; ++u) order[static_cast<std::size_t>(u)] = u;
  std::mt19937_64 rng(detail::get_or<std::uint64_t>(cv, "seed", a.seed));
  for (int u = units - 1; u > 0; --u) {
    const auto r = static_cast<int>(rng() % static_cast<std::uint64_t>(u + 1));
    std::swap(order[static_cast<std::size_t>(u)], order[static_cast<std::size_t>(r)]);
  }
  std::vector<int> unit_fold(static_cast<std::size_t>(units));
  for (int pos = 0; pos < units; ++pos) unit_fold[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos % folds;
  for (int i = 0; i < n; ++i) fold_of[static_cast<std::size_t>(i)] = unit_fold[static_cast<std::size_t>(unit_of[static_cast<std::size_t>(i)])];
  return fold_of;
}

struct FoldModel {
  DesignSet designs;
  ParamMask mask;
  std::vector<int> heldout_samples;
  std::vector<int> unit_of_sample;  // per held-out sample: column of its unknown specimen
  std::vector<std::string> unit_names;
  std::vector<int> kept_specimens;
};

/// Model for one fold: held-out samples become specimens of unknown
/// composition (one per sample, or one per shared design row when
/// pooled); training specimens keep their mask; specimens left without
/// samples are dropped. With `heldout_alpha`, held-out samples form their own
/// spurious-scale group.
inline FoldModel fold_model(const Analysis& a, const std::vector<int>& fold_of, int fold, bool pooled,
                            bool heldout_alpha) {
  const auto n = a.counts.rows();
  const auto J = a.counts.cols();
  const auto& Z = a.designs.Z;
  FoldModel fm;
  for (Eigen::Index k = 0; k < Z.cols(); ++k) {
    bool used = false;
    for (Eigen::Index i = 0; i < n; ++i) used |= fold_of[static_cast<std::size_t>(i)] != fold && Z(i, k) != 0.0;
    if (used) fm.kept_specimens.push_back(static_cast<int>(k));
  }
  std::vector<int> unit_rep;  // representative sample per unit
  for (Eigen::Index i = 0; i < n; ++i) {
    if (fold_of[static_cast<std::size_t>(i)] != fold) continue;
    fm.heldout_samples.push_back(static_cast<int>(i));
    int u = -1;
    if (pooled) {
      for (std::size_t k = 0; k < unit_rep.size(); ++k)
        if (Z.row(i) == Z.row(unit_rep[k])) u = static_cast<int>(k);
    }
    if (u < 0) {
      u = static_cast<int>(unit_rep.size());
      unit_rep.push_back(static_cast<int>(i));
      fm.unit_names.push_back("heldout_" + a.samples()[static_cast<std::size_t>(i)]);
    }
    fm.unit_of_sample.push_back(u);
  }
  const auto K_kept = static_cast<Eigen::Index>(fm.kept_specimens.size());
  const auto U = static_cast<Eigen::Index>(unit_rep.size());
  fm.designs = a.designs;
  fm.designs.Z = MatrixXd::Zero(n, K_kept + U);
  for (Eigen::Index c = 0; c < K_kept; ++c) fm.designs.Z.col(c) = Z.col(fm.kept_specimens[static_cast<std::size_t>(c)]);
  for (std::size_t h = 0; h < fm.heldout_samples.size(); ++h) {
    const auto i = fm.heldout_samples[h];
    fm.designs.Z.row(i).setZero();
    fm.designs.Z(i, K_kept + fm.unit_of_sample[h]) = 1.0;
  }
  if (heldout_alpha) {
    const int g = fm.designs.num_groups;
    fm.designs.num_groups = g + 1;
    for (auto i : fm.heldout_samples) fm.designs.spurious_group[static_cast<std::size_t>(i)] = g;
  }
  fm.mask = ParamMask::all_free(fm.designs, J, -1);
  fm.mask.beta_fixed = a.mask.beta_fixed;
  fm.mask.values.beta = a.mask.values.beta;
  fm.mask.p_tilde_fixed = a.mask.p_tilde_fixed;
  fm.mask.values.p_tilde = a.mask.values.p_tilde;
  fm.mask.gamma_tilde_fixed = a.mask.gamma_tilde_fixed;
  fm.mask.values.gamma_tilde = a.mask.values.gamma_tilde;
  for (int g = 0; g < a.num_groups; ++g) {
    fm.mask.alpha_tilde_fixed[static_cast<std::size_t>(g)] = a.mask.alpha_tilde_fixed[static_cast<std::size_t>(g)];
    fm.mask.values.alpha_tilde(g) = a.mask.values.alpha_tilde(g);
  }
  for (Eigen::Index c = 0; c < K_kept; ++c) {
    const auto k = fm.kept_specimens[static_cast<std::size_t>(c)];
    fm.mask.p_fixed.row(c) = a.mask.p_fixed.row(k);
    fm.mask.values.p.row(c) = a.mask.values.p.row(k);
  }
  return fm;
}

inline CommandResult cmd_cv(const Analysis& a) {
  const json cv = a.config.contains("cv") ? a.config.at("cv") : json::object();
  int folds = 0;
  const auto fold_of = assign_folds(a, cv, folds);
  if (folds == 1) {
    auto res = cmd_fit(a);
    res.record["command"] = "cv";
    res.record["folds"] = 1;
    return res;
  }
  const bool pooled = detail::get_or<std::string>(cv, "unit", "sample") == "specimen";
  const bool heldout_alpha = detail::get_or(cv, "heldout_alpha", false);
  const auto n = a.counts.rows();
  const auto J = a.counts.cols();

  // Per-sample truth: a supplied table, or the known composition of the
  // sample's specimens.
  std::optional<MatrixXd> truth;
  if (cv.contains("truth") && !cv.at("truth").is_null()) {
    const auto path = detail::resolve_path(a.base, cv.at("truth").get<std::string>());
    const auto t = io::read_csv(path.string());
    detail::require_same_samples(a.counts, t, path.string());
    if (t.col_names != a.taxa()) throw ValidationError(path.string() + ": taxa must match the count table");
    truth = t.values;
  } else {
    bool all_known = true;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < a.designs.Z.cols(); ++k)
        if (a.designs.Z(i, k) != 0.0 && !a.mask.p_fixed.row(k).all()) all_known = false;
    if (all_known) {
      truth = a.designs.Z * a.mask.values.p;
      for (Eigen::Index i = 0; i < n; ++i) truth->row(i) /= truth->row(i).sum();
    }
  }

  json out = detail::header("cv");
  out["estimator"] = to_string(a.estimator);
  out["names"] = detail::names_json(a);
  out["folds"] = folds;
  out["fold_of"] = fold_of;
  json fold_list = json::array();
  std::vector<std::string> warnings;
  int model_better = 0;
  int scored = 0;
  for (int f = 0; f < folds; ++f) {
    json rec = {{"fold", f}};
    const FoldModel fm = fold_model(a, fold_of, f, pooled, heldout_alpha);
    json held = json::array();
    for (auto i : fm.heldout_samples) held.push_back(a.samples()[static_cast<std::size_t>(i)]);
    rec["heldout"] = held;
    if (fm.heldout_samples.empty()) {
      rec["status"] = "skipped";
      rec["reason"] = "no held-out samples";
      warnings.push_back("fold " + std::to_string(f) + " skipped: no held-out samples");
      fold_list.push_back(std::move(rec));
      continue;
    }
    try {
      const ModelSpec spec(fm.designs, fm.mask);
      if (spec.layout().natural_size() == 0) throw ValidationError("no estimable parameters");
      const FitResult fr = fit(spec, a.count_matrix(), a.estimator, a.solver);
      if (fr.diagnostics.information_rank == 0) throw ValidationError("no identifiable parameters");
      const auto K_kept = static_cast<Eigen::Index>(fm.kept_specimens.size());
      json units = json::array();
      for (std::size_t u = 0; u < fm.unit_names.size(); ++u) {
        const VectorXd row = fr.params.p.row(K_kept + static_cast<Eigen::Index>(u)).transpose();
        units.push_back({{"name", fm.unit_names[u]}, {"p_hat", detail::vector_json(row)}});
      }
      rec["units"] = std::move(units);
      rec["status"] = "ok";
      rec["diagnostics"] = detail::diagnostics_json(fr.diagnostics);
      if (truth) {
        double se_model = 0.0;
        double se_plugin = 0.0;
        for (std::size_t h = 0; h < fm.heldout_samples.size(); ++h) {
          const auto i = fm.heldout_samples[h];
          const VectorXd t = truth->row(i).transpose();
          const VectorXd ph = fr.params.p.row(K_kept + fm.unit_of_sample[h]).transpose();
          const VectorXd plug = a.counts.values.row(i).transpose() / a.counts.values.row(i).sum();
          se_model += (ph - t).squaredNorm();
          se_plugin += (plug - t).squaredNorm();
        }
        const double cells = static_cast<double>(fm.heldout_samples.size() * static_cast<std::size_t>(J));
        const double rm = std::sqrt(se_model / cells);
        const double rp = std::sqrt(se_plugin / cells);
        rec["rmse_model"] = rm;
        rec["rmse_plugin"] = rp;
        ++scored;
        model_better += rm < rp ? 1 : 0;
      }
      for (const auto& w : detail::warnings_for(fr)) warnings.push_back("fold " + std::to_string(f) + ": " + w);
    } catch (const ValidationError& e) {
      rec["status"] = "skipped";
      rec["reason"] = e.what();
      warnings.push_back("fold " + std::to_string(f) + " skipped: " + e.what());
    } catch (const SolverError& e) {
      rec["status"] = "skipped";
      rec["reason"] = e.what();
      warnings.push_back("fold " + std::to_string(f) + " skipped: " + e.what());
    }
    fold_list.push_back(std::move(rec));
  }
  out["fold_results"] = std::move(fold_list);
  out["summary"] = {{"scored_folds", scored}, {"model_better_folds", model_better}};
  out["config"] = a.config;
  return {std::move(out), std::move(warnings)};
}

// ---------------------------------------------------------------------------
// Entry point

inline void emit(const CommandResult& res, const std::optional<std::string>& out_path, std::ostream& out,
                 std::ostream& err) {
  for (const auto& w : res.warnings) err << "warning: " << w << '\n';
  const std::string text = res.record.dump(2) + "\n";
  if (out_path && !out_path->empty() && *out_path != "-") {
    detail::write_text(*out_path, text);
  } else {
    out << text;
  }
}

/// Parses arguments and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Bias, contamination and boundary-aware abundance estimation for sequencing count tables"};
  app.require_subcommand(1);
  Overrides ov;
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_path, estimator, m_rule;
  int B = 0;
  double alpha = 0.0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "analysis config (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_path, "output path");
    sub->add_option("--estimator", estimator, "unweighted | reweighted")
        ->check(CLI::IsMember({"unweighted", "reweighted"}));
    sub->add_option("--bootstrap-B", B, "bootstrap replicates")->check(CLI::PositiveNumber);
    sub->add_option("--m-rule", m_rule, "ceil_sqrt | round_sqrt | <integer>");
    sub->add_option("--alpha", alpha, "test level / interval miscoverage")->check(CLI::Range(0.0, 1.0));
  };
  auto* fit_cmd = app.add_subcommand("fit", "estimate parameters");
  auto* ci_cmd = app.add_subcommand("ci", "bootstrap marginal confidence intervals");
  auto* test_cmd = app.add_subcommand("test", "likelihood-ratio test with bootstrap calibration");
  auto* sim_cmd = app.add_subcommand("simulate", "write a simulated dilution-series data set");
  auto* cv_cmd = app.add_subcommand("cv", "cross-validated composition estimates");
  for (auto* s : {fit_cmd, ci_cmd, test_cmd, cv_cmd}) add_common(s, true);
  add_common(sim_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidation;
  }
  auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };
  CLI::App* sub = app.get_subcommands().front();
  if (given(sub, "--seed")) ov.seed = seed;
  if (given(sub, "--threads")) ov.threads = threads;
  if (given(sub, "--out")) ov.out = out_path;
  if (given(sub, "--estimator")) ov.estimator = estimator;
  if (given(sub, "--bootstrap-B")) ov.bootstrap_B = B;
  if (given(sub, "--m-rule")) ov.m_rule = m_rule;
  if (given(sub, "--alpha")) ov.alpha = alpha;

  try {
    json cfg = json::object();
    fs::path base = fs::current_path();
    if (!config_path.empty()) {
      cfg = load_config(config_path);
      base = fs::absolute(config_path).parent_path();
    }
    apply_overrides(cfg, ov);
    const std::optional<std::string> dest =
        cfg.contains("out") && cfg.at("out").is_string() ? std::optional<std::string>(cfg.at("out").get<std::string>())
                                                          : std::nullopt;
    if (sub == sim_cmd) {
      if (!dest) throw ValidationError("simulate needs --out <directory>");
      const auto res = cmd_simulate(cfg, *dest);
      for (const auto& w : res.warnings) err << "warning: " << w << '\n';
      return kOk;
    }
    const Analysis a = load_analysis(cfg, base);
    CommandResult res;
    if (sub == fit_cmd) {
      res = cmd_fit(a);
    } else if (sub == ci_cmd) {
      res = cmd_ci(a);
    } else if (sub == test_cmd) {
      res = cmd_test(a);
    } else {
      res = cmd_cv(a);
    }
    emit(res, dest, out, err);
    return kOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const json::exception& e) {
    err << "error: config: " << e.what() << '\n';
    return kValidation;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const InferenceError& e) {
    err << "inference error: " << e.what() << '\n';
    return kInference;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace mbias::cli
