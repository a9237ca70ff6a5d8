#pragma once

// Run configuration, dispatch and output writers behind the command-line tool.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arrivalq/equilibrium.hpp"
#include "arrivalq/fluid.hpp"
#include "arrivalq/params.hpp"
#include "arrivalq/verify.hpp"

namespace arrivalq::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Model { Stochastic, Fluid, Both };
enum class Command { Solve, SocialOpt, Poa, Verify, Diagnostic };
enum class OutputFormat { Json, Csv, Both };

struct AuditOptions {
  std::size_t points = 41;
  std::optional<double> margin;  // default 0.5 / mu
};

struct RunConfig {
  Model model = Model::Stochastic;
  Command command = Command::Solve;
  std::optional<ModelParams> stochastic;
  std::optional<ModelParams> fluid;
  SolverConfig solver;
  AuditOptions audit;
  OutputFormat format = OutputFormat::Both;
  std::filesystem::path out_dir = ".";

  bool wants_stochastic() const { return model != Model::Fluid; }
  bool wants_fluid() const { return model != Model::Stochastic; }

  void validate() const {
    if (wants_stochastic() && !stochastic) throw SolverError(ErrorCode::ConfigInvalid, "lambda is required");
    if (wants_fluid() && !fluid) throw SolverError(ErrorCode::ConfigInvalid, "bigLambda is required");
    if (stochastic) stochastic->validate();
    if (fluid) fluid->validate();
    solver.validate();
    if ((command == Command::SocialOpt || command == Command::Poa) && !wants_fluid())
      throw SolverError(ErrorCode::ConfigInvalid, "social-opt and poa need model fluid or both");
    if (command == Command::Verify && !wants_stochastic())
      throw SolverError(ErrorCode::ConfigInvalid, "verify needs model stochastic or both");
    if (command == Command::Diagnostic) {
      if (model != Model::Both) throw SolverError(ErrorCode::ConfigInvalid, "diagnostic needs model both");
      if (stochastic->population != fluid->population)
        throw SolverError(ErrorCode::ConfigInvalid, "diagnostic compares lambda = bigLambda");
    }
    if (audit.points < 2) throw SolverError(ErrorCode::ConfigInvalid, "auditPoints must be >= 2");
    if (audit.margin && !(*audit.margin >= 0.0 && std::isfinite(*audit.margin)))
      throw SolverError(ErrorCode::ConfigInvalid, "auditMargin must be >= 0");
  }
};

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid: return 2;
    case ErrorCode::NegativeProbability: return 3;
    case ErrorCode::NonpositiveCoefficient: return 4;
    case ErrorCode::NegativeDensity: return 5;
    case ErrorCode::NoConvergence: return 6;
    case ErrorCode::TruncationBreach: return 7;
    case ErrorCode::InfeasibleGap: return 8;
    case ErrorCode::InvalidRegime: return 9;
    case ErrorCode::MassMismatch: return 10;
  }
  return 1;
}

inline json error_object(ErrorCode code, const std::string& message) {
  return {{"schemaVersion", kSchemaVersion},
          {"error", {{"code", std::string(to_string(code))}, {"exitCode", exit_code(code)}, {"message", message}}}};
}

namespace detail {

[[noreturn]] inline void bad(const std::string& what) { throw SolverError(ErrorCode::ConfigInvalid, what); }

inline double number(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) bad(std::string(key) + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(std::string(key) + " must be finite");
  return x;
}

// bounds take a number or the string "inf"
inline double bound(const json& j, const char* key) {
  if (!j.contains(key)) return kInf;
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kInf;
    bad(std::string(key) + " must be a number or \"inf\"");
  }
  return number(j, key);
}

inline std::uint64_t unsigned_int(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    bad(std::string(key) + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline std::string text(const json& j, const char* key) {
  if (!j.contains(key)) bad(std::string(key) + " is required");
  if (!j.at(key).is_string()) bad(std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace detail

/// Flat JSON object -> RunConfig. Throws CONFIG_INVALID.
inline RunConfig parse_config(const json& j) {
  using namespace detail;
  if (!j.is_object()) bad("config must be a JSON object");
  static const std::set<std::string> known{"model", "command", "lambda", "bigLambda", "mu", "alpha",
                                           "beta1", "beta2", "t1", "t2", "epsilon", "dt",
                                           "nmaxTailProb", "mcReps", "seed", "auditPoints", "auditMargin"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) bad("unknown key " + key);

  RunConfig cfg;
  const auto model = text(j, "model");
  if (model == "stochastic") cfg.model = Model::Stochastic;
  else if (model == "fluid") cfg.model = Model::Fluid;
  else if (model == "both") cfg.model = Model::Both;
  else bad("model must be stochastic, fluid or both");

  const auto command = text(j, "command");
  if (command == "solve") cfg.command = Command::Solve;
  else if (command == "social-opt") cfg.command = Command::SocialOpt;
  else if (command == "poa") cfg.command = Command::Poa;
  else if (command == "verify") cfg.command = Command::Verify;
  else if (command == "diagnostic") cfg.command = Command::Diagnostic;
  else bad("unknown command " + command);

  for (const char* key : {"mu", "alpha", "beta1", "beta2"})
    if (!j.contains(key)) bad(std::string(key) + " is required");
  const double mu = number(j, "mu"), alpha = number(j, "alpha");
  const double beta1 = number(j, "beta1"), beta2 = number(j, "beta2");
  const double t1 = bound(j, "t1"), t2 = bound(j, "t2");
  const bool has_lambda = j.contains("lambda"), has_big = j.contains("bigLambda");
  if (cfg.model == Model::Stochastic && has_big) bad("bigLambda belongs to the fluid model");
  if (cfg.model == Model::Fluid && has_lambda) bad("lambda belongs to the stochastic model");
  if (has_lambda) cfg.stochastic = ModelParams::stochastic(number(j, "lambda"), mu, alpha, beta1, beta2, t1, t2);
  if (has_big) cfg.fluid = ModelParams::fluid(number(j, "bigLambda"), mu, alpha, beta1, beta2, t1, t2);

  if (j.contains("epsilon")) cfg.solver.epsilon = number(j, "epsilon");
  if (j.contains("dt")) cfg.solver.dt = number(j, "dt");
  if (j.contains("nmaxTailProb")) cfg.solver.nmax_tail_prob = number(j, "nmaxTailProb");
  if (j.contains("mcReps")) cfg.solver.mc_reps = unsigned_int(j, "mcReps");
  if (j.contains("seed")) cfg.solver.seed = unsigned_int(j, "seed");
  if (j.contains("auditPoints")) cfg.audit.points = unsigned_int(j, "auditPoints");
  if (j.contains("auditMargin")) cfg.audit.margin = number(j, "auditMargin");
  cfg.validate();
  return cfg;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) detail::bad("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    detail::bad("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

namespace detail {

// Only finite numbers go into documents.
inline void put(json& obj, const std::string& key, double v) {
  if (std::isfinite(v)) obj[key] = v;
}

inline json bound_json(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

inline json atoms_json(const std::vector<Atom>& atoms) {
  json arr = json::array();
  for (const auto& a : atoms) arr.push_back({{"t", a.t}, {"mass", a.mass}});
  return arr;
}

inline json named_values(const std::map<std::string, double>& m) {
  json obj = json::object();
  for (const auto& [k, v] : m) put(obj, k, v);
  return obj;
}

inline json params_json(const RunConfig& cfg) {
  const auto& base = cfg.stochastic ? *cfg.stochastic : *cfg.fluid;
  json p;
  if (cfg.stochastic) p["lambda"] = cfg.stochastic->population;
  if (cfg.fluid) p["bigLambda"] = cfg.fluid->population;
  p["mu"] = base.mu;
  p["alpha"] = base.alpha;
  p["beta1"] = base.beta1;
  p["beta2"] = base.beta2;
  p["t1"] = bound_json(base.t1);
  p["t2"] = bound_json(base.t2);
  return p;
}

inline json solver_json(const SolverConfig& s) {
  return {{"epsilon", s.epsilon}, {"dt", s.dt},   {"nmaxTailProb", s.nmax_tail_prob},
          {"mcReps", s.mc_reps},  {"seed", s.seed}};
}

inline json stochastic_json(const EquilibriumSolution& sol) {
  json j;
  j["caseLabel"] = std::string(to_string(sol.case_label));
  put(j, "supportBegin", sol.strategy.support_begin());
  put(j, "supportEnd", sol.strategy.support_end());
  put(j, "te1", sol.te1);
  put(j, "te2", sol.te2);
  put(j, "atomMass", sol.atom_mass);
  if (sol.gap_end) put(j, "gapEnd", *sol.gap_end);
  j["atoms"] = atoms_json(sol.strategy.atoms);
  put(j, "equilibriumCost", sol.equilibrium_cost);
  put(j, "totalMass", sol.strategy.total_mass());
  const auto& d = sol.diagnostics;
  json diag;
  diag["outerIterations"] = d.outer_iterations;
  diag["innerIterations"] = d.inner_iterations;
  put(diag, "massResidual", d.mass_residual);
  put(diag, "maxTruncatedProb", d.max_truncated_prob);
  put(diag, "step", d.step);
  put(diag, "rateStepProduct", d.rate_step_product);
  diag["nmax"] = d.nmax;
  diag["gridPoints"] = sol.strategy.times.size();
  diag["notes"] = d.notes;
  j["diagnostics"] = diag;
  return j;
}

inline json fluid_json(const FluidSolution& sol) {
  json j;
  j["caseLabel"] = std::string(to_string(sol.case_label));
  put(j, "supportBegin", sol.support_begin());
  put(j, "supportEnd", sol.support_end());
  json segs = json::array();
  for (const auto& s : sol.segments) segs.push_back({{"start", s.start}, {"end", s.end}, {"density", s.density}});
  j["segments"] = segs;
  j["atoms"] = atoms_json(sol.atoms);
  put(j, "socialCost", sol.social_cost);
  put(j, "dropCost", sol.drop_cost);
  put(j, "totalMass", sol.total_mass());
  j["thresholds"] = named_values(sol.thresholds);
  j["breakpoints"] = named_values(sol.breakpoints);
  j["atomSizes"] = named_values(sol.atom_sizes);
  j["diagnostics"] = sol.diagnostics;
  return j;
}

inline json report_json(const SimulationReport& r) {
  json j;
  json grid = json::array();
  for (const auto& g : r.grid_costs) grid.push_back({{"t", g.t}, {"mean", g.mean}, {"stdError", g.std_error}});
  j["gridCosts"] = grid;
  put(j, "equilibriumCostEstimate", r.equilibrium_cost_estimate);
  put(j, "equilibriumCostStdError", r.equilibrium_cost_std_error);
  put(j, "minDeviationCost", r.min_deviation_cost);
  put(j, "epsilonViolation", r.epsilon_violation);
  put(j, "violationStdError", r.violation_std_error);
  j["reps"] = r.reps;
  j["seed"] = r.seed;
  return j;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Density table `t,f,cumulative,atom_mass` with a left and a right row at
/// every jump or atom.
inline std::string density_csv(const DensityCurve& c) {
  using detail::fmt;
  std::vector<double> events = c.times;
  for (const auto& a : c.atoms) events.push_back(a.t);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());

  auto atom_at = [&](double t) {
    double m = 0.0;
    for (const auto& a : c.atoms)
      if (a.t == t) m += a.mass;
    return m;
  };
  auto knot_value = [&](double t) {
    auto it = std::lower_bound(c.times.begin(), c.times.end(), t);
    if (it != c.times.end() && *it == t) return c.values[static_cast<std::size_t>(it - c.times.begin())];
    return c.density_at(t);
  };

  std::ostringstream out;
  out << "t,f,cumulative,atom_mass\n";
  auto row = [&](double t, double f, double cum, double atom) {
    out << fmt(t) << ',' << fmt(f) << ',' << fmt(cum) << ',' << fmt(atom) << '\n';
  };
  for (double t : events) {
    const double atom = atom_at(t);
    const double cum = c.cdf(t);
    const Jump* jump = nullptr;
    for (const auto& j : c.jumps)
      if (j.t == t) jump = &j;
    if (jump) {
      row(t, jump->left, cum - atom, 0.0);
      row(t, jump->right, cum, atom);
    } else if (atom > 0.0) {
      const double f = knot_value(t);
      row(t, f, cum - atom, 0.0);
      row(t, f, cum, atom);
    } else {
      row(t, knot_value(t), cum, 0.0);
    }
  }
  return out.str();
}

struct RunOutput {
  json document;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

/// Computes everything the config asks for; writes nothing.
inline RunOutput compute(const RunConfig& cfg) {
  cfg.validate();
  RunOutput out;
  json& doc = out.document;
  doc["schemaVersion"] = kSchemaVersion;
  static const char* const commands[] = {"solve", "social-opt", "poa", "verify", "diagnostic"};
  static const char* const models[] = {"stochastic", "fluid", "both"};
  doc["command"] = commands[static_cast<int>(cfg.command)];
  doc["model"] = models[static_cast<int>(cfg.model)];
  doc["params"] = detail::params_json(cfg);
  doc["solver"] = detail::solver_json(cfg.solver);

  const bool csv = cfg.format != OutputFormat::Json;
  const bool stochastic_solve = cfg.wants_stochastic() &&
                                (cfg.command == Command::Solve || cfg.command == Command::Verify ||
                                 cfg.command == Command::Diagnostic);
  std::optional<EquilibriumSolution> stoch;
  if (stochastic_solve) {
    stoch = solve_equilibrium(*cfg.stochastic, cfg.solver);
    doc["stochastic"] = detail::stochastic_json(*stoch);
    if (csv) out.files.emplace_back("density_stochastic.csv", density_csv(stoch->strategy));
  }

  if (cfg.wants_fluid()) {
    json fl = json::object();
    if (cfg.command != Command::SocialOpt && cfg.command != Command::Verify) {
      const auto eq = fluid_equilibrium(*cfg.fluid);
      fl["equilibrium"] = detail::fluid_json(eq);
      if (csv) out.files.emplace_back("density_fluid.csv", density_csv(eq.to_density_curve()));
    }
    if (cfg.command == Command::SocialOpt || cfg.command == Command::Poa) {
      const auto opt = fluid_social_optimum(*cfg.fluid);
      fl["socialOptimum"] = detail::fluid_json(opt);
      if (csv) out.files.emplace_back("density_fluid_optimum.csv", density_csv(opt.to_density_curve()));
    }
    if (!fl.empty()) doc["fluid"] = fl;
    if (cfg.command == Command::Poa) {
      const auto poa = price_of_anarchy(*cfg.fluid);
      detail::put(doc, "poa", poa.ratio);
      if (poa.explicit_ratio) detail::put(doc, "poaExplicit", *poa.explicit_ratio);
      detail::put(doc, "equilibriumSocialCost", poa.equilibrium_social_cost);
      detail::put(doc, "optimalSocialCost", poa.optimal_social_cost);
    }
  }

  if (cfg.command == Command::Verify) {
    const double margin = cfg.audit.margin.value_or(0.5 / cfg.stochastic->mu);
    const auto grid = audit_grid(stoch->strategy.support_begin(), stoch->strategy.support_end(), margin,
                                 cfg.audit.points);
    const auto rep = best_response_audit(stoch->strategy, *cfg.stochastic, cfg.solver, grid);
    auto v = detail::report_json(rep);
    v["tolerance"] = 3.0 * cfg.solver.epsilon * stoch->equilibrium_cost;
    v["passed"] = rep.epsilon_violation <= 3.0 * cfg.solver.epsilon * stoch->equilibrium_cost;
    doc["verify"] = v;
  }

  if (cfg.command == Command::Diagnostic) {
    const auto d = fluid_stochastic_diagnostic(*cfg.stochastic, cfg.solver);
    json dj;
    dj["stochasticCase"] = d.stochastic_case;
    dj["fluidCase"] = d.fluid_case;
    detail::put(dj, "stochasticTe1", d.stochastic_te1);
    detail::put(dj, "fluidTe1", d.fluid_te1);
    dj["te1Larger"] = d.te1_larger;
    if (d.stochastic_atom) detail::put(dj, "stochasticAtom", *d.stochastic_atom);
    if (d.fluid_atom) detail::put(dj, "fluidAtom", *d.fluid_atom);
    dj["atomLarger"] = d.atom_larger;
    dj["flags"] = d.flags;
    doc["diagnostic"] = dj;
  }

  if (cfg.format != OutputFormat::Csv) out.files.emplace(out.files.begin(), "result.json", doc.dump(2) + "\n");
  return out;
}

// Each file lands under its final name only once fully written.
inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << contents;
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct RunStatus {
  int exit_code = 0;
  json document;  // result on success, error object otherwise
  std::vector<std::filesystem::path> written;
};

/// Computes and writes outputs. Failures leave no files behind.
inline RunStatus run(const RunConfig& cfg) {
  RunStatus status;
  try {
    auto out = compute(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& [name, contents] : out.files) {
      const auto path = cfg.out_dir / name;
      write_atomically(path, contents);
      status.written.push_back(path);
    }
    status.document = std::move(out.document);
  } catch (const SolverError& e) {
    status.exit_code = exit_code(e.code());
    status.document = error_object(e.code(), e.what());
  }
  return status;
}

/// One run per override object in `overrides`, each merged over `base` and
/// written to out_dir/run_<i>. Runs fan out over hardware threads.
inline int run_sweep(const json& base, const json& overrides, const std::filesystem::path& out_dir,
                     std::optional<std::uint64_t> seed, OutputFormat format, json* summary = nullptr) {
  if (!overrides.is_array()) detail::bad("sweep file must hold a JSON array of objects");
  const std::size_t n = overrides.size();
  std::vector<RunStatus> results(n);
  auto one = [&](std::size_t i) {
    try {
      json merged = base;
      if (!overrides[i].is_object()) detail::bad("sweep entry " + std::to_string(i) + " is not an object");
      merged.update(overrides[i]);
      auto cfg = parse_config(merged);
      if (seed) cfg.solver.seed = *seed;
      cfg.format = format;
      cfg.out_dir = out_dir / ("run_" + std::to_string(i));
      results[i] = run(cfg);
    } catch (const SolverError& e) {
      results[i].exit_code = exit_code(e.code());
      results[i].document = error_object(e.code(), e.what());
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  for (std::size_t first = 0; first < n; first += workers) {
    std::vector<std::future<void>> batch;
    for (std::size_t i = first; i < std::min(n, first + workers); ++i)
      batch.push_back(std::async(std::launch::async, one, i));
    for (auto& f : batch) f.get();
  }
  json runs = json::array();
  int worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    json entry{{"index", i}, {"exitCode", results[i].exit_code}};
    if (results[i].exit_code != 0) entry["error"] = results[i].document["error"];
    runs.push_back(entry);
    if (worst == 0) worst = results[i].exit_code;
  }
  json sum{{"schemaVersion", kSchemaVersion}, {"runs", runs}};
  std::filesystem::create_directories(out_dir);
  write_atomically(out_dir / "sweep.json", sum.dump(2) + "\n");
  if (summary) *summary = sum;
  return worst;
}

}  // namespace arrivalq::cli
