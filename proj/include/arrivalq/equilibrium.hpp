#pragma once

// Symmetric Nash equilibrium of the stochastic (Poisson population,
// exponential service) arrival game, with and without opening/closing
// constraints.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "arrivalq/core_model.hpp"
#include "arrivalq/kolmogorov.hpp"
#include "arrivalq/params.hpp"
#include "arrivalq/state.hpp"

namespace arrivalq {

enum class CaseLabel { Unconstrained, Pure, AtomMixed, AtomFreeT2 };

inline std::string_view to_string(CaseLabel label) {
  switch (label) {
    case CaseLabel::Unconstrained: return "UNCONSTRAINED";
    case CaseLabel::Pure: return "PURE";
    case CaseLabel::AtomMixed: return "ATOM_MIXED";
    case CaseLabel::AtomFreeT2: return "ATOM_FREE_T2";
  }
  return "UNKNOWN";
}

struct SolverDiagnostics {
  int outer_iterations = 0;
  int inner_iterations = 0;
  double mass_residual = 0.0;       // (atoms + density) - 1
  double max_truncated_prob = 0.0;  // max_t p_nmax(t)
  double step = 0.0;
  double rate_step_product = 0.0;   // (lambda * max f + mu) * dt
  std::size_t nmax = 0;
  std::vector<std::string> notes;
};

struct EquilibriumSolution {
  DensityCurve strategy;
  std::vector<StateDistribution> path;  // queue law at each strategy knot
  double equilibrium_cost = 0.0;
  double te1 = 0.0;  // magnitude of the earliest arrival time
  double te2 = 0.0;  // latest arrival time
  double atom_mass = 0.0;
  std::optional<double> gap_end;
  CaseLabel case_label = CaseLabel::Unconstrained;
  SolverDiagnostics diagnostics;
};

namespace detail {

enum class MarchOutcome { MassReached, DensityEnded, HorizonReached };

struct MarchResult {
  MarchOutcome outcome = MarchOutcome::DensityEnded;
  double mass = 0.0;
  double end_time = 0.0;
  double max_truncated = 0.0;
  double max_density = 0.0;
  DensityCurve curve;
  std::vector<StateDistribution> path;
};

struct MarchSpec {
  StateDistribution start;
  double target_mass = 1.0;
  double stop_time = kInf;
  bool stop_on_zero_density = true;
  double dt = 0.01;
};

inline double default_step(const ModelParams& params, const SolverConfig& cfg) {
  if (cfg.dt > 0.0) return cfg.dt;
  // (lambda * max f + mu) * dt stays well below 0.05
  const double peak_rate = params.mu * (1.0 + std::max(params.beta1 / params.alpha, 1.0));
  return 0.01 / peak_rate;
}

inline double truncation_bound(const SolverConfig& cfg) { return 10.0 * cfg.nmax_tail_prob; }

/// March the state forward from spec.start, extracting the constant-cost
/// density, until the mass target, the end of the support, or stop_time.
inline MarchResult march(const MarchSpec& spec, const ModelParams& params, const SolverConfig& cfg) {
  MarchResult res;
  StateDistribution state = spec.start;
  const double t0 = state.t;
  double h = spec.dt;
  std::size_t negative_steps = 0;
  if (t0 < 0.0) {
    negative_steps = static_cast<std::size_t>(std::ceil(-t0 / spec.dt - 1e-9));
    negative_steps = std::max<std::size_t>(negative_steps, 1);
    h = -t0 / static_cast<double>(negative_steps);
  }
  const double bound = truncation_bound(cfg);
  double mass = 0.0;
  std::size_t step = 0;
  bool first = true;

  auto record = [&](double t, double f) {
    res.curve.times.push_back(t);
    res.curve.values.push_back(f);
    res.path.push_back(state);
  };
  auto finish = [&](MarchOutcome outcome, double t) {
    res.outcome = outcome;
    res.mass = mass;
    res.end_time = t;
    res.curve.times.push_back(t);
    res.curve.values.push_back(0.0);
    res.path.push_back(state);
    return res;
  };

  while (true) {
    const double t = (step < negative_steps) ? t0 + static_cast<double>(step) * h
                                             : (negative_steps > 0 ? 0.0 : t0) +
                                                   static_cast<double>(step - negative_steps) * h;
    state.t = t;
    res.max_truncated = std::max(res.max_truncated, state.probs.back());
    if (state.probs.back() > bound)
      throw SolverError(ErrorCode::TruncationBreach,
                        "p_nmax = " + std::to_string(state.probs.back()) + " at t=" + std::to_string(t));
    if (t >= spec.stop_time - 1e-12) return finish(MarchOutcome::HorizonReached, spec.stop_time);

    double f = 0.0;
    if (t < 0.0) {
      const auto eq = negative_time_equation(state, t, params);
      if (!(eq.slope > 0.0))
        throw SolverError(ErrorCode::NonpositiveCoefficient, "density coefficient <= 0 at t=" + std::to_string(t));
      f = -eq.intercept / eq.slope;
      if (f <= 0.0) return finish(MarchOutcome::DensityEnded, t);
    } else {
      if (t == 0.0 && negative_steps > 0) {
        const auto left = negative_time_equation(state, -0.0, params);
        const double f_left = -left.intercept / left.slope;
        res.curve.jumps.push_back({0.0, f_left, std::max(density_positive_t(state, params), 0.0)});
      }
      f = density_positive_t(state, params);
      if (f <= 0.0) {
        if (spec.stop_on_zero_density) return finish(MarchOutcome::DensityEnded, t);
        f = 0.0;
      }
    }
    if (first) {
      res.curve.jumps.insert(res.curve.jumps.begin(), Jump{t, 0.0, f});
      first = false;
    }
    res.max_density = std::max(res.max_density, f);

    double dt = h;
    if (t + dt > spec.stop_time) dt = spec.stop_time - t;
    bool hits_mass = false;
    if (f > 0.0 && mass + f * dt >= spec.target_mass) {
      dt = (spec.target_mass - mass) / f;
      hits_mass = true;
    }
    record(t, f);
    state = step_state(state, f, dt, params);
    mass += f * dt;
    if (hits_mass) {
      mass = spec.target_mass;
      state.t = t + dt;
      return finish(MarchOutcome::MassReached, t + dt);
    }
    if (t + dt >= spec.stop_time - 1e-12 && spec.stop_time < kInf) {
      state.t = spec.stop_time;
      return finish(MarchOutcome::HorizonReached, spec.stop_time);
    }
    ++step;
    if (step > 50'000'000) throw SolverError(ErrorCode::NoConvergence, "march did not terminate");
  }
}

inline EquilibriumSolution to_solution(MarchResult&& run, const ModelParams& params, const SolverConfig& cfg) {
  EquilibriumSolution sol;
  sol.strategy = std::move(run.curve);
  sol.path = std::move(run.path);
  sol.te2 = run.end_time;
  sol.diagnostics.max_truncated_prob = run.max_truncated;
  sol.diagnostics.step = default_step(params, cfg);
  sol.diagnostics.rate_step_product = (params.lambda() * run.max_density + params.mu) * sol.diagnostics.step;
  if (sol.diagnostics.rate_step_product > 0.05)
    sol.diagnostics.notes.emplace_back("rate*dt exceeds 0.05; consider a smaller dt");
  return sol;
}

/// Bisection on the start time of an atom-free support. `stop_time` is the
/// closing bound (inf when unconstrained); the zero-density stop is used
/// only without a closing bound.
inline EquilibriumSolution solve_atom_free(const ModelParams& params, const SolverConfig& cfg,
                                           double stop_time, double initial_upper) {
  const std::size_t nmax = nmax_for(params, cfg);
  const double dt = default_step(params, cfg);
  const bool use_zero_stop = !std::isfinite(stop_time);
  auto run = [&](double te1) {
    MarchSpec spec;
    spec.start = StateDistribution::empty(nmax, -te1);
    spec.target_mass = 1.0;
    spec.stop_time = stop_time;
    spec.stop_on_zero_density = use_zero_stop;
    spec.dt = dt;
    return march(spec, params, cfg);
  };

  int iterations = 0;
  double lo = 0.0;
  double hi = std::max(initial_upper, 1e-6);
  while (run(hi).outcome != MarchOutcome::MassReached) {
    lo = hi;
    hi *= 2.0;
    if (++iterations > 200) throw SolverError(ErrorCode::NoConvergence, "cannot bracket earliest arrival time");
  }

  const double tol = 0.25 * cfg.epsilon;
  std::optional<MarchResult> best;
  double best_te1 = 0.0;
  for (int it = 0; it < 200; ++it) {
    ++iterations;
    const double mid = 0.5 * (lo + hi);
    auto res = run(mid);
    if (res.outcome == MarchOutcome::MassReached) {
      hi = mid;
    } else {
      lo = mid;
      if (!best || std::abs(res.mass - 1.0) < std::abs(best->mass - 1.0)) {
        best = std::move(res);
        best_te1 = mid;
      }
      if (std::abs(best->mass - 1.0) <= tol) break;
    }
    if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
  }
  if (!best || std::abs(best->mass - 1.0) > cfg.epsilon)
    throw SolverError(ErrorCode::NoConvergence,
                      "earliest-arrival bisection stalled with mass residual " +
                          std::to_string(best ? best->mass - 1.0 : -1.0));

  auto sol = to_solution(std::move(*best), params, cfg);
  sol.te1 = best_te1;
  sol.equilibrium_cost = params.beta1 * best_te1;
  sol.diagnostics.outer_iterations = iterations;
  sol.diagnostics.mass_residual = sol.strategy.total_mass() - 1.0;
  sol.diagnostics.nmax = nmax;
  return sol;
}

inline double g1_horizon(const ModelParams& params) {
  const double lambda = params.lambda();
  return (lambda + 5.0 * std::sqrt(lambda)) / params.mu + params.t1;
}

/// Smallest t in (-t1, horizon] with g1(t, p) <= target, refined to a root.
inline std::optional<double> first_crossing(double p, double target, const ModelParams& params, double tail) {
  const double lo_t = -params.t1;
  const double hi_t = g1_horizon(params);
  const std::size_t samples = 4000;
  const double span = hi_t - lo_t;
  auto h = [&](double t) { return g1(t, p, params, tail) - target; };
  double prev_t = lo_t + 1e-9 * std::max(1.0, span);
  double prev = h(prev_t);
  if (prev <= 0.0) return prev_t;
  for (std::size_t i = 1; i <= samples; ++i) {
    const double t = lo_t + span * static_cast<double>(i) / static_cast<double>(samples);
    const double v = h(t);
    if (v <= 0.0) {
      std::uintmax_t max_iter = 200;
      auto tol = boost::math::tools::eps_tolerance<double>(50);
      auto [a, b] = boost::math::tools::toms748_solve(h, prev_t, t, prev, v, tol, max_iter);
      return 0.5 * (a + b);
    }
    prev_t = t;
    prev = v;
  }
  return std::nullopt;
}

}  // namespace detail

/// Unconstrained equilibrium: connected atom-free support [-te1, te2] with
/// cost beta1 * te1 everywhere on it.
inline EquilibriumSolution solve_unconstrained(const ModelParams& params, const SolverConfig& cfg) {
  params.validate();
  cfg.validate();
  ModelParams free = params;
  free.t1 = kInf;
  free.t2 = kInf;
  const double fluid_scale = params.beta2 * params.lambda() / ((params.beta1 + params.beta2) * params.mu);
  auto sol = detail::solve_atom_free(free, cfg, kInf, fluid_scale);
  sol.case_label = CaseLabel::Unconstrained;
  return sol;
}

struct ConstrainedClassification {
  CaseLabel label = CaseLabel::Unconstrained;
  double te1 = 0.0;  // unconstrained support
  double te2 = 0.0;
  std::optional<double> te1_closing;  // start of the atom-free support under the closing bound
  std::optional<double> t_star;       // argmin_{t>=0} g1(t, 1)
  std::optional<double> g1_star;
  std::optional<double> g2_one;
  std::optional<double> t_prime;      // first t with g1(t, 1) = g2(1)
  bool tie = false;
};

/// Decide which equilibrium structure the constraints induce.
inline ConstrainedClassification classify_constrained(const ModelParams& params, const SolverConfig& cfg) {
  params.validate();
  cfg.validate();
  ConstrainedClassification c;
  const auto free = solve_unconstrained(params, cfg);
  c.te1 = free.te1;
  c.te2 = free.te2;
  if (params.t1 >= c.te1 && params.t2 >= c.te2) {
    c.label = CaseLabel::Unconstrained;
    return c;
  }
  if (params.t2 < c.te2) {
    ModelParams closing = params;
    closing.t1 = kInf;
    const auto bounded = detail::solve_atom_free(closing, cfg, params.t2, c.te1);
    c.te1_closing = bounded.te1;
    if (params.t1 >= bounded.te1) {
      c.label = CaseLabel::AtomFreeT2;
      return c;
    }
  }

  const double tail = cfg.nmax_tail_prob;
  const double g2_one = g2(1.0, params, tail);
  auto g1_one = [&](double t) { return g1(t, 1.0, params, tail); };
  const auto [t_star, g1_star] = boost::math::tools::brent_find_minima(g1_one, 0.0, detail::g1_horizon(params), 40);
  c.g2_one = g2_one;
  c.t_star = t_star;
  c.g1_star = g1_star;
  if (g2_one < g1_star + cfg.epsilon * g2_one) {
    c.tie = g2_one >= g1_star;
    c.label = CaseLabel::Pure;
    return c;
  }
  c.t_prime = detail::first_crossing(1.0, g2_one, params, tail);
  if (!c.t_prime || params.t2 < *c.t_prime) {
    c.label = CaseLabel::Pure;
    return c;
  }
  c.label = CaseLabel::AtomMixed;
  return c;
}

/// Queue law at t_gap when Poisson(lambda * p) customers arrived at -t1 and
/// nobody since: the remaining count is n minus Poisson services, floored at 0.
inline StateDistribution state_after_atom(double p, double t_gap, const ModelParams& params, std::size_t nmax) {
  const double arrivals_mean = params.lambda() * p;
  const double served_mean = params.mu * (t_gap + params.t1);
  const std::size_t n_hi = poisson_truncation(arrivals_mean, 1e-17) + 1;
  const auto arrivals = poisson_pmf(arrivals_mean, n_hi);
  const auto served = poisson_pmf(served_mean, n_hi);
  StateDistribution s;
  s.t = t_gap;
  s.probs.assign(nmax + 1, 0.0);
  double busy = 0.0;
  for (std::size_t n = 1; n <= n_hi; ++n) {
    for (std::size_t k = 1; k <= n; ++k) {
      const double pk = arrivals[n] * served[n - k];
      s.probs[std::min(k, nmax)] += pk;
      busy += pk;
    }
  }
  s.probs[0] = 1.0 - busy;
  return s;
}

/// Equilibrium under binding constraints: pure atom at -t1, atom + gap +
/// density, or an atom-free support cut at the closing bound.
inline EquilibriumSolution solve_constrained(const ModelParams& params, const SolverConfig& cfg,
                                             const ConstrainedClassification& cls) {
  const double tail = cfg.nmax_tail_prob;
  switch (cls.label) {
    case CaseLabel::Unconstrained: return solve_unconstrained(params, cfg);
    case CaseLabel::AtomFreeT2: {
      ModelParams closing = params;
      closing.t1 = kInf;
      auto sol = detail::solve_atom_free(closing, cfg, params.t2, cls.te1);
      sol.case_label = CaseLabel::AtomFreeT2;
      return sol;
    }
    case CaseLabel::Pure: {
      EquilibriumSolution sol;
      sol.case_label = CaseLabel::Pure;
      sol.strategy.atoms.push_back({-params.t1, 1.0});
      sol.atom_mass = 1.0;
      sol.te1 = params.t1;
      sol.te2 = -params.t1;
      sol.equilibrium_cost = g2(1.0, params, tail);
      sol.diagnostics.nmax = nmax_for(params, cfg);
      if (cls.tie) sol.diagnostics.notes.emplace_back("g1(t*,1) and g2(1) tie within epsilon; classified PURE");
      return sol;
    }
    case CaseLabel::AtomMixed: break;
  }

  const std::size_t nmax = nmax_for(params, cfg);
  const double dt = detail::default_step(params, cfg);
  struct Trial {
    double p;
    double gap;
    detail::MarchResult run;
  };
  auto attempt = [&](double p) -> std::optional<Trial> {
    const double target = g2(p, params, tail);
    const auto gap = detail::first_crossing(p, target, params, tail);
    if (!gap) return std::nullopt;
    detail::MarchSpec spec;
    spec.start = state_after_atom(p, *gap, params, nmax);
    spec.target_mass = 1.0 - p;
    spec.stop_time = params.t2;
    spec.stop_on_zero_density = true;
    spec.dt = dt;
    return Trial{p, *gap, detail::march(spec, params, cfg)};
  };

  double lo = 0.0;
  double hi = 1.0;
  const double tol = 0.25 * cfg.epsilon;
  std::optional<Trial> best;
  int outer = 0;
  for (; outer < 200; ++outer) {
    const double p = 0.5 * (lo + hi);
    auto trial = attempt(p);
    if (!trial)
      throw SolverError(ErrorCode::InfeasibleGap,
                        "no gap end solves g1(t,p) = g2(p) for p=" + std::to_string(p));
    const double deficit = (1.0 - p) - trial->run.mass;
    if (trial->run.outcome == detail::MarchOutcome::MassReached) {
      hi = p;
    } else {
      lo = p;
      if (!best || std::abs(deficit) < std::abs((1.0 - best->p) - best->run.mass)) best = std::move(trial);
      if (std::abs((1.0 - best->p) - best->run.mass) <= tol) break;
    }
    if (hi - lo <= 1e-14) break;
  }
  if (!best || std::abs((1.0 - best->p) - best->run.mass) > cfg.epsilon)
    throw SolverError(ErrorCode::NoConvergence, "atom-size bisection stalled");

  const double p = best->p;
  const double gap = best->gap;
  auto sol = detail::to_solution(std::move(best->run), params, cfg);
  sol.case_label = CaseLabel::AtomMixed;
  sol.strategy.atoms.push_back({-params.t1, p});
  sol.atom_mass = p;
  sol.gap_end = gap;
  sol.te1 = params.t1;
  sol.equilibrium_cost = g2(p, params, tail);
  sol.diagnostics.outer_iterations = outer + 1;
  sol.diagnostics.mass_residual = sol.strategy.total_mass() - 1.0;
  sol.diagnostics.nmax = nmax;
  return sol;
}

inline EquilibriumSolution solve_constrained(const ModelParams& params, const SolverConfig& cfg) {
  return solve_constrained(params, cfg, classify_constrained(params, cfg));
}

/// Dispatch on whether any bound is finite.
inline EquilibriumSolution solve_equilibrium(const ModelParams& params, const SolverConfig& cfg) {
  if (!params.opening_bound() && !params.closing_bound()) return solve_unconstrained(params, cfg);
  return solve_constrained(params, cfg);
}

}  // namespace arrivalq
