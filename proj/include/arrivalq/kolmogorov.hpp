#pragma once

// Transient birth-death propagation of the queue-length law under a
// time-varying arrival density, plus extraction of the equilibrium density
// from the constant-cost condition.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "arrivalq/core_model.hpp"
#include "arrivalq/params.hpp"
#include "arrivalq/state.hpp"

namespace arrivalq {

struct Atom {
  double t = 0.0;
  double mass = 0.0;
};

struct Jump {
  double t = 0.0;
  double left = 0.0;
  double right = 0.0;
};

/// Arrival strategy on a time grid. The density is a step function:
/// values[i] holds on [times[i], times[i+1]); the last value is the density
/// at the stopping point and carries no mass.
struct DensityCurve {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<Atom> atoms;
  std::vector<Jump> jumps;

  double atom_mass() const {
    double m = 0.0;
    for (const auto& a : atoms) m += a.mass;
    return m;
  }

  double density_mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) m += values[i] * (times[i + 1] - times[i]);
    return m;
  }

  double total_mass() const { return atom_mass() + density_mass(); }

  double support_begin() const {
    double lo = times.empty() ? kInf : times.front();
    for (const auto& a : atoms) lo = std::min(lo, a.t);
    return lo;
  }

  double support_end() const {
    double hi = times.empty() ? -kInf : times.back();
    for (const auto& a : atoms) hi = std::max(hi, a.t);
    return hi;
  }

  /// Step-function density at t (right-continuous).
  double density_at(double t) const {
    if (times.size() < 2 || t < times.front() || t >= times.back()) return 0.0;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  /// F(t) = mass arriving at or before t.
  double cdf(double t) const {
    double m = 0.0;
    for (const auto& a : atoms)
      if (a.t <= t) m += a.mass;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
      if (times[i] >= t) break;
      m += values[i] * (std::min(t, times[i + 1]) - times[i]);
    }
    return m;
  }
};

inline std::size_t nmax_for(const ModelParams& params, const SolverConfig& cfg) {
  return std::max<std::size_t>(poisson_truncation(params.lambda(), cfg.nmax_tail_prob), 2);
}

namespace detail {

// dp/dt of the truncated birth-death chain; columns of the generator sum to zero.
inline void birth_death_rhs(const std::vector<double>& p, double birth, double death,
                            std::vector<double>& dp) {
  const std::size_t n = p.size() - 1;
  dp[0] = death * p[1] - birth * p[0];
  for (std::size_t k = 1; k < n; ++k)
    dp[k] = birth * p[k - 1] - (birth + death) * p[k] + death * p[k + 1];
  dp[n] = birth * p[n - 1] - death * p[n];
}

}  // namespace detail

/// One explicit RK4 step with the arrival density frozen at f_value.
inline StateDistribution step_state(const StateDistribution& state, double f_value, double dt,
                                    const ModelParams& params) {
  const double birth = params.lambda() * f_value;
  const double death = params.mu;
  const std::size_t m = state.probs.size();
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  const auto& p = state.probs;
  detail::birth_death_rhs(p, birth, death, k1);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + 0.5 * dt * k1[i];
  detail::birth_death_rhs(tmp, birth, death, k2);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + 0.5 * dt * k2[i];
  detail::birth_death_rhs(tmp, birth, death, k3);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + dt * k3[i];
  detail::birth_death_rhs(tmp, birth, death, k4);

  StateDistribution next;
  next.t = state.t + dt;
  next.probs.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    next.probs[i] = p[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (next.probs[i] < -1e-9)
      throw SolverError(ErrorCode::NegativeProbability,
                        "p_" + std::to_string(i) + " = " + std::to_string(next.probs[i]) +
                            " after step; dt too large");
  }
  return next;
}

/// E[N(t)] / mu.
inline double expected_queue(const StateDistribution& state, double mu) {
  double mean = 0.0;
  for (std::size_t k = 1; k < state.probs.size(); ++k) mean += static_cast<double>(k) * state.probs[k];
  return mean / mu;
}

/// Coefficients of the linear-in-f constant-cost equation for t < 0:
/// slope * f + intercept = 0.
struct NegativeTimeEquation {
  double slope = 0.0;
  double intercept = 0.0;
};

inline NegativeTimeEquation negative_time_equation(const StateDistribution& state, double t,
                                                   const ModelParams& params) {
  const auto& p = state.probs;
  const std::size_t n = state.nmax();
  const double mu = params.mu;
  const double lambda = params.lambda();
  const auto a = expected_positive_parts(n, t, mu);
  const auto tails = erlang_tails(n, -t, mu);

  // births leave states 0..n-1 only (truncated chain)
  double can_grow = 0.0;
  double grow_gain = 0.0;   // sum p_j (a_{j+1} - a_j)
  double serve_gain = 0.0;  // sum p_j (a_{j-1} - a_j), j >= 1
  double drift = 0.0;       // sum p_j P(S_j > -t)
  for (std::size_t j = 0; j < n; ++j) {
    can_grow += p[j];
    grow_gain += p[j] * (a[j + 1] - a[j]);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    serve_gain += p[j] * (a[j - 1] - a[j]);
    drift += p[j] * tails[j];
  }
  NegativeTimeEquation eq;
  eq.slope = lambda * (params.alpha * can_grow / mu + params.beta2 * grow_gain);
  eq.intercept = -params.beta1 - params.alpha * (1.0 - p[0]) +
                 params.beta2 * (mu * serve_gain + drift);
  return eq;
}

/// Arrival density that keeps the cost flat at t < 0.
inline double density_negative_t(const StateDistribution& state, double t, const ModelParams& params) {
  const auto eq = negative_time_equation(state, t, params);
  if (!(eq.slope > 0.0))
    throw SolverError(ErrorCode::NonpositiveCoefficient, "density coefficient <= 0 at t=" + std::to_string(t));
  const double f = -eq.intercept / eq.slope;
  if (f < 0.0)
    throw SolverError(ErrorCode::NegativeDensity, "extracted density " + std::to_string(f) +
                                                      " < 0 at t=" + std::to_string(t));
  return f;
}

/// Arrival density that keeps the cost flat at t >= 0. Negative values
/// mean the support has ended.
inline double density_positive_t(const StateDistribution& state, const ModelParams& params) {
  const double mu = params.mu;
  const double lambda = params.lambda();
  return (1.0 - state.p0()) * mu / lambda -
         params.beta2 * mu / ((params.alpha + params.beta2) * lambda);
}

/// Rate of change of E[N]/mu under a frozen density (truncated chain).
inline double expected_queue_slope(const StateDistribution& state, double f_value, const ModelParams& params) {
  const auto& p = state.probs;
  const double can_grow = state.total() - p.back();
  return (params.lambda() * f_value * can_grow - params.mu * (1.0 - p[0])) / params.mu;
}

}  // namespace arrivalq
