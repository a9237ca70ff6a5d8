#pragma once

// Cost functionals of the stochastic arrival game: Erlang tails, the
// expected positive part of a shifted Erlang sum, the per-arrival-time
// cost, and the opening-atom costs g1/g2.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "arrivalq/params.hpp"
#include "arrivalq/state.hpp"

namespace arrivalq {

/// Smallest n with P(Poisson(mean) > n) <= tail.
inline std::size_t poisson_truncation(double mean, double tail) {
  if (mean <= 0.0) return 0;
  // log-domain recurrence keeps exp(-mean) from underflowing for large means
  double log_term = -mean;
  double cdf = std::exp(log_term);
  std::size_t n = 0;
  const double log_mean = std::log(mean);
  // 1 - cdf cannot resolve tails below rounding; past the mode the terms
  // decay geometrically, so a negligible term also ends the scan
  while (1.0 - cdf > tail) {
    ++n;
    log_term += log_mean - std::log(static_cast<double>(n));
    const double term = std::exp(log_term);
    cdf += term;
    if (static_cast<double>(n) > mean && term < 1e-3 * tail) break;
  }
  return n;
}

/// Poisson pmf at 0..n.
inline std::vector<double> poisson_pmf(double mean, std::size_t n) {
  std::vector<double> pmf(n + 1, 0.0);
  if (mean <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  double log_term = -mean;
  const double log_mean = std::log(mean);
  pmf[0] = std::exp(log_term);
  for (std::size_t k = 1; k <= n; ++k) {
    log_term += log_mean - std::log(static_cast<double>(k));
    pmf[k] = std::exp(log_term);
  }
  return pmf;
}

/// Poisson pmf truncated at the 1 - tail quantile and renormalized.
inline std::vector<double> truncated_poisson(double mean, double tail) {
  auto pmf = poisson_pmf(mean, poisson_truncation(mean, tail));
  const double mass = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  for (double& v : pmf) v /= mass;
  return pmf;
}

/// P(S_k > x) for S_k ~ Erlang(k, mu), for every k in 0..kmax.
inline std::vector<double> erlang_tails(std::size_t kmax, double x, double mu) {
  std::vector<double> tails(kmax + 1, 0.0);
  if (kmax == 0) return tails;
  const double z = mu * std::max(x, 0.0);
  if (z == 0.0) {
    std::fill(tails.begin() + 1, tails.end(), 1.0);
    return tails;
  }
  const double log_z = std::log(z);
  double log_term = -z;  // log of e^{-z} z^m / m!
  double sum = 0.0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    sum += std::exp(log_term);
    tails[k] = std::min(sum, 1.0);
    log_term += log_z - std::log(static_cast<double>(k));
  }
  return tails;
}

inline double erlang_tail(std::size_t k, double x, double mu) {
  assert(x >= 0.0 && mu > 0.0);
  if (k == 0) return 0.0;
  return erlang_tails(k, x, mu)[k];
}

/// a_j(t) = E[(S_j + t)^+] for j in 0..jmax.
///
/// For t < 0 this is the integral of the Erlang survival function over
/// (-t, inf), which collapses to (1/mu) * sum_{k=1..j} P(S_k > -t).
inline std::vector<double> expected_positive_parts(std::size_t jmax, double t, double mu) {
  std::vector<double> a(jmax + 1, 0.0);
  if (t >= 0.0) {
    for (std::size_t j = 0; j <= jmax; ++j) a[j] = static_cast<double>(j) / mu + t;
    return a;
  }
  const auto tails = erlang_tails(jmax, -t, mu);
  for (std::size_t j = 1; j <= jmax; ++j) a[j] = a[j - 1] + tails[j] / mu;
  return a;
}

inline double expected_positive_part(std::size_t j, double t, double mu) {
  return expected_positive_parts(j, t, mu)[j];
}

/// Expected cost of arriving at t given the queue-length law at t and the
/// matching expected wait w = E[N]/mu.
inline double cost_at(double t, const StateDistribution& state, double w, const ModelParams& params) {
  if (t >= 0.0) return (params.alpha + params.beta2) * w + params.beta2 * t;
  const auto a = expected_positive_parts(state.nmax(), t, params.mu);
  double tardy = 0.0;
  for (std::size_t j = 1; j < state.probs.size(); ++j) tardy += state.probs[j] * a[j];
  return -t * params.beta1 + params.alpha * w + params.beta2 * tardy;
}

/// Cost of arriving at t > -t1 when Poisson(lambda*p) customers arrived at
/// -t1 and nobody arrived in between.
inline double g1(double t, double p, const ModelParams& params, double tail = 1e-2) {
  assert(std::isfinite(params.t1) && t > -params.t1);
  const auto pmf = truncated_poisson(params.lambda() * p, tail);
  const std::size_t n = pmf.size() - 1;
  // wait = (S_N - t1 - t)^+, tardiness for t<0 is (S_N - t1)^+
  const auto wait = expected_positive_parts(n, -(params.t1 + t), params.mu);
  double ewait = 0.0;
  for (std::size_t i = 1; i <= n; ++i) ewait += pmf[i] * wait[i];
  if (t >= 0.0) return params.beta2 * t + (params.alpha + params.beta2) * ewait;
  const auto late = expected_positive_parts(n, -params.t1, params.mu);
  double elate = 0.0;
  for (std::size_t i = 1; i <= n; ++i) elate += pmf[i] * late[i];
  return -params.beta1 * t + params.alpha * ewait + params.beta2 * elate;
}

/// Cost of joining the opening atom: Poisson(lambda*p) others, uniform rank
/// among all i+1 customers at -t1.
inline double g2(double p, const ModelParams& params, double tail = 1e-2) {
  assert(std::isfinite(params.t1));
  const auto pmf = truncated_poisson(params.lambda() * p, tail);
  const std::size_t n = pmf.size() - 1;
  const auto a = expected_positive_parts(n, -params.t1, params.mu);
  double late = 0.0;
  double prefix = 0.0;  // sum_{r=0..i} a_r
  for (std::size_t i = 1; i <= n; ++i) {
    prefix += a[i];
    late += pmf[i] * prefix / static_cast<double>(i + 1);
  }
  return params.beta1 * params.t1 + params.alpha * params.lambda() * p / (2.0 * params.mu) +
         params.beta2 * late;
}

}  // namespace arrivalq
