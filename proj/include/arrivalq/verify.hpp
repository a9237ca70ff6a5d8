#pragma once

// Discrete-event Monte Carlo checks: sampling arrival times from a strategy,
// simulating the FIFO queue over a Poisson population, unilateral-deviation
// audits, and the stochastic-vs-fluid comparison.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "arrivalq/equilibrium.hpp"
#include "arrivalq/fluid.hpp"
#include "arrivalq/kolmogorov.hpp"
#include "arrivalq/params.hpp"

namespace arrivalq {

/// Inverse-CDF sampler over atoms plus a step density, normalized to mass 1.
class StrategySampler {
 public:
  explicit StrategySampler(const DensityCurve& curve) {
    for (const auto& a : curve.atoms)
      if (a.mass > 0.0) pieces_.push_back({a.t, a.t, a.mass, true});
    for (std::size_t i = 0; i + 1 < curve.times.size(); ++i) {
      const double m = curve.values[i] * (curve.times[i + 1] - curve.times[i]);
      if (m > 0.0) pieces_.push_back({curve.times[i], curve.times[i + 1], m, false});
    }
    // atoms ahead of density that starts at the same time
    std::stable_sort(pieces_.begin(), pieces_.end(), [](const Piece& a, const Piece& b) {
      return a.lo < b.lo || (a.lo == b.lo && a.atom && !b.atom);
    });
    double c = 0.0;
    for (const auto& p : pieces_) {
      c += p.mass;
      cum_.push_back(c);
    }
    total_ = c;
    if (!(total_ > 0.0)) throw SolverError(ErrorCode::MassMismatch, "strategy has no mass");
  }

  explicit StrategySampler(const FluidSolution& fluid) : StrategySampler(fluid.to_density_curve()) {}

  double total_mass() const { return total_; }

  /// Arrival time at quantile u in [0, 1).
  double quantile(double u) const {
    const double target = u * total_;
    auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
    if (it == cum_.end()) --it;
    const std::size_t k = static_cast<std::size_t>(it - cum_.begin());
    const auto& p = pieces_[k];
    if (p.atom) return p.lo;
    const double before = k == 0 ? 0.0 : cum_[k - 1];
    const double frac = std::clamp((target - before) / p.mass, 0.0, 1.0);
    return p.lo + frac * (p.hi - p.lo);
  }

  template <class Rng>
  double operator()(Rng& rng) const {
    return quantile(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  }

  /// Normalized CDF at t, and its left limit.
  double cdf(double t) const { return mass_upto(t, true) / total_; }
  double cdf_left(double t) const { return mass_upto(t, false) / total_; }

 private:
  struct Piece {
    double lo, hi, mass;
    bool atom;
  };

  double mass_upto(double t, bool inclusive) const {
    double m = 0.0;
    for (const auto& p : pieces_) {
      if (p.atom) {
        if (p.lo < t || (inclusive && p.lo == t)) m += p.mass;
      } else if (t > p.lo) {
        m += p.mass * (std::min(t, p.hi) - p.lo) / (p.hi - p.lo);
      }
    }
    return m;
  }

  std::vector<Piece> pieces_;
  std::vector<double> cum_;
  double total_ = 0.0;
};

/// Kolmogorov-Smirnov distance between samples and the sampler's CDF,
/// honoring atoms through the left limits.
inline double ks_distance(std::vector<double> samples, const StrategySampler& sampler) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const double x = samples[i];
    d = std::max(d, std::fabs(static_cast<double>(i) / n - sampler.cdf_left(x)));
    d = std::max(d, std::fabs(static_cast<double>(j) / n - sampler.cdf(x)));
    i = j;
  }
  return d;
}

struct GridCost {
  double t = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
};

struct SimulationReport {
  std::vector<GridCost> grid_costs;
  double equilibrium_cost_estimate = 0.0;
  double equilibrium_cost_std_error = 0.0;
  double min_deviation_cost = 0.0;
  double epsilon_violation = 0.0;
  double violation_std_error = 0.0;  // of conforming minus the best grid point
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
};

namespace verify_detail {

inline constexpr std::uint64_t kChunk = 4096;

// Independent stream per replication, whatever order replications run in.
inline std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
  return std::mt19937_64(seq);
}

// One realized population: sorted arrivals, service times, departures.
struct Realization {
  std::vector<double> arrival;
  std::vector<double> departure;
  double tie_uniform = 0.0;
};

inline Realization realize(std::mt19937_64& rng, const StrategySampler& sampler, const ModelParams& params) {
  Realization r;
  const auto n = std::poisson_distribution<std::uint64_t>(params.lambda())(rng);
  r.arrival.resize(n);
  for (auto& t : r.arrival) t = sampler(rng);
  std::sort(r.arrival.begin(), r.arrival.end());
  std::exponential_distribution<double> service(params.mu);
  r.departure.resize(n);
  const double open = params.opening_bound() ? -params.t1 : -kInf;
  double free_at = open;
  for (std::size_t i = 0; i < n; ++i) {
    const double entry = std::max(r.arrival[i], free_at);
    // work conservation: the server only waits when nobody is queued
    assert(entry == r.arrival[i] || entry == free_at);
    r.departure[i] = entry + service(rng);
    free_at = r.departure[i];
  }
  r.tie_uniform = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return r;
}

inline double realized_cost(double t, double entry, const ModelParams& p) {
  return p.beta1 * std::max(-t, 0.0) + p.alpha * (entry - t) + p.beta2 * std::max(entry, 0.0);
}

// Cost of one extra customer arriving at t into the realized population.
inline double deviator_cost(double t, const Realization& r, const ModelParams& p) {
  const auto lo = std::lower_bound(r.arrival.begin(), r.arrival.end(), t);
  const auto hi = std::upper_bound(lo, r.arrival.end(), t);
  // inside an atom the deviator's place is uniform among the ties
  const auto ties = static_cast<std::size_t>(hi - lo);
  const auto ahead = static_cast<std::size_t>(lo - r.arrival.begin()) +
                     std::min(ties, static_cast<std::size_t>(r.tie_uniform * static_cast<double>(ties + 1)));
  double entry = t;
  if (p.opening_bound()) entry = std::max(entry, -p.t1);
  if (ahead > 0) entry = std::max(entry, r.departure[ahead - 1]);
  return realized_cost(t, entry, p);
}

struct Moments {
  double n = 0.0, sx = 0.0, sxx = 0.0;
  void add(double x) {
    n += 1.0;
    sx += x;
    sxx += x * x;
  }
  void merge(const Moments& o) {
    n += o.n;
    sx += o.sx;
    sxx += o.sxx;
  }
  double mean() const { return n > 0.0 ? sx / n : 0.0; }
  double std_error() const {
    if (n < 2.0) return 0.0;
    const double var = std::max(0.0, (sxx - sx * sx / n) / (n - 1.0));
    return std::sqrt(var / n);
  }
};

// Per-replication (total cost, customers) pairs for a ratio estimate.
struct RatioMoments {
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  void add(double x, double y) {
    n += 1.0;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  void merge(const RatioMoments& o) {
    n += o.n;
    sx += o.sx;
    sy += o.sy;
    sxx += o.sxx;
    syy += o.syy;
    sxy += o.sxy;
  }
  double ratio() const { return sy > 0.0 ? sx / sy : 0.0; }
  // delta method
  double std_error() const {
    if (n < 2.0 || sy <= 0.0) return 0.0;
    const double r = ratio();
    const double ybar = sy / n;
    const double resid = sxx - 2.0 * r * sxy + r * r * syy;
    return std::sqrt(std::max(0.0, resid / (n - 1.0)) / n) / ybar;
  }
};

inline unsigned worker_count(std::uint64_t chunks) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::uint64_t>(hw, std::max<std::uint64_t>(chunks, 1)));
}

// Runs body(chunk_index, first_rep, end_rep) over fixed chunks; callers merge
// chunk results in index order so thread scheduling cannot change sums.
template <class Body>
void for_each_chunk(std::uint64_t reps, Body&& body) {
  const std::uint64_t chunks = (reps + kChunk - 1) / kChunk;
  const unsigned workers = worker_count(chunks);
  auto work = [&](unsigned w) {
    for (std::uint64_t c = w; c < chunks; c += workers) body(c, c * kChunk, std::min(reps, (c + 1) * kChunk));
  };
  if (workers == 1) {
    work(0);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  for (auto& th : pool) th.join();
}

inline void check_mass(double mass, const SolverConfig& cfg) {
  if (std::fabs(mass - 1.0) > cfg.epsilon)
    throw SolverError(ErrorCode::MassMismatch, "strategy mass " + std::to_string(mass) + " is not 1");
}

}  // namespace verify_detail

/// Mean cost of a typical customer when everyone plays the strategy.
inline SimulationReport simulate_population(const DensityCurve& strategy, const ModelParams& params,
                                            const SolverConfig& cfg) {
  using namespace verify_detail;
  params.validate();
  cfg.validate();
  check_mass(strategy.total_mass(), cfg);
  const StrategySampler sampler(strategy);
  const std::uint64_t chunks = (cfg.mc_reps + kChunk - 1) / kChunk;
  std::vector<RatioMoments> parts(chunks);
  for_each_chunk(cfg.mc_reps, [&](std::uint64_t c, std::uint64_t first, std::uint64_t end) {
    RatioMoments m;
    for (std::uint64_t rep = first; rep < end; ++rep) {
      auto rng = replication_rng(cfg.seed, rep);
      const auto r = realize(rng, sampler, params);
      double total = 0.0;
      double free_at = params.opening_bound() ? -params.t1 : -kInf;
      for (std::size_t i = 0; i < r.arrival.size(); ++i) {
        const double entry = std::max(r.arrival[i], free_at);
        total += realized_cost(r.arrival[i], entry, params);
        free_at = r.departure[i];
      }
      m.add(total, static_cast<double>(r.arrival.size()));
    }
    parts[c] = m;
  });
  RatioMoments all;
  for (const auto& m : parts) all.merge(m);
  SimulationReport rep;
  rep.equilibrium_cost_estimate = all.ratio();
  rep.equilibrium_cost_std_error = all.std_error();
  rep.min_deviation_cost = rep.equilibrium_cost_estimate;
  rep.reps = cfg.mc_reps;
  rep.seed = cfg.seed;
  return rep;
}

inline SimulationReport simulate_population(const FluidSolution& strategy, const ModelParams& params,
                                            const SolverConfig& cfg) {
  return simulate_population(strategy.to_density_curve(), params, cfg);
}

/// Cost of one extra customer at each grid time against everyone else
/// playing the strategy, with the same populations and services reused
/// across grid points. The conforming cost uses stratified draws from the
/// strategy on the same populations.
inline SimulationReport best_response_audit(const DensityCurve& strategy, const ModelParams& params,
                                            const SolverConfig& cfg, std::vector<double> grid) {
  using namespace verify_detail;
  params.validate();
  cfg.validate();
  check_mass(strategy.total_mass(), cfg);
  if (params.opening_bound())
    grid.erase(std::remove_if(grid.begin(), grid.end(), [&](double t) { return t < -params.t1; }), grid.end());
  if (params.closing_bound())
    grid.erase(std::remove_if(grid.begin(), grid.end(), [&](double t) { return t > params.t2; }), grid.end());
  if (grid.empty()) throw SolverError(ErrorCode::ConfigInvalid, "audit grid is empty");

  const StrategySampler sampler(strategy);
  constexpr int kStrata = 16;
  const std::size_t g = grid.size();
  struct Part {
    std::vector<Moments> point;
    std::vector<Moments> gain;  // conforming minus grid point, same replication
    Moments conforming;
  };
  const std::uint64_t chunks = (cfg.mc_reps + kChunk - 1) / kChunk;
  std::vector<Part> parts(chunks);
  for_each_chunk(cfg.mc_reps, [&](std::uint64_t c, std::uint64_t first, std::uint64_t end) {
    Part part{std::vector<Moments>(g), std::vector<Moments>(g), {}};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::uint64_t rep = first; rep < end; ++rep) {
      auto rng = replication_rng(cfg.seed, rep);
      const auto r = realize(rng, sampler, params);
      double conform = 0.0;
      for (int k = 0; k < kStrata; ++k)
        conform += deviator_cost(sampler.quantile((k + unit(rng)) / kStrata), r, params);
      conform /= kStrata;
      part.conforming.add(conform);
      for (std::size_t i = 0; i < g; ++i) {
        const double cost = deviator_cost(grid[i], r, params);
        part.point[i].add(cost);
        part.gain[i].add(conform - cost);
      }
    }
    parts[c] = std::move(part);
  });

  std::vector<Moments> point(g), gain(g);
  Moments conforming;
  for (const auto& part : parts) {
    conforming.merge(part.conforming);
    for (std::size_t i = 0; i < g; ++i) {
      point[i].merge(part.point[i]);
      gain[i].merge(part.gain[i]);
    }
  }
  SimulationReport rep;
  rep.reps = cfg.mc_reps;
  rep.seed = cfg.seed;
  rep.equilibrium_cost_estimate = conforming.mean();
  rep.equilibrium_cost_std_error = conforming.std_error();
  std::size_t best = 0;
  for (std::size_t i = 0; i < g; ++i) {
    rep.grid_costs.push_back({grid[i], point[i].mean(), point[i].std_error()});
    if (point[i].mean() < point[best].mean()) best = i;
  }
  rep.min_deviation_cost = point[best].mean();
  rep.epsilon_violation = std::max(rep.equilibrium_cost_estimate - rep.min_deviation_cost, 0.0);
  rep.violation_std_error = gain[best].std_error();
  return rep;
}

inline SimulationReport best_response_audit(const FluidSolution& strategy, const ModelParams& params,
                                            const SolverConfig& cfg, std::vector<double> grid) {
  return best_response_audit(strategy.to_density_curve(), params, cfg, std::move(grid));
}

/// Evenly spaced deviation times over the support widened by margin.
inline std::vector<double> audit_grid(double begin, double end, double margin, std::size_t points) {
  std::vector<double> grid;
  const double lo = begin - margin, hi = end + margin;
  if (points < 2) return {0.5 * (lo + hi)};
  for (std::size_t i = 0; i < points; ++i)
    grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  return grid;
}

struct FluidComparison {
  double stochastic_te1 = 0.0;
  double fluid_te1 = 0.0;
  bool te1_larger = true;
  std::optional<double> stochastic_atom;
  std::optional<double> fluid_atom;
  bool atom_larger = true;
  std::string stochastic_case;
  std::string fluid_case;
  std::vector<std::string> flags;
};

/// Solves both models at matched population size and compares the earliest
/// arrival time and, when both have one, the opening atom.
inline FluidComparison fluid_stochastic_diagnostic(const ModelParams& params, const SolverConfig& cfg) {
  const auto stoch = solve_equilibrium(params, cfg);
  ModelParams fp = params;
  fp.kind = ModelKind::Fluid;
  const auto fl = fluid_equilibrium(fp);
  FluidComparison out;
  out.stochastic_case = std::string(to_string(stoch.case_label));
  out.fluid_case = std::string(to_string(fl.case_label));
  out.stochastic_te1 = stoch.te1;
  out.fluid_te1 = -fl.support_begin();
  out.te1_larger = out.stochastic_te1 >= out.fluid_te1;
  if (!out.te1_larger)
    out.flags.emplace_back("stochastic earliest arrival " + std::to_string(out.stochastic_te1) +
                           " is not beyond the fluid one " + std::to_string(out.fluid_te1));
  double fluid_atom = 0.0;
  for (const auto& a : fl.atoms)
    if (params.opening_bound() && a.t == -params.t1) fluid_atom += a.mass;
  if (stoch.atom_mass > 0.0 && fluid_atom > 0.0) {
    out.stochastic_atom = stoch.atom_mass;
    out.fluid_atom = fluid_atom;
    out.atom_larger = stoch.atom_mass >= fluid_atom;
    if (!out.atom_larger)
      out.flags.emplace_back("stochastic atom " + std::to_string(stoch.atom_mass) +
                             " is not larger than the fluid atom " + std::to_string(fluid_atom));
  }
  return out;
}

}  // namespace arrivalq
