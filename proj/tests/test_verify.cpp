#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "arrivalq/verify.hpp"

using namespace arrivalq;

namespace {

DensityCurve single_atom(double t) {
  DensityCurve c;
  c.atoms = {{t, 1.0}};
  return c;
}

SolverConfig reps(std::uint64_t n, std::uint64_t seed = 99) {
  SolverConfig cfg;
  cfg.mc_reps = n;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Sampler, KolmogorovSmirnovOnSteps) {
  const auto fluid = fluid_equilibrium(ModelParams::fluid(10.0, 1.0, 1.0, 1.0, 1.0));
  const StrategySampler sampler(fluid);
  std::mt19937_64 rng(1);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = sampler(rng);
  EXPECT_LE(ks_distance(xs, sampler), 1.63 / std::sqrt(1e5));
  EXPECT_NEAR(sampler.cdf(-2.5), 0.5, 1e-12);
  EXPECT_NEAR(sampler.cdf(0.0), 0.75, 1e-12);
}

TEST(Sampler, KolmogorovSmirnovWithAtom) {
  const auto fluid = fluid_equilibrium(ModelParams::fluid(10.0, 1.0, 0.1, 1.0, 1.0, 4.9));
  ASSERT_EQ(fluid.atoms.size(), 1u);
  const StrategySampler sampler(fluid);
  EXPECT_NEAR(sampler.cdf(-4.9) - sampler.cdf_left(-4.9), fluid.atoms[0].mass, 1e-12);
  std::mt19937_64 rng(2);
  std::vector<double> xs(100000);
  int at_atom = 0;
  for (auto& x : xs) at_atom += (x = sampler(rng)) == -4.9;
  EXPECT_LE(ks_distance(xs, sampler), 1.63 / std::sqrt(1e5));
  EXPECT_NEAR(at_atom / 1e5, fluid.atoms[0].mass, 5.0 * std::sqrt(0.25 / 1e5));
}

TEST(Sampler, KsDetectsWrongLaw) {
  const auto fluid = fluid_equilibrium(ModelParams::fluid(10.0, 1.0, 1.0, 1.0, 1.0));
  const StrategySampler sampler(fluid);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> flat(-5.0, 5.0);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = flat(rng);
  EXPECT_GT(ks_distance(xs, sampler), 0.1);
}

TEST(Simulation, Reproducible) {
  const auto curve = fluid_equilibrium(ModelParams::fluid(5.0, 1.0, 1.0, 1.0, 1.0)).to_density_curve();
  const auto p = ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0);
  const auto a = simulate_population(curve, p, reps(20000, 4));
  const auto b = simulate_population(curve, p, reps(20000, 4));
  EXPECT_EQ(a.equilibrium_cost_estimate, b.equilibrium_cost_estimate);
  EXPECT_EQ(a.equilibrium_cost_std_error, b.equilibrium_cost_std_error);
  EXPECT_EQ(a.reps, 20000u);
  const auto c = simulate_population(curve, p, reps(20000, 5));
  EXPECT_NE(a.equilibrium_cost_estimate, c.equilibrium_cost_estimate);

  const auto grid = audit_grid(-3.0, 3.0, 0.5, 9);
  const auto x = best_response_audit(curve, p, reps(9000, 4), grid);
  const auto y = best_response_audit(curve, p, reps(9000, 4), grid);
  ASSERT_EQ(x.grid_costs.size(), y.grid_costs.size());
  for (std::size_t i = 0; i < x.grid_costs.size(); ++i) EXPECT_EQ(x.grid_costs[i].mean, y.grid_costs[i].mean);
  EXPECT_EQ(x.epsilon_violation, y.epsilon_violation);
}

// The pure opening atom has an exact expected cost to compare against.
TEST(Simulation, OpeningAtomUnbiased) {
  const auto p = ModelParams::stochastic(4.0, 1.0, 1.0, 1.0, 1.0, 2.0);
  const double exact = g2(1.0, p, 1e-14);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = simulate_population(single_atom(-2.0), p, reps(5000, seed));
    if (std::fabs(r.equilibrium_cost_estimate - exact) <= 3.0 * r.equilibrium_cost_std_error) ++inside;
    EXPECT_GT(r.equilibrium_cost_std_error, 0.0);
  }
  EXPECT_GE(inside, 19);
}

TEST(Simulation, LoneArrivalPaysNothing) {
  const auto p = ModelParams::stochastic(1e-4, 1.0, 1.0, 1.0, 1.0);
  const auto r = simulate_population(single_atom(0.0), p, reps(20000));
  EXPECT_LT(r.equilibrium_cost_estimate, 1e-2);
  EXPECT_TRUE(std::isfinite(r.equilibrium_cost_std_error));
}

TEST(Simulation, RejectsWrongMass) {
  DensityCurve half;
  half.atoms = {{0.0, 0.5}};
  const auto p = ModelParams::stochastic(3.0, 1.0, 1.0, 1.0, 1.0);
  try {
    simulate_population(half, p, reps(10));
    FAIL() << "half-mass strategy accepted";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MassMismatch);
  }
  EXPECT_THROW(best_response_audit(half, p, reps(10), {0.0}), SolverError);
}

TEST(Deviator, TiesShareTheQueueUniformly) {
  verify_detail::Realization r;
  r.arrival = {0.0, 0.0, 0.0};
  r.departure = {1.0, 2.0, 3.0};
  const auto p = ModelParams::stochastic(3.0, 1.0, 1.0, 1.0, 1.0);
  r.tie_uniform = 0.1;
  EXPECT_EQ(verify_detail::deviator_cost(0.0, r, p), 0.0);  // first in line
  r.tie_uniform = 0.99;
  EXPECT_EQ(verify_detail::deviator_cost(0.0, r, p), 3.0 + 3.0);  // behind all three
  r.tie_uniform = 0.6;
  EXPECT_EQ(verify_detail::deviator_cost(0.0, r, p), 2.0 + 2.0);
  // just before the batch: no wait, no tardiness
  EXPECT_NEAR(verify_detail::deviator_cost(-1e-3, r, p), 1e-3, 1e-15);
}

TEST(Audit, UndercuttingAnAtomPays) {
  const auto p = ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0);
  const auto r = best_response_audit(single_atom(0.0), p, reps(20000), {-0.05, 0.0});
  ASSERT_EQ(r.grid_costs.size(), 2u);
  EXPECT_LT(r.grid_costs[0].mean + 5.0 * r.grid_costs[0].std_error, r.grid_costs[1].mean);
  EXPECT_GT(r.epsilon_violation, 5.0 * r.violation_std_error);
  EXPECT_EQ(r.min_deviation_cost, r.grid_costs[0].mean);
}

// The fluid social optimum is no equilibrium once the queue is random.
TEST(Audit, SocialOptimumIsNotStable) {
  const auto fp = ModelParams::fluid(5.0, 1.0, 1.0, 1.0, 1.0);
  const auto opt = fluid_social_optimum(fp);
  const auto p = ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0);
  const auto r = best_response_audit(opt, p, reps(20000), audit_grid(-2.5, 2.5, 0.5, 31));
  EXPECT_GT(r.epsilon_violation, 0.0);
  EXPECT_GT(r.epsilon_violation, 3.0 * r.violation_std_error);
}

TEST(Audit, GridClippedToWindow) {
  const auto p = ModelParams::stochastic(3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
  const auto r = best_response_audit(single_atom(-1.0), p, reps(100), audit_grid(-1.0, 1.0, 0.5, 9));
  for (const auto& g : r.grid_costs) {
    EXPECT_GE(g.t, -1.0);
    EXPECT_LE(g.t, 1.0);
  }
  EXPECT_EQ(r.grid_costs.size(), 5u);
}

TEST(Diagnostic, StochasticStartsEarlier) {
  SolverConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.nmax_tail_prob = 1e-6;
  const auto d = fluid_stochastic_diagnostic(ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0), cfg);
  EXPECT_DOUBLE_EQ(d.fluid_te1, 2.5);
  EXPECT_GE(d.stochastic_te1, d.fluid_te1);
  EXPECT_TRUE(d.te1_larger);
  EXPECT_TRUE(d.flags.empty());

  const auto tiny = fluid_stochastic_diagnostic(ModelParams::stochastic(1e-3, 1.0, 1.0, 1.0, 1.0), cfg);
  EXPECT_LT(tiny.fluid_te1, 1e-3);
  EXPECT_LT(tiny.stochastic_te1, 1e-2);
}
