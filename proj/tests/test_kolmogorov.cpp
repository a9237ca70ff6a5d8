#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "arrivalq/equilibrium.hpp"
#include "arrivalq/kolmogorov.hpp"

using namespace arrivalq;

namespace {

// Transient law of the truncated birth-death chain by uniformization.
std::vector<double> uniformized(const std::vector<double>& p0, double birth, double death, double horizon) {
  const std::size_t n = p0.size();
  std::vector<std::vector<double>> q(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n) q[i][i + 1] = birth;
    if (i > 0) q[i][i - 1] = death;
    double out = 0.0;
    for (std::size_t j = 0; j < n; ++j) out += q[i][j];
    q[i][i] = -out;
  }
  const double rate = birth + death;
  std::vector<double> v = p0, result(n, 0.0);
  double weight = std::exp(-rate * horizon);
  for (int k = 0; k < 400; ++k) {
    for (std::size_t i = 0; i < n; ++i) result[i] += weight * v[i];
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += v[i] * ((i == j ? 1.0 : 0.0) + q[i][j] / rate);
    v = next;
    weight *= rate * horizon / (k + 1);
  }
  return result;
}

StateDistribution march_to(StateDistribution s, double f, double t_end, double dt, const ModelParams& p) {
  while (s.t < t_end - 1e-12) s = step_state(s, f, std::min(dt, t_end - s.t), p);
  return s;
}

}  // namespace

TEST(StepState, EmptySystemWithoutArrivals) {
  auto p = ModelParams::stochastic(3.0, 1.0, 1.0, 1.0, 1.0);
  const auto s = step_state(StateDistribution::empty(8), 0.0, 0.7, p);
  EXPECT_EQ(s.probs[0], 1.0);
  for (std::size_t k = 1; k < s.probs.size(); ++k) EXPECT_EQ(s.probs[k], 0.0);
}

TEST(StepState, ConservesMass) {
  auto p = ModelParams::stochastic(6.0, 1.3, 1.0, 1.0, 1.0);
  auto s = StateDistribution::point(3, 15);
  for (int i = 0; i < 2000; ++i) {
    const double before = s.total();
    s = step_state(s, 0.4 + 0.3 * std::sin(i * 0.01), 0.004, p);
    EXPECT_NEAR(s.total(), before, 1e-12);
  }
  EXPECT_NEAR(s.total(), 1.0, 1e-9);
}

TEST(StepState, MatchesUniformization) {
  auto p = ModelParams::stochastic(1.0, 1.0, 1.0, 1.0, 1.0);
  const auto start = StateDistribution::empty(19);
  const auto s = march_to(start, 1.0, 1.0, 1e-3, p);
  const auto ref = uniformized(start.probs, 1.0, 1.0, 1.0);
  for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(s.probs[k], ref[k], 1e-8) << "k=" << k;

  const auto busy = StateDistribution::point(4, 19);
  const auto s2 = march_to(busy, 2.5, 1.0, 1e-3, ModelParams::stochastic(1.0, 1.7, 1.0, 1.0, 1.0));
  const auto ref2 = uniformized(busy.probs, 2.5, 1.7, 1.0);
  for (std::size_t k = 0; k < ref2.size(); ++k) EXPECT_NEAR(s2.probs[k], ref2[k], 1e-8) << "k=" << k;
}

TEST(StepState, RejectsOversizedStep) {
  auto p = ModelParams::stochastic(50.0, 5.0, 1.0, 1.0, 1.0);
  EXPECT_THROW(
      {
        try {
          step_state(StateDistribution::point(5, 20), 1.0, 2.0, p);
        } catch (const SolverError& e) {
          EXPECT_EQ(e.code(), ErrorCode::NegativeProbability);
          throw;
        }
      },
      SolverError);
}

TEST(ExpectedQueue, Examples) {
  EXPECT_EQ(expected_queue(StateDistribution::empty(4), 1.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_queue(StateDistribution::point(5, 8), 2.0), 2.5);
  StateDistribution pois;
  pois.probs = truncated_poisson(2.0, 1e-12);
  EXPECT_NEAR(expected_queue(pois, 1.0), 2.0, 1e-9);
}

TEST(NegativeTimeDensity, EmptySystem) {
  auto p = ModelParams::stochastic(10.0, 1.0, 1.0, 1.0, 1.0);
  const auto empty = StateDistribution::empty(30);
  EXPECT_NEAR(density_negative_t(empty, -3.0, p), 1.0 / (10.0 * (1.0 + std::exp(-3.0))), 1e-14);
  for (double t : {-8.0, -1.0, -0.2}) {
    const double mu = 1.0;
    EXPECT_NEAR(density_negative_t(empty, t, p), p.beta1 * mu / (p.lambda() * (p.alpha + p.beta2 * std::exp(mu * t))),
                1e-14);
    const auto eq = negative_time_equation(empty, t, p);
    EXPECT_NEAR(eq.slope, p.lambda() * (p.alpha + p.beta2 * std::exp(t)) / mu, 1e-12);
  }
}

TEST(NegativeTimeDensity, FullSystemHasNoCoefficient) {
  auto p = ModelParams::stochastic(10.0, 1.0, 1.0, 1.0, 1.0);
  EXPECT_THROW(
      {
        try {
          density_negative_t(StateDistribution::point(6, 6), -1.0, p);
        } catch (const SolverError& e) {
          EXPECT_EQ(e.code(), ErrorCode::NonpositiveCoefficient);
          throw;
        }
      },
      SolverError);
}

// Service and Erlang-drift terms cancel term by term, so before 0 the
// intercept is just earliness plus the waiting drain and f stays positive.
TEST(NegativeTimeDensity, InterceptIdentity) {
  auto p = ModelParams::stochastic(4.0, 1.3, 0.7, 0.4, 1.9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    StateDistribution s;
    s.probs.resize(12);
    double total = 0.0;
    for (auto& v : s.probs) total += (v = unit(rng));
    for (auto& v : s.probs) v /= total;
    const double t = -6.0 * unit(rng);
    const auto eq = negative_time_equation(s, t, p);
    EXPECT_NEAR(eq.intercept, -p.beta1 - p.alpha * (1.0 - s.p0()), 1e-12);
    EXPECT_GT(density_negative_t(s, t, p), 0.0);
  }
}

TEST(PositiveTimeDensity, Examples) {
  auto p = ModelParams::stochastic(1.0, 1.0, 1.0, 1.0, 1.0);
  StateDistribution s;
  s.probs = {0.5, 0.5, 0.0};
  EXPECT_NEAR(density_positive_t(s, p), 0.0, 1e-15);
  s.probs = {0.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(density_positive_t(s, p), 0.5);
  auto q = ModelParams::stochastic(3.0, 2.0, 1.0, 1.0, 2.0);
  EXPECT_DOUBLE_EQ(density_positive_t(StateDistribution::empty(4), q), -2.0 * 2.0 / (3.0 * 3.0));
}

// Marching with the extracted density must keep the recomputed cost flat.
TEST(ExtractedDensity, KeepsCostFlat) {
  auto p = ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0);
  const std::size_t nmax = nmax_for(p, SolverConfig{1e-3, 0.0, 1e-6});
  StateDistribution s = StateDistribution::empty(nmax, -3.0);
  const double dt = 1e-3;
  const double c0 = cost_at(s.t, s, expected_queue(s, p.mu), p);
  double worst = 0.0;
  while (s.t < -1e-12) {
    const double f = density_negative_t(s, s.t, p);
    const double t = s.t;
    s = step_state(s, f, dt, p);
    s.t = t + dt;
    if (s.t < 0.0) worst = std::max(worst, std::fabs(cost_at(s.t, s, expected_queue(s, p.mu), p) - c0));
  }
  s.t = 0.0;
  EXPECT_LT(worst, 1e-4 * c0);
  const double c_zero = cost_at(0.0, s, expected_queue(s, p.mu), p);
  EXPECT_NEAR(c_zero, c0, 1e-4 * c0);
  // past 0 the other extraction takes over
  worst = 0.0;
  int positive = 0;
  for (; positive < 1000; ++positive) {
    const double f = density_positive_t(s, p);
    if (f <= 0.0) break;
    const double t = s.t;
    s = step_state(s, f, dt, p);
    s.t = t + dt;
    worst = std::max(worst, std::fabs(cost_at(s.t, s, expected_queue(s, p.mu), p) - c0));
  }
  EXPECT_GT(positive, 200);
  // first order in dt after 0, where the density varies faster
  EXPECT_LT(worst, 1e-3 * c0);
}

// On a solved path the queue's drift just before 0 is
// (beta1 - beta2 * P(busy at 0)) / (alpha + beta2), and -beta2/(alpha+beta2) after.
TEST(ExtractedDensity, WorkloadSlopesAroundZero) {
  auto p = ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0);
  SolverConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.nmax_tail_prob = 1e-6;
  const auto sol = solve_unconstrained(p, cfg);
  const auto& times = sol.strategy.times;
  std::size_t zero = 0;
  while (times[zero] != 0.0) ++zero;
  const auto& s0 = sol.path[zero];
  const Jump* jump = nullptr;
  for (const auto& j : sol.strategy.jumps)
    if (j.t == 0.0) jump = &j;
  ASSERT_NE(jump, nullptr);
  const double left = expected_queue_slope(s0, jump->left, p);
  const double right = expected_queue_slope(s0, jump->right, p);
  const double busy = 1.0 - s0.p0();
  EXPECT_NEAR(left, (p.beta1 - p.beta2 * busy) / (p.alpha + p.beta2), 1e-3);
  EXPECT_NEAR(right, -p.beta2 / (p.alpha + p.beta2), 1e-3);
  EXPECT_GT(std::fabs(jump->left - jump->right), 0.0);

  // the same slopes by finite differences of E[N]/mu along the path
  const double h_left = times[zero] - times[zero - 1];
  const double fd_left = (expected_queue(s0, p.mu) - expected_queue(sol.path[zero - 1], p.mu)) / h_left;
  const double fd_right =
      (expected_queue(sol.path[zero + 1], p.mu) - expected_queue(s0, p.mu)) / (times[zero + 1] - times[zero]);
  EXPECT_NEAR(fd_left, left, 5e-3);
  EXPECT_NEAR(fd_right, right, 5e-3);
}
