#include <cmath>
#include <random>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "arrivalq/core_model.hpp"

using namespace arrivalq;

namespace {

// E[(S_j + t)^+] straight from the Erlang density.
double positive_part_by_quadrature(std::size_t j, double t, double mu) {
  if (j == 0) return std::max(t, 0.0);
  boost::math::gamma_distribution<double> erlang(static_cast<double>(j), 1.0 / mu);
  boost::math::quadrature::exp_sinh<double> integrator;
  auto integrand = [&](double u) { return u * boost::math::pdf(erlang, u - t); };
  // substitute u = s + t >= 0, s >= -t
  return integrator.integrate(integrand, std::max(0.0, t), kInf);
}

}  // namespace

TEST(ErlangTail, SmallCases) {
  EXPECT_EQ(erlang_tail(0, 1.0, 1.0), 0.0);
  EXPECT_EQ(erlang_tail(1, 0.0, 1.0), 1.0);
  EXPECT_NEAR(erlang_tail(2, 1.0, 1.0), 2.0 / std::exp(1.0), 1e-15);
}

TEST(ErlangTail, MatchesIncompleteGamma) {
  for (std::size_t k = 1; k <= 50; ++k)
    for (double z : {0.01, 0.5, 1.0, 3.0, 10.0, 25.0, 49.0, 50.0}) {
      const double mu = 0.7;
      const double ref = boost::math::gamma_q(static_cast<double>(k), z);
      EXPECT_NEAR(erlang_tail(k, z / mu, mu), ref, 1e-10) << "k=" << k << " z=" << z;
    }
}

TEST(ErlangTail, MatchesDensityQuadrature) {
  boost::math::quadrature::exp_sinh<double> integrator;
  for (std::size_t k : {1, 2, 5, 20}) {
    boost::math::gamma_distribution<double> erlang(static_cast<double>(k), 1.0);
    for (double x : {0.3, 2.0, 7.5}) {
      const double ref = integrator.integrate([&](double s) { return boost::math::pdf(erlang, s); }, x, kInf);
      EXPECT_NEAR(erlang_tail(k, x, 1.0), ref, 1e-10);
    }
  }
}

TEST(ErlangTail, LargeArgumentsStayFinite) {
  const auto tails = erlang_tails(400, 250.0, 1.0);
  for (double v : tails) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NEAR(tails[250], boost::math::gamma_q(250.0, 250.0), 1e-10);
}

TEST(PositivePart, Examples) {
  EXPECT_EQ(expected_positive_part(0, -2.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_positive_part(3, 0.0, 2.0), 1.5);
  EXPECT_NEAR(expected_positive_part(1, -1.0, 1.0), std::exp(-1.0), 1e-15);
}

TEST(PositivePart, MatchesQuadrature) {
  for (double mu : {0.3, 1.0, 2.5})
    for (std::size_t j : {1, 2, 4, 9, 30})
      for (double t : {-12.0, -3.0, -0.7, -0.01, 0.0, 0.4, 3.0}) {
        const double ref = positive_part_by_quadrature(j, t, mu);
        EXPECT_NEAR(expected_positive_part(j, t, mu), ref, 1e-9 * std::max(1.0, ref))
            << "j=" << j << " t=" << t << " mu=" << mu;
      }
}

TEST(PositivePart, MonteCarlo) {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> service(1.0);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = service(rng) + service(rng);
    const double v = std::max(s - 1.0, 0.0);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(expected_positive_part(2, -1.0, 1.0), mean, 4.0 * se);
}

TEST(PositivePart, LipschitzAndMonotone) {
  const double mu = 1.3;
  for (std::size_t j = 0; j <= 12; ++j)
    for (double t = -8.0; t <= 2.0; t += 0.37)
      for (double d : {1e-3, 0.1, 1.0}) {
        const double diff = expected_positive_part(j, t, mu) - expected_positive_part(j, t - d, mu);
        EXPECT_GE(diff, -1e-14);
        EXPECT_LE(diff, d + 1e-12);
        EXPECT_GE(expected_positive_part(j + 1, t, mu), expected_positive_part(j, t, mu));
      }
}

TEST(PoissonTruncation, QuantileAndRenormalization) {
  for (double mean : {0.001, 0.5, 3.0, 40.0, 300.0})
    for (double tail : {1e-2, 1e-6}) {
      const auto n = poisson_truncation(mean, tail);
      boost::math::poisson_distribution<double> pois(mean);
      EXPECT_LE(boost::math::cdf(boost::math::complement(pois, static_cast<double>(n))), tail * (1 + 1e-9));
      if (n > 0) EXPECT_GT(boost::math::cdf(boost::math::complement(pois, static_cast<double>(n - 1))), tail);
      const auto pmf = truncated_poisson(mean, tail);
      double total = 0.0;
      for (double v : pmf) total += v;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(PoissonTruncation, TinyTailTerminates) {
  EXPECT_LT(poisson_truncation(3.0, 1e-17), 60u);
}

TEST(CostAt, EmptySystem) {
  auto p = ModelParams::stochastic(1.0, 1.0, 1.0, 2.0, 2.0);
  const auto empty = StateDistribution::empty(5);
  EXPECT_EQ(cost_at(3.0, empty, 0.0, p), 6.0);
  EXPECT_EQ(cost_at(-3.0, empty, 0.0, p), 6.0);
  for (double t : {-4.0, -0.5, 0.0, 0.25, 9.0})
    EXPECT_EQ(cost_at(t, empty, 0.0, p), t < 0 ? -p.beta1 * t : p.beta2 * t);
}

TEST(CostAt, TwoAhead) {
  auto p = ModelParams::stochastic(1.0, 1.0, 1.0, 1.0, 1.0);
  const auto two = StateDistribution::point(2, 5);
  const double w = 2.0;  // E[N] / mu
  // earliness 1, waiting 2, tardiness a_2(-1)
  const double a2 = 2.0 / std::exp(1.0) + 1.0 / std::exp(1.0);
  EXPECT_NEAR(cost_at(-1.0, two, w, p), 1.0 + 2.0 + a2, 1e-14);
  EXPECT_NEAR(a2, positive_part_by_quadrature(2, -1.0, 1.0), 1e-10);
}

TEST(OpeningAtom, NoCongestion) {
  auto p = ModelParams::stochastic(4.0, 1.0, 1.0, 2.0, 1.0, 7.0);
  EXPECT_EQ(g1(5.0, 0.0, p), 5.0);
  EXPECT_EQ(g1(-1.0, 0.0, p), 2.0);
  for (double t : {-6.0, -0.3, 0.2, 3.0}) EXPECT_EQ(g1(t, 0.0, p), t < 0 ? -p.beta1 * t : p.beta2 * t);
  p.beta1 = 1.0;
  EXPECT_EQ(g2(0.0, p), 7.0);
}

TEST(OpeningAtom, SmallBatchExpansion) {
  auto p = ModelParams::stochastic(4.0, 1.0, 1.0, 1.0, 1.0, 7.0);
  const double q = 1e-5;
  // waiting behind half the batch, plus the rare lone predecessor still in service at 0
  const double lead =
      p.beta1 * p.t1 + p.lambda() * q * (p.alpha + p.beta2 * std::exp(-p.mu * p.t1)) / (2.0 * p.mu);
  EXPECT_NEAR(g2(q, p, 1e-12), lead, 1e-4 * p.lambda() * q);
}

TEST(OpeningAtom, LaterArrivalMatchesSimulation) {
  // Poisson(2) batch at -2 served FIFO, tagged arrival at t = 1
  auto p = ModelParams::stochastic(4.0, 1.0, 1.0, 1.0, 1.0, 2.0);
  std::mt19937_64 rng(11);
  std::poisson_distribution<int> batch(2.0);
  std::exponential_distribution<double> service(1.0);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double done = -2.0;
    for (int k = batch(rng); k > 0; --k) done += service(rng);
    const double entry = std::max(1.0, done);
    const double c = p.alpha * (entry - 1.0) + p.beta2 * entry;
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(g1(1.0, 0.5, p, 1e-12), mean, 4.0 * se);
}

TEST(OpeningAtom, AtomCostMatchesSimulation) {
  // N ~ Poisson(4) others, uniform rank among N + 1, FIFO from -2
  auto p = ModelParams::stochastic(4.0, 1.0, 1.0, 1.0, 1.0, 2.0);
  std::mt19937_64 rng(12);
  std::poisson_distribution<int> others(4.0);
  std::exponential_distribution<double> service(1.0);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const int m = others(rng);
    const int ahead = std::uniform_int_distribution<int>(0, m)(rng);
    double entry = -2.0;
    for (int k = 0; k < ahead; ++k) entry += service(rng);
    const double c = p.beta1 * 2.0 + p.alpha * (entry + 2.0) + p.beta2 * std::max(entry, 0.0);
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(g2(1.0, p, 1e-12), mean, 4.0 * se);
}

TEST(OpeningAtom, ContinuousInTimeAndBatch) {
  auto p = ModelParams::stochastic(3.0, 0.3, 1.0, 0.5, 1.0, 14.0);
  for (double q : {0.1, 0.6, 1.0}) {
    EXPECT_NEAR(g1(-1e-9, q, p), g1(0.0, q, p), 1e-7);
    EXPECT_NEAR(g1(2.0, q, p), g1(2.0 + 1e-9, q, p), 1e-7);
    EXPECT_NEAR(g2(q, p), g2(q + 1e-9, p), 1e-6);
  }
}

// A 1e-2 tail cut drops enough of the batch law to move g1 by percents on
// these sets; the cut only becomes harmless once the tail is small.
TEST(OpeningAtom, TruncationSensitivityVanishes) {
  const ModelParams sets[] = {ModelParams::stochastic(3.0, 0.3, 1.0, 0.5, 1.0, 14.0),
                              ModelParams::stochastic(5.0, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0)};
  for (const auto& p : sets)
    for (double q : {0.05, 0.5, 1.0}) {
      double coarse = 0.0, fine = 0.0;
      auto rel = [](double a, double b) { return std::fabs(a - b) / std::fabs(b); };
      coarse = std::max(coarse, rel(g2(q, p, 1e-2), g2(q, p, 1e-10)));
      fine = std::max(fine, rel(g2(q, p, 1e-6), g2(q, p, 1e-10)));
      for (double t : {-0.9 * p.t1, -0.1, 0.5, 2.0}) {
        coarse = std::max(coarse, rel(g1(t, q, p, 1e-2), g1(t, q, p, 1e-10)));
        fine = std::max(fine, rel(g1(t, q, p, 1e-6), g1(t, q, p, 1e-10)));
      }
      EXPECT_LT(fine, 1e-3);
      EXPECT_LT(fine, coarse);
    }
}
