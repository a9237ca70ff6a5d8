#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace arrivalq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  ConfigInvalid,
  NegativeProbability,
  NonpositiveCoefficient,
  NegativeDensity,
  NoConvergence,
  TruncationBreach,
  InfeasibleGap,
  InvalidRegime,
  MassMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::NegativeProbability: return "NEGATIVE_PROBABILITY";
    case ErrorCode::NonpositiveCoefficient: return "NONPOSITIVE_COEFFICIENT";
    case ErrorCode::NegativeDensity: return "NEGATIVE_DENSITY";
    case ErrorCode::NoConvergence: return "NO_CONVERGENCE";
    case ErrorCode::TruncationBreach: return "TRUNCATION_BREACH";
    case ErrorCode::InfeasibleGap: return "INFEASIBLE_GAP";
    case ErrorCode::InvalidRegime: return "INVALID_REGIME";
    case ErrorCode::MassMismatch: return "MASS_MISMATCH";
  }
  return "UNKNOWN";
}

class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class ModelKind { Stochastic, Fluid };

/// Game primitives. `population` is the Poisson mean (stochastic) or the
/// total fluid volume (fluid); `kind` says which.
struct ModelParams {
  ModelKind kind = ModelKind::Stochastic;
  double population = 1.0;
  double mu = 1.0;
  double alpha = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double t1 = kInf;  // arrivals allowed from -t1
  double t2 = kInf;  // arrivals allowed until t2

  static ModelParams stochastic(double lambda, double mu, double alpha, double beta1,
                                double beta2, double t1 = kInf, double t2 = kInf) {
    return {ModelKind::Stochastic, lambda, mu, alpha, beta1, beta2, t1, t2};
  }
  static ModelParams fluid(double big_lambda, double mu, double alpha, double beta1,
                           double beta2, double t1 = kInf, double t2 = kInf) {
    return {ModelKind::Fluid, big_lambda, mu, alpha, beta1, beta2, t1, t2};
  }

  double lambda() const { return population; }
  double big_lambda() const { return population; }
  bool opening_bound() const { return std::isfinite(t1); }
  bool closing_bound() const { return std::isfinite(t2); }

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(population)) throw SolverError(ErrorCode::ConfigInvalid, "population must be > 0");
    if (!positive(mu)) throw SolverError(ErrorCode::ConfigInvalid, "mu must be > 0");
    if (!positive(alpha)) throw SolverError(ErrorCode::ConfigInvalid, "alpha must be > 0");
    if (!positive(beta1)) throw SolverError(ErrorCode::ConfigInvalid, "beta1 must be > 0");
    if (!positive(beta2)) throw SolverError(ErrorCode::ConfigInvalid, "beta2 must be > 0");
    if (std::isnan(t1) || t1 <= 0.0) throw SolverError(ErrorCode::ConfigInvalid, "t1 must be > 0 or inf");
    if (std::isnan(t2) || t2 <= 0.0) throw SolverError(ErrorCode::ConfigInvalid, "t2 must be > 0 or inf");
  }
};

struct SolverConfig {
  double epsilon = 1e-2;
  double dt = 0.0;  // 0 selects a step from the rates
  double nmax_tail_prob = 1e-2;
  std::uint64_t mc_reps = 10000;
  std::uint64_t seed = 20240601;

  void validate() const {
    if (!(epsilon > 0.0)) throw SolverError(ErrorCode::ConfigInvalid, "epsilon must be > 0");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw SolverError(ErrorCode::ConfigInvalid, "dt must be > 0");
    if (!(nmax_tail_prob > 0.0 && nmax_tail_prob < 1.0))
      throw SolverError(ErrorCode::ConfigInvalid, "nmaxTailProb must be in (0,1)");
    if (mc_reps < 1) throw SolverError(ErrorCode::ConfigInvalid, "mcReps must be >= 1");
  }
};

}  // namespace arrivalq
