#pragma once

// Fluid model: closed-form equilibria and social optima for the unconstrained
// game and the opening/closing-bound regimes, the equation systems they come
// from (solved numerically as a cross-check), and an exact workload-based
// cost evaluator for arbitrary piecewise strategies.
//
// Time is measured in units of the fluid's service time L = Lambda/mu. All
// densities and atoms are fractions of the population.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "arrivalq/kolmogorov.hpp"
#include "arrivalq/params.hpp"

namespace arrivalq {

enum class FluidCase {
  Unconstrained,
  T1Pure,
  T1Case2,
  T1Case3,
  T1Case4,
  T2Only,
  JointCase1,
  JointCase2,
  JointCase3,
  JointCase4,
  OptUnconstrained,
  OptT1,
  OptT2,
  OptJointI,
  OptJointII,
};

inline std::string_view to_string(FluidCase c) {
  switch (c) {
    case FluidCase::Unconstrained: return "UNCONSTRAINED";
    case FluidCase::T1Pure: return "T1_PURE";
    case FluidCase::T1Case2: return "T1_CASE2";
    case FluidCase::T1Case3: return "T1_CASE3";
    case FluidCase::T1Case4: return "T1_CASE4";
    case FluidCase::T2Only: return "T2_ONLY";
    case FluidCase::JointCase1: return "JOINT_CASE1";
    case FluidCase::JointCase2: return "JOINT_CASE2";
    case FluidCase::JointCase3: return "JOINT_CASE3";
    case FluidCase::JointCase4: return "JOINT_CASE4";
    case FluidCase::OptUnconstrained: return "OPT_UNCONSTRAINED";
    case FluidCase::OptT1: return "OPT_T1";
    case FluidCase::OptT2: return "OPT_T2";
    case FluidCase::OptJointI: return "OPT_JOINT_I";
    case FluidCase::OptJointII: return "OPT_JOINT_II";
  }
  return "UNKNOWN";
}

struct Segment {
  double start = 0.0;
  double end = 0.0;
  double density = 0.0;
};

struct FluidSolution {
  std::vector<Segment> segments;
  std::vector<Atom> atoms;
  double social_cost = 0.0;
  double drop_cost = 0.0;  // per-drop cost; the common equilibrium cost for equilibria
  FluidCase case_label = FluidCase::Unconstrained;
  std::map<std::string, double> thresholds;
  std::map<std::string, double> breakpoints;
  std::map<std::string, double> atom_sizes;
  std::vector<std::string> diagnostics;

  double total_mass() const {
    double m = 0.0;
    for (const auto& a : atoms) m += a.mass;
    for (const auto& s : segments) m += s.density * (s.end - s.start);
    return m;
  }

  double support_begin() const {
    double lo = kInf;
    for (const auto& a : atoms) lo = std::min(lo, a.t);
    for (const auto& s : segments) lo = std::min(lo, s.start);
    return lo;
  }

  double support_end() const {
    double hi = -kInf;
    for (const auto& a : atoms) hi = std::max(hi, a.t);
    for (const auto& s : segments) hi = std::max(hi, s.end);
    return hi;
  }

  /// F(t) = mass arriving at or before t.
  double cdf(double t) const {
    double m = 0.0;
    for (const auto& a : atoms)
      if (a.t <= t) m += a.mass;
    for (const auto& s : segments)
      if (t > s.start) m += s.density * (std::min(t, s.end) - s.start);
    return m;
  }

  /// Same strategy as a step-function curve, zero density across gaps.
  DensityCurve to_density_curve() const {
    DensityCurve curve;
    curve.atoms = atoms;
    auto segs = segments;
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.start < b.start; });
    for (const auto& s : segs) {
      if (s.end <= s.start) continue;
      const bool touching = !curve.times.empty() && curve.times.back() >= s.start;
      // the placeholder after the previous segment holds 0; its density sits one back
      const double left = touching ? curve.values[curve.values.size() - 2] : 0.0;
      if (!touching) {
        if (!curve.times.empty()) curve.jumps.push_back({curve.times.back(), curve.values[curve.values.size() - 2], 0.0});
        curve.times.push_back(s.start);
        curve.values.push_back(s.density);
      } else {
        curve.values.back() = s.density;
      }
      if (left != s.density) curve.jumps.push_back({s.start, left, s.density});
      curve.times.push_back(s.end);
      curve.values.push_back(0.0);
    }
    if (!curve.times.empty()) {
      const std::size_t n = curve.times.size();
      curve.jumps.push_back({curve.times.back(), curve.values[n - 2], 0.0});
    }
    return curve;
  }
};

namespace fluid_detail {

inline void require_fluid(const ModelParams& params) {
  params.validate();
  if (params.kind != ModelKind::Fluid)
    throw SolverError(ErrorCode::ConfigInvalid, "fluid solver needs fluid-tagged parameters");
}

inline double service_span(const ModelParams& p) { return p.big_lambda() / p.mu; }

// a <= b with a relative guard band; ties go to the lower case
inline bool at_most(double a, double b) {
  if (std::isnan(b)) return false;
  return a <= b + 1e-12 * std::max(std::fabs(a), std::fabs(b));
}

// First sign change of f on [lo, hi] over an even scan, refined to full precision.
inline std::optional<double> scan_root(const std::function<double(double)>& f, double lo, double hi,
                                       int samples = 2000) {
  const double scale = std::max(std::fabs(lo), std::fabs(hi));
  double x0 = lo;
  double f0 = f(x0);
  if (f0 == 0.0) return x0;
  for (int i = 1; i <= samples; ++i) {
    const double x1 = lo + (hi - lo) * i / samples;
    const double f1 = f(x1);
    if (f1 == 0.0) return x1;
    if ((f0 < 0.0) != (f1 < 0.0)) {
      boost::uintmax_t iters = 200;
      auto tol = [scale](double a, double b) { return std::fabs(a - b) <= 1e-15 * scale; };
      const auto [a, b] = boost::math::tools::toms748_solve(f, x0, x1, f0, f1, tol, iters);
      return 0.5 * (a + b);
    }
    x0 = x1;
    f0 = f1;
  }
  // a root sitting on the closed end of the range
  if (std::fabs(f0) < 1e-12 * std::max(1.0, scale)) return hi;
  return std::nullopt;
}

inline double densities_first(const ModelParams& p) {
  return (p.alpha + p.beta1) / p.alpha / service_span(p);
}
inline double densities_second(const ModelParams& p) {
  return (p.alpha + p.beta1) / (p.alpha + p.beta2) / service_span(p);
}
inline double densities_third(const ModelParams& p) {
  return p.alpha / (p.alpha + p.beta2) / service_span(p);
}

}  // namespace fluid_detail

/// Closed forms of the opening-bound regime (T1 + T2 >= L, T1 below the
/// unconstrained earliest time). NaN marks a threshold that does not exist.
struct OpeningRegimeForms {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
  double p1 = 0.0, t1 = 0.0, t2 = 0.0;  // atom with one or two density steps
  double p2 = 0.0, t3 = 0.0, t4 = 0.0;  // atom, gap, three steps
};

inline OpeningRegimeForms opening_regime_forms(const ModelParams& p) {
  const double L = fluid_detail::service_span(p);
  const double a = p.alpha, b1 = p.beta1, b2 = p.beta2, T1 = p.t1;
  OpeningRegimeForms f;
  const double r1 = b1 * b1 - a * b2 + b2 * b2;
  f.a1 = r1 < 0.0 ? std::nan("") : L * (-b1 + std::sqrt(r1)) / b2;
  f.a2 = b2 * L * (-b1 + std::sqrt((a + b1) * (a + b1) + a * b2 + b2 * b2)) /
         (a * a + b2 * b2 + a * (2.0 * b1 + b2));
  f.a3 = 2.0 * b2 * L / (a + 2.0 * b1 + 2.0 * b2);
  f.a4 = b2 * L / (b1 + b2);
  const double B = b2 * L - b1 * T1;
  const double D = B * B - (a + b2) * b2 * T1 * T1;
  const double root = D < 0.0 ? std::nan("") : std::sqrt(D);
  f.p1 = (B + root) / (a + b2) / L;
  f.t1 = (-(a + b1) * T1 + root) / a;
  f.t2 = -T1 + root / (a + b1);
  f.p2 = 2.0 * (b2 * L - (b1 + b2) * T1) / (a * L);
  f.t3 = (b2 * L - (a + 2.0 * b1 + b2) * T1) / (a + b1);
  f.t4 = b2 * (T1 - L) / (a + b1);
  return f;
}

/// Closed forms of the joint regime (T1 + T2 < L).
struct JointRegimeForms {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
  double p1 = 0.0, t1 = 0.0, t2 = 0.0;
  double p2 = 0.0, t3 = 0.0, t4 = 0.0;
  double closing_cost = 0.0;  // cost of the last drop at T2
};

inline JointRegimeForms joint_regime_forms(const ModelParams& p) {
  const double L = fluid_detail::service_span(p);
  const double a = p.alpha, b1 = p.beta1, b2 = p.beta2, T1 = p.t1, T2 = p.t2;
  const double K = (a + b2) * L - a * T2;
  JointRegimeForms f;
  const double q = (a + b1) * (a + b1) + a * b2 + b2 * b2;
  const double r1 = L * (q * L - 2.0 * a * b2 * T2);
  f.a1 = r1 < 0.0 ? std::nan("") : (-(a + b1) * L + std::sqrt(r1)) / b2;
  f.a2 = K * (-(a + b1) + std::sqrt(q)) / ((a + b2) * b2);
  f.a3 = 2.0 * K / (3.0 * a + 2.0 * b1 + 2.0 * b2);
  f.a4 = std::min(L - T2, K / (a + b1 + b2));
  const double B = K - (a + b1) * T1;
  const double D = B * B - (a + b2) * b2 * T1 * T1;
  const double root = D < 0.0 ? std::nan("") : std::sqrt(D);
  f.p1 = (B + root) / (a + b2) / L;
  f.t1 = (-(a + b1) * T1 + root) / a;
  f.t2 = -T1 + root / (a + b1);
  f.p2 = 2.0 * (K - (a + b1 + b2) * T1) / (a * L);
  f.t3 = (K - (2.0 * a + 2.0 * b1 + b2) * T1) / (a + b1);
  f.t4 = (-K + (a + b2) * T1) / (a + b1);
  f.closing_cost = b2 * T2 + (a + b2) * (L - T1 - T2);
  return f;
}

/// The indifference + mass-balance systems behind the atom cases, solved
/// numerically. `tail` is how long the last density step runs past 0: L - T1
/// in the opening regime and T2 in the joint regime.
namespace proof_system {

struct AtomStep {
  double p = 0.0;
  double t = 0.0;
};

struct AtomGap {
  double p = 0.0;
  double t3 = 0.0;
  double t4 = 0.0;
};

inline double atom_cost(double x, const ModelParams& p) {
  const double T1 = p.t1;
  const double late = x > T1 ? p.beta2 * (x - T1) * (x - T1) / (2.0 * x) : 0.0;
  return p.beta1 * T1 + p.alpha * x / 2.0 + late;
}

// atom, then the third step on [t, tail]
inline std::optional<AtomStep> late_step(const ModelParams& p, double tail) {
  const double L = fluid_detail::service_span(p);
  const double d3 = fluid_detail::densities_third(p);
  const double T1 = p.t1;
  auto t_of = [&](double q) { return tail - (1.0 - q) / d3; };
  auto residual = [&](double q) {
    const double x = q * L;
    const double t = t_of(q);
    return atom_cost(x, p) - (p.beta2 * (x - T1) + p.alpha * (x - T1 - t));
  };
  const auto q = fluid_detail::scan_root(residual, std::min(T1 / L, 1.0), 1.0);
  if (!q) return std::nullopt;
  return AtomStep{*q, t_of(*q)};
}

// atom, second step on [t, 0], third step on [0, tail]
inline std::optional<AtomStep> early_step(const ModelParams& p, double tail) {
  const double L = fluid_detail::service_span(p);
  const double d2 = fluid_detail::densities_second(p);
  const double d3 = fluid_detail::densities_third(p);
  const double T1 = p.t1;
  auto t_of = [&](double q) { return -(1.0 - q - d3 * tail) / d2; };
  auto residual = [&](double q) {
    const double x = q * L;
    const double t = t_of(q);
    return atom_cost(x, p) - (-p.beta1 * t + p.alpha * (x - T1 - t) + p.beta2 * (x - T1));
  };
  const auto q = fluid_detail::scan_root(residual, std::min(T1 / L, 1.0), 1.0);
  if (!q) return std::nullopt;
  return AtomStep{*q, t_of(*q)};
}

// atom cleared before t3; all three steps on [t3, tail]
inline std::optional<AtomGap> with_gap(const ModelParams& p, double tail) {
  const double L = fluid_detail::service_span(p);
  const double d1 = fluid_detail::densities_first(p);
  const double d2 = fluid_detail::densities_second(p);
  const double d3 = fluid_detail::densities_third(p);
  const double a = p.alpha, b1 = p.beta1, T1 = p.t1;
  // given the atom, t3 from atom/t3 indifference and t4 from t3/t4 indifference
  auto solve_times = [&](double q) {
    const double x = q * L;
    const double t3 = (a * (x - T1) - b1 * T1 - a * x / 2.0) / (a + b1);
    const double c3 = -b1 * t3 + a * (x - T1 - t3);
    const double t4 = -c3 / (a + b1);
    return std::pair{t3, t4};
  };
  auto residual = [&](double q) {
    const auto [t3, t4] = solve_times(q);
    return q + d1 * (t4 - t3) - d2 * t4 + d3 * tail - 1.0;
  };
  const auto q = fluid_detail::scan_root(residual, 1e-12, std::min(T1 / L, 1.0));
  if (!q) return std::nullopt;
  const auto [t3, t4] = solve_times(*q);
  return AtomGap{*q, t3, t4};
}

}  // namespace proof_system

namespace fluid_detail {

inline bool close_rel(double a, double b, double scale) {
  return std::fabs(a - b) <= 1e-6 * std::max({std::fabs(a), std::fabs(b), scale});
}

// Uses the closed-form atom/breakpoints unless the equation system disagrees.
struct AtomQuantities {
  double p = 0.0, t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
};

inline AtomQuantities checked_step(double p, double t, bool late, const ModelParams& params, double tail,
                                   std::vector<std::string>& diag) {
  const auto sys = late ? proof_system::late_step(params, tail) : proof_system::early_step(params, tail);
  const double L = service_span(params);
  AtomQuantities q;
  q.p = p;
  (late ? q.t1 : q.t2) = t;
  if (!sys) {
    diag.emplace_back("INVALID_REGIME: equation system has no root; kept closed form");
    return q;
  }
  if (!close_rel(p, sys->p, 1e-3) || !close_rel(t, sys->t, 1e-3 * L) || std::isnan(p) || std::isnan(t)) {
    diag.emplace_back("INVALID_REGIME: closed form disagrees with equation system; using the system");
    q.p = sys->p;
    (late ? q.t1 : q.t2) = sys->t;
  }
  return q;
}

inline AtomQuantities checked_gap(double p, double t3, double t4, const ModelParams& params, double tail,
                                  std::vector<std::string>& diag) {
  const auto sys = proof_system::with_gap(params, tail);
  const double L = service_span(params);
  AtomQuantities q{p, 0.0, 0.0, t3, t4};
  if (!sys) {
    diag.emplace_back("INVALID_REGIME: equation system has no root; kept closed form");
    return q;
  }
  if (!close_rel(p, sys->p, 1e-3) || !close_rel(t3, sys->t3, 1e-3 * L) || !close_rel(t4, sys->t4, 1e-3 * L)) {
    diag.emplace_back("INVALID_REGIME: closed form disagrees with equation system; using the system");
    q.p = sys->p;
    q.t3 = sys->t3;
    q.t4 = sys->t4;
  }
  return q;
}

inline void check_order(const std::vector<double>& thresholds, std::vector<std::string>& diag) {
  double last = -kInf;
  for (double a : thresholds) {
    if (std::isnan(a)) continue;
    if (a < last - 1e-12 * std::fabs(a)) {
      diag.emplace_back("INVALID_REGIME: thresholds out of order");
      return;
    }
    last = a;
  }
}

// Three steps from -lower to upper, the earliest drop paying beta1*lower.
inline FluidSolution three_steps(const ModelParams& p, double lower, double upper) {
  FluidSolution s;
  const double mid = -p.beta1 / (p.alpha + p.beta1) * lower;
  s.segments = {{-lower, mid, densities_first(p)}, {mid, 0.0, densities_second(p)},
                {0.0, upper, densities_third(p)}};
  s.drop_cost = p.beta1 * lower;
  s.social_cost = p.big_lambda() * s.drop_cost;
  return s;
}

// Atom at -T1 followed by the regime's density steps.
inline FluidSolution atom_solution(FluidCase label, const ModelParams& p, double tail, double closing_cost,
                                   const std::vector<double>& thresholds, bool joint) {
  const double L = service_span(p);
  const double T1 = p.t1;
  FluidSolution s;
  s.case_label = label;
  const std::vector<std::string> names = joint ? std::vector<std::string>{"A'1", "A'2", "A'3", "A'4"}
                                               : std::vector<std::string>{"A1", "A2", "A3", "A4"};
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (!std::isnan(thresholds[i])) s.thresholds[names[i]] = thresholds[i];
  check_order(thresholds, s.diagnostics);
  const std::string prime = joint ? "'" : "";
  const double d1 = densities_first(p), d2 = densities_second(p), d3 = densities_third(p);

  const auto forms_p1 = joint ? joint_regime_forms(p).p1 : opening_regime_forms(p).p1;
  const auto forms_t1 = joint ? joint_regime_forms(p).t1 : opening_regime_forms(p).t1;
  const auto forms_t2 = joint ? joint_regime_forms(p).t2 : opening_regime_forms(p).t2;
  switch (label) {
    case FluidCase::T1Pure:
    case FluidCase::JointCase1:
      s.atoms = {{-T1, 1.0}};
      s.drop_cost = proof_system::atom_cost(L, p);
      break;
    case FluidCase::T1Case2:
    case FluidCase::JointCase2: {
      const auto q = checked_step(forms_p1, forms_t1, true, p, tail, s.diagnostics);
      s.atoms = {{-T1, q.p}};
      s.segments = {{q.t1, tail, d3}};
      s.atom_sizes["p" + prime + "1"] = q.p;
      s.breakpoints["t" + prime + "1"] = q.t1;
      s.drop_cost = closing_cost;
      break;
    }
    case FluidCase::T1Case3:
    case FluidCase::JointCase3: {
      const auto q = checked_step(forms_p1, forms_t2, false, p, tail, s.diagnostics);
      s.atoms = {{-T1, q.p}};
      s.segments = {{q.t2, 0.0, d2}, {0.0, tail, d3}};
      s.atom_sizes["p" + prime + "1"] = q.p;
      s.breakpoints["t" + prime + "2"] = q.t2;
      s.drop_cost = closing_cost;
      break;
    }
    default: {
      const double p2 = joint ? joint_regime_forms(p).p2 : opening_regime_forms(p).p2;
      const double t3 = joint ? joint_regime_forms(p).t3 : opening_regime_forms(p).t3;
      const double t4 = joint ? joint_regime_forms(p).t4 : opening_regime_forms(p).t4;
      const auto q = checked_gap(p2, t3, t4, p, tail, s.diagnostics);
      s.atoms = {{-T1, q.p}};
      s.segments = {{q.t3, q.t4, d1}, {q.t4, 0.0, d2}, {0.0, tail, d3}};
      s.atom_sizes["p" + prime + "2"] = q.p;
      s.breakpoints["t" + prime + "3"] = q.t3;
      s.breakpoints["t" + prime + "4"] = q.t4;
      s.drop_cost = closing_cost;
      break;
    }
  }
  s.social_cost = p.big_lambda() * s.drop_cost;
  return s;
}

// Unconstrained earliest time when the closing bound T2 binds.
inline double closing_lower(const ModelParams& p) {
  const double L = service_span(p);
  return ((p.alpha + p.beta2) * L - p.alpha * p.t2) / (p.alpha + p.beta1 + p.beta2);
}

}  // namespace fluid_detail

inline FluidSolution fluid_equilibrium(const ModelParams& params) {
  using namespace fluid_detail;
  require_fluid(params);
  const double L = service_span(params);
  const double b1 = params.beta1, b2 = params.beta2;
  const double T1 = params.t1, T2 = params.t2;
  const double te1 = b2 * L / (b1 + b2);
  const double te2 = b1 * L / (b1 + b2);

  if (T1 >= te1 && T2 >= te2) {
    auto s = three_steps(params, te1, te2);
    s.case_label = FluidCase::Unconstrained;
    s.breakpoints["Te1"] = te1;
    s.breakpoints["Te2"] = te2;
    return s;
  }

  if (T1 + T2 >= L && T2 < te2) {
    const double lower = closing_lower(params);
    auto s = three_steps(params, lower, T2);
    s.case_label = FluidCase::T2Only;
    s.breakpoints["T'e1"] = lower;
    return s;
  }

  if (T1 + T2 >= L) {
    const auto f = opening_regime_forms(params);
    const std::vector<double> th{f.a1, f.a2, f.a3, f.a4};
    FluidCase label = FluidCase::T1Case4;
    if (at_most(T1, f.a1)) label = FluidCase::T1Pure;
    else if (at_most(T1, f.a2)) label = FluidCase::T1Case2;
    else if (at_most(T1, f.a3)) label = FluidCase::T1Case3;
    auto s = atom_solution(label, params, L - T1, b2 * (L - T1), th, false);
    if (label == FluidCase::T1Pure) s.atom_sizes["p1"] = 1.0;
    return s;
  }

  // both bounds bind: T1 + T2 < L
  const double lower = closing_lower(params);
  if (!at_most(T1, lower)) {
    auto s = three_steps(params, lower, T2);
    s.case_label = FluidCase::T2Only;
    s.breakpoints["T'e1"] = lower;
    return s;
  }
  const auto f = joint_regime_forms(params);
  const std::vector<double> th{f.a1, f.a2, f.a3, f.a4};
  FluidCase label = FluidCase::JointCase4;
  if (at_most(T1, f.a1)) label = FluidCase::JointCase1;
  else if (at_most(T1, f.a2)) label = FluidCase::JointCase2;
  else if (at_most(T1, f.a3)) label = FluidCase::JointCase3;
  auto s = atom_solution(label, params, T2, f.closing_cost, th, true);
  if (label == FluidCase::JointCase1) s.atom_sizes["p'1"] = 1.0;
  return s;
}

namespace fluid_detail {

// Uniform service-rate arrivals on [-lower, upper] plus `mass` drops (absolute
// volume) dumped at upper.
inline FluidSolution uniform_plan(const ModelParams& p, double lower, double upper, double mass) {
  const double L = service_span(p);
  const double mu = p.mu;
  FluidSolution s;
  s.segments = {{-lower, upper, 1.0 / L}};
  if (mass > 0.0) s.atoms = {{upper, mass / p.big_lambda()}};
  const double late_from = std::max(upper, 0.0);
  s.social_cost = 0.5 * mu * (p.beta1 * lower * lower + p.beta2 * late_from * late_from) +
                  (p.alpha + p.beta2) * mass * mass / (2.0 * mu) + p.beta2 * late_from * mass;
  s.drop_cost = s.social_cost / p.big_lambda();
  s.breakpoints["LB"] = lower;
  s.breakpoints["UB"] = upper;
  if (mass > 0.0) s.atom_sizes["terminal"] = mass / p.big_lambda();
  return s;
}

}  // namespace fluid_detail

inline FluidSolution fluid_social_optimum(const ModelParams& params) {
  using namespace fluid_detail;
  require_fluid(params);
  const double L = service_span(params);
  const double b1 = params.beta1, b2 = params.beta2;
  const double T1 = params.t1, T2 = params.t2;
  const double lb = b2 * L / (b1 + b2);
  const double ub = b1 * L / (b1 + b2);

  if (T1 >= lb && T2 >= ub) {
    auto s = uniform_plan(params, lb, ub, 0.0);
    s.case_label = FluidCase::OptUnconstrained;
    return s;
  }
  if (T1 + T2 >= L && T1 < lb) {
    auto s = uniform_plan(params, T1, L - T1, 0.0);
    s.case_label = FluidCase::OptT1;
    return s;
  }
  const double lower = closing_lower(params);
  if (T1 + T2 >= L || T1 > lower) {
    auto s = uniform_plan(params, lower, T2, params.big_lambda() - (lower + T2) * params.mu);
    s.case_label = T1 + T2 >= L ? FluidCase::OptT2 : FluidCase::OptJointII;
    return s;
  }
  auto s = uniform_plan(params, T1, T2, params.big_lambda() - (T1 + T2) * params.mu);
  s.case_label = FluidCase::OptJointI;
  return s;
}

struct PriceOfAnarchy {
  double ratio = 0.0;
  double equilibrium_social_cost = 0.0;
  double optimal_social_cost = 0.0;
  std::optional<double> explicit_ratio;  // closed-form ratio where one is known
  FluidCase equilibrium_case = FluidCase::Unconstrained;
  FluidCase optimum_case = FluidCase::OptUnconstrained;
};

inline PriceOfAnarchy price_of_anarchy(const ModelParams& params) {
  const auto eq = fluid_equilibrium(params);
  const auto opt = fluid_social_optimum(params);
  PriceOfAnarchy r;
  r.equilibrium_social_cost = eq.social_cost;
  r.optimal_social_cost = opt.social_cost;
  r.ratio = eq.social_cost / opt.social_cost;
  r.equilibrium_case = eq.case_label;
  r.optimum_case = opt.case_label;

  const double lam = params.big_lambda(), mu = params.mu;
  const double a = params.alpha, b1 = params.beta1, b2 = params.beta2;
  const double T1 = params.t1, T2 = params.t2;
  switch (eq.case_label) {
    case FluidCase::Unconstrained: r.explicit_ratio = 2.0; break;
    case FluidCase::T1Pure: {
      const double late = lam - T1 * mu;
      r.explicit_ratio = (a * lam * lam + 2.0 * T1 * b1 * lam * mu + b2 * late * late) /
                         (T1 * T1 * b1 * mu * mu + b2 * late * late);
      break;
    }
    case FluidCase::T1Case2:
    case FluidCase::T1Case3:
    case FluidCase::T1Case4: {
      const double late = lam - T1 * mu;
      r.explicit_ratio = 2.0 * b2 * lam * late / (T1 * T1 * b1 * mu * mu + b2 * late * late);
      break;
    }
    case FluidCase::T2Only:
      r.explicit_ratio = 2.0 * b1 * lam * ((a + b2) * lam - T2 * a * mu) /
                         (b1 * (a + b2) * lam * lam - 2.0 * T2 * a * b1 * lam * mu +
                          T2 * T2 * a * (b1 + b2) * mu * mu);
      break;
    default: break;
  }
  if (r.explicit_ratio && std::fabs(*r.explicit_ratio - r.ratio) > 1e-9 * r.ratio)
    throw SolverError(ErrorCode::InvalidRegime, "explicit PoA " + std::to_string(*r.explicit_ratio) +
                                                    " disagrees with cost ratio " + std::to_string(r.ratio));
  return r;
}

/// Exact fluid workload and per-drop costs for any piecewise strategy.
class FluidCostModel {
 public:
  FluidCostModel(const FluidSolution& strategy, const ModelParams& params)
      : strategy_(strategy), params_(params), span_(fluid_detail::service_span(params)) {
    for (const auto& s : strategy.segments) {
      knots_.push_back(s.start);
      knots_.push_back(s.end);
    }
    for (const auto& a : strategy.atoms) knots_.push_back(a.t);
    std::sort(knots_.begin(), knots_.end());
    knots_.erase(std::unique(knots_.begin(), knots_.end()), knots_.end());
    after_.resize(knots_.size());
    double v = 0.0;
    for (std::size_t k = 0; k < knots_.size(); ++k) {
      if (k > 0) v = evolve(v, rate(k - 1), knots_[k] - knots_[k - 1]);
      v += atom_at(knots_[k]) * span_;
      after_[k] = v;
    }
  }

  /// Workload met by an infinitesimal drop arriving just before t.
  double workload_before(double t) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 0.0;
    const std::size_t k = static_cast<std::size_t>(it - knots_.begin()) - 1;
    return evolve(after_[k], rate(k), t - knots_[k]);
  }

  /// Cost of a drop arriving at t that is not part of an atom there.
  double drop_cost(double t) const { return cost_given(t, workload_before(t)); }

  /// Average cost over the drops of an atom at t.
  double atom_cost(double t) const {
    const double v0 = workload_before(t);
    const double x = atom_at(t) * span_;
    const auto& p = params_;
    const double a0 = t + v0;
    double late = 0.0;
    if (x <= 0.0) late = std::max(a0, 0.0);
    else if (a0 >= 0.0) late = a0 + x / 2.0;
    else if (a0 + x > 0.0) late = (a0 + x) * (a0 + x) / (2.0 * x);
    return p.beta1 * std::max(-t, 0.0) + p.alpha * (v0 + x / 2.0) + p.beta2 * late;
  }

  /// Total cost over the population, integrated exactly.
  double social_cost() const {
    double total = 0.0;
    for (const auto& a : strategy_.atoms) total += a.mass * atom_cost(a.t);
    for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
      const double lo = knots_[k], hi = knots_[k + 1];
      const double dens = density(k);
      if (dens <= 0.0 || hi <= lo) continue;
      // pieces on which workload and both cost kinks are linear
      std::vector<double> cuts{lo, hi, 0.0};
      const double r = rate(k);
      if (r < 1.0) cuts.push_back(lo + after_[k] / (1.0 - r));
      std::sort(cuts.begin(), cuts.end());
      std::vector<double> pieces;
      for (double c : cuts)
        if (c >= lo && c <= hi) pieces.push_back(c);
      std::vector<double> all = pieces;
      for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
        const double u = pieces[i], w = pieces[i + 1];
        const double eu = u + value(k, u), ew = w + value(k, w);
        if ((eu < 0.0) != (ew < 0.0) && ew != eu) all.push_back(u + (w - u) * (-eu) / (ew - eu));
      }
      std::sort(all.begin(), all.end());
      for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        const double u = all[i], w = all[i + 1];
        if (w <= u) continue;
        total += dens * 0.5 * (w - u) * (cost_given(u, value(k, u)) + cost_given(w, value(k, w)));
      }
    }
    return params_.big_lambda() * total;
  }

 private:
  static double evolve(double v, double r, double h) {
    if (r >= 1.0) return v + (r - 1.0) * h;
    return std::max(0.0, v - (1.0 - r) * h);
  }

  double value(std::size_t k, double t) const { return evolve(after_[k], rate(k), t - knots_[k]); }

  double atom_at(double t) const {
    double m = 0.0;
    for (const auto& a : strategy_.atoms)
      if (a.t == t) m += a.mass;
    return m;
  }

  // density on [knots_[k], knots_[k+1])
  double density(std::size_t k) const {
    const double mid = 0.5 * (knots_[k] + knots_[k + 1]);
    double d = 0.0;
    for (const auto& s : strategy_.segments)
      if (s.start <= mid && mid < s.end) d += s.density;
    return d;
  }

  // inflow of work per unit time
  double rate(std::size_t k) const { return k + 1 < knots_.size() ? density(k) * span_ : 0.0; }

  double cost_given(double t, double v) const {
    const auto& p = params_;
    return p.beta1 * std::max(-t, 0.0) + p.alpha * v + p.beta2 * std::max(t + v, 0.0);
  }

  FluidSolution strategy_;
  ModelParams params_;
  double span_;
  std::vector<double> knots_;
  std::vector<double> after_;
};

}  // namespace arrivalq
