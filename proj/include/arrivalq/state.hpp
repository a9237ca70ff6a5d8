#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace arrivalq {

/// Truncated queue-length distribution p_0..p_nmax at time t.
struct StateDistribution {
  std::vector<double> probs;
  double t = 0.0;

  std::size_t nmax() const { return probs.empty() ? 0 : probs.size() - 1; }
  double p0() const { return probs.empty() ? 0.0 : probs.front(); }
  double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

  /// Empty system (point mass at zero) with states 0..nmax.
  static StateDistribution empty(std::size_t nmax, double t = 0.0) {
    StateDistribution s;
    s.probs.assign(nmax + 1, 0.0);
    s.probs[0] = 1.0;
    s.t = t;
    return s;
  }

  /// Point mass at k customers.
  static StateDistribution point(std::size_t k, std::size_t nmax, double t = 0.0) {
    StateDistribution s;
    s.probs.assign(nmax + 1, 0.0);
    s.probs[k] = 1.0;
    s.t = t;
    return s;
  }
};

}  // namespace arrivalq
