#pragma once

#include <cstddef>
#include <span>

namespace sapo::stats {

struct WilcoxonResult {
  std::size_t n = 0;      // pairs with a nonzero difference
  double w_plus = 0.0;    // rank sum of positive differences (x > y)
  double w_minus = 0.0;
  double statistic = 0.0; // min(w_plus, w_minus)
  double p_value = 1.0;   // two-sided
  bool exact = true;      // p from full enumeration rather than the normal approximation
  bool degenerate = false; // no nonzero differences; statistic carries no information
};

/// Paired Wilcoxon signed-rank test. Zero differences are dropped, tied
/// magnitudes get average ranks. Exact p-values by enumerating all sign
/// assignments for n <= 20, normal approximation with tie correction above.
/// Throws std::invalid_argument on length mismatch.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

}  // namespace sapo::stats
