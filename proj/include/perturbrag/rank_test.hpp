#pragma once

#include <span>
#include <vector>

namespace perturbrag {

struct RankTestResult {
    double p_value = 1.0;
    double mean_diff = 0.0; // mean(y) - mean(x)
    double u_statistic = 0.0; // U for sample x
    bool exact = false;
};

/// Samples at or below these sizes get the exact permutation p-value.
inline constexpr std::size_t exact_max_min_size = 8;
inline constexpr std::size_t exact_max_total = 20;

/// Two-sided Mann-Whitney U (Wilcoxon rank-sum) test of x against y.
///
/// Ties get midranks. For min(|x|,|y|) <= 8 and |x|+|y| <= 20 the p-value is
/// exact: P(|S - E[S]| >= |s - E[S]|) over all C(n+m, n) relabelings, S the
/// rank sum of x. Larger samples use the normal approximation with tie
/// correction and a 0.5 continuity correction.
RankTestResult rank_sum_test(std::span<const double> x, std::span<const double> y);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
/// Throws ArgumentError for values outside [0,1].
std::vector<double> bh_adjust(std::span<const double> p_values);

} // namespace perturbrag
