#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace synthgym::stats {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  /// Set when the statistic is undefined and p was assigned by convention.
  bool degenerate = false;
};

/// Survival function of the Kolmogorov distribution, Q(x) = 2 sum (-1)^(k-1) exp(-2 k^2 x^2).
double kolmogorov_sf(double x);
/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
double f_cdf(double f, double df1, double df2);

double mean(std::span<const double> x);
/// Unbiased sample variance (n - 1 denominator).
double variance(std::span<const double> x);

/// Two-sample KS: supremum ECDF gap, asymptotic p with n_a n_b / (n_a + n_b).
TestResult ks2_test(std::span<const double> a, std::span<const double> b);
/// Two-sample t with the pooled S = sqrt((s_a^2 + s_b^2) / 2) and n_a + n_b - 2 df.
TestResult t_test(std::span<const double> a, std::span<const double> b);
/// Variance ratio s_a^2 / s_b^2 with a two-sided p from the F distribution.
TestResult f_test(std::span<const double> a, std::span<const double> b);
/// One-way ANOVA across groups.
TestResult anova_oneway(std::span<const std::vector<double>> groups);
/// Categorical comparison: one-way ANOVA of ordinal class ranks, groups are the two sources.
TestResult categorical_f_test(std::span<const double> a_ranks, std::span<const double> b_ranks);

struct ThreeSigmaResult {
  double fraction = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool pass = false;
};

/// Share of syn inside mean(real) +- k sd(real); pass iff the share exceeds coverage.
ThreeSigmaResult three_sigma_test(std::span<const double> real, std::span<const double> syn,
                                  double sigma_multiplier = 2.0, double coverage = 0.7);

struct TauResult {
  double tau = 0.0;
  bool degenerate = false;
};

/// Kendall tau-b in O(n log n).
TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y);

namespace serial {
/// Pair-enumeration reference for kendall_tau_b.
TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y);
}  // namespace serial

}  // namespace synthgym::stats
