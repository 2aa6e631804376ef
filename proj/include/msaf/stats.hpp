#pragma once

#include <span>
#include <string>
#include <vector>

namespace msaf {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  std::vector<std::size_t> group_sizes;
  std::string method;
  bool tie_corrected = false;  // correction applied (always for rank tests)
  bool had_ties = false;
};

/// Royston's approximation for the W statistic and its p-value.
/// Throws SampleSizeOutOfRange outside 3..5000 and ConstantSample.
TestResult shapiro_wilk(std::span<const double> x);

/// Tie-corrected H with a chi-square(k - 1) tail. Throws TooFewGroups below two
/// groups and DegenerateData for empty groups, N < 3 or all values equal.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct PairwiseResult {
  std::size_t group_a = 0;
  std::size_t group_b = 0;
  double z = 0.0;
  double p_value = 1.0;  // two-sided, unadjusted
  double p_adjusted = 1.0;  // Bonferroni over k(k-1)/2 pairs, capped at 1
};

/// Dunn's z for every pair (a < b) in lexicographic order.
std::vector<PairwiseResult> dunn_posthoc(const std::vector<std::vector<double>>& groups);

/// Midranks (1-based) of the pooled values.
std::vector<double> midranks(std::span<const double> values);

double normal_sf(double z);
/// Inverse standard normal CDF (Wichura's AS 241, ~1e-16 relative accuracy).
double normal_quantile(double p);
/// Upper regularized incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);
/// Throws InvalidDomain for x < 0 or df <= 0.
double chi_square_sf(double x, double df);

}  // namespace msaf
