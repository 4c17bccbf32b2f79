#pragma once

#include <span>
#include <string>
#include <vector>

namespace fastnose {

/// Regularised lower incomplete gamma P(a, x) and upper Q(a, x) = 1 - P,
/// by series for x < a + 1 and Lentz continued fraction otherwise.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Survival function of the chi-square distribution with `dof` degrees of freedom.
double chi2_sf(double statistic, double dof);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::vector<std::string> warnings;  // collapsed empty rows/columns
};

/// Pearson chi-square independence test on a rows x cols contingency table.
/// All-zero rows or columns are dropped (with a warning). Throws if fewer
/// than 2 rows or 2 columns remain.
ChiSquareResult pearson_chi2(const std::vector<std::vector<double>>& table);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against U(0, 1). The p-value uses the
/// asymptotic Kolmogorov distribution with the sqrt(n) + 0.12 + 0.11/sqrt(n)
/// small-sample correction.
KsResult ks_uniform(std::vector<double> samples);

/// Kolmogorov survival function Q_KS(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than 2 values.
double stddev(std::span<const double> v);

}  // namespace fastnose
