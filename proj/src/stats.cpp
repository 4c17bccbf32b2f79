#include "fastnose/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fastnose {

namespace {

constexpr int kMaxIter = 10000;
constexpr double kEps = 1e-16;

double series_p(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double continued_fraction_q(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_p needs a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return series_p(a, x);
  return 1.0 - continued_fraction_q(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - series_p(a, x);
  return continued_fraction_q(a, x);
}

double chi2_sf(double statistic, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("chi-square needs dof > 0");
  if (statistic <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * statistic);
}

ChiSquareResult pearson_chi2(const std::vector<std::vector<double>>& table) {
  ChiSquareResult res;
  if (table.empty()) throw std::invalid_argument("empty contingency table");
  const std::size_t cols = table.front().size();
  for (const auto& r : table)
    if (r.size() != cols) throw std::invalid_argument("ragged contingency table");

  std::vector<double> row_sum(table.size(), 0.0), col_sum(cols, 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (table[i][j] < 0.0) throw std::invalid_argument("negative count in contingency table");
      row_sum[i] += table[i][j];
      col_sum[j] += table[i][j];
    }
  std::vector<std::size_t> rows_kept, cols_kept;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (row_sum[i] > 0.0) rows_kept.push_back(i);
    else res.warnings.push_back("empty row " + std::to_string(i) + " collapsed");
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (col_sum[j] > 0.0) cols_kept.push_back(j);
    else res.warnings.push_back("empty column " + std::to_string(j) + " collapsed");
  }
  if (rows_kept.size() < 2 || cols_kept.size() < 2)
    throw std::invalid_argument("chi-square needs at least 2 non-empty rows and columns");

  double total = 0.0;
  for (auto i : rows_kept) total += row_sum[i];
  double stat = 0.0;
  for (auto i : rows_kept)
    for (auto j : cols_kept) {
      const double e = row_sum[i] * col_sum[j] / total;
      const double d = table[i][j] - e;
      stat += d * d / e;
    }
  res.statistic = stat;
  res.dof = static_cast<int>((rows_kept.size() - 1) * (cols_kept.size() - 1));
  res.p_value = chi2_sf(stat, res.dof);
  return res;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges to 1 within double precision
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_uniform(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("KS test needs samples");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp(x[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace fastnose
