#include "fastnose/rng.hpp"
#include "fastnose/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fastnose;

TEST(Gamma, ClosedFormsForSmallShapes) {
  for (double x : {0.01, 0.5, 1.0, 2.5, 7.0, 30.0}) {
    EXPECT_NEAR(gamma_p(1.0, x), 1.0 - std::exp(-x), 1e-13) << x;
    EXPECT_NEAR(gamma_p(0.5, x), std::erf(std::sqrt(x)), 1e-13) << x;
    EXPECT_NEAR(gamma_q(2.0, x), (1.0 + x) * std::exp(-x), 1e-13) << x;
  }
}

TEST(Gamma, ComplementsSumToOne) {
  for (double a : {0.3, 1.0, 4.5, 20.0})
    for (double x : {0.1, 3.0, 5.5, 25.0}) EXPECT_NEAR(gamma_p(a, x) + gamma_q(a, x), 1.0, 1e-14);
  EXPECT_THROW(gamma_p(0.0, 1.0), std::invalid_argument);
}

TEST(ChiSquare, SurvivalMatchesClosedForms) {
  for (double x : {0.0, 0.3, 2.0, 9.0, 40.0}) {
    EXPECT_NEAR(chi2_sf(x, 2.0), std::exp(-x / 2.0), 1e-13);
    EXPECT_NEAR(chi2_sf(x, 1.0), std::erfc(std::sqrt(x / 2.0)), 1e-13);
  }
  // tabulated 5 % critical values
  EXPECT_NEAR(chi2_sf(3.841459, 1.0), 0.05, 1e-6);
  EXPECT_NEAR(chi2_sf(11.070498, 5.0), 0.05, 1e-6);
  EXPECT_NEAR(chi2_sf(18.307038, 10.0), 0.05, 1e-6);
}

TEST(PearsonChi2, UniformTableIsIndependent) {
  const auto r = pearson_chi2({{10, 10, 10}, {10, 10, 10}, {10, 10, 10}});
  EXPECT_DOUBLE_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.dof, 4);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(PearsonChi2, TwoByTwoHandComputed) {
  // expected counts 15/15/15/15, each cell off by 5 -> 4 * 25/15
  const auto r = pearson_chi2({{20, 10}, {10, 20}});
  EXPECT_NEAR(r.statistic, 100.0 / 15.0, 1e-12);
  EXPECT_EQ(r.dof, 1);
  EXPECT_NEAR(r.p_value, std::erfc(std::sqrt(r.statistic / 2.0)), 1e-12);
}

TEST(PearsonChi2, ConfinedClassIsExtreme) {
  const auto r = pearson_chi2({{500, 0, 0}, {0, 500, 500}});
  EXPECT_LT(r.p_value, 1e-6);
}

TEST(PearsonChi2, EmptyColumnsCollapsedWithWarning) {
  const auto r = pearson_chi2({{5, 0, 7}, {6, 0, 4}});
  EXPECT_EQ(r.dof, 1);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_THROW(pearson_chi2({{5, 0}, {6, 0}}), std::invalid_argument);
}

TEST(Kolmogorov, SeriesValues) {
  EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 1e-4);
  EXPECT_NEAR(kolmogorov_q(1.6276), 0.01, 1e-4);
  EXPECT_DOUBLE_EQ(kolmogorov_q(0.0), 1.0);
}

TEST(KsUniform, AcceptsUniformRejectsSkewed) {
  Rng rng(5);
  std::vector<double> u(500), s(500);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform();
    s[i] = u[i] * u[i];
  }
  EXPECT_GT(ks_uniform(u).p_value, 0.01);
  EXPECT_LT(ks_uniform(s).p_value, 1e-6);
}

TEST(KsUniform, StatisticByHand) {
  // ecdf of {0.1, 0.6}: D = max(0.5 - 0.1, 0.6 - 0.5, 1 - 0.6) = 0.4
  EXPECT_NEAR(ks_uniform({0.6, 0.1}).statistic, 0.4, 1e-15);
}

TEST(Summary, MeanAndSampleStd) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_NEAR(stddev(v), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(stddev(std::vector<double>{3.0}), 0.0);
}
