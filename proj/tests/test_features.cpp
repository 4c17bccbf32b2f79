#include "fastnose/features.hpp"
#include "fastnose/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace fastnose;

namespace {

// Straight-line reading of the normalisation, kept deliberately naive.
std::vector<double> reference_g(const std::vector<double>& wt, const std::vector<double>& wp) {
  double mt = std::log(wt[0]), mp = std::log(wp[0]);
  for (double v : wt) mt = std::max(mt, std::log(v));
  for (double v : wp) mp = std::max(mp, std::log(v));
  std::vector<double> g;
  for (std::size_t i = 0; i < wt.size(); ++i) g.push_back(std::log(wt[i]) / mt - std::log(wp[i]) / mp);
  return g;
}

std::vector<double> random_window(Rng& rng) {
  std::vector<double> w(50);
  for (auto& v : w) v = std::exp(rng.uniform(std::log(2.0), std::log(1e7)));
  return w;
}

}  // namespace

TEST(CycleGrid, BoundariesAndPhase) {
  const CycleGrid g{7, 50};
  EXPECT_TRUE(g.aligned(57));
  EXPECT_FALSE(g.aligned(58));
  EXPECT_EQ(g.next_boundary(58), 107);
  EXPECT_EQ(g.next_boundary(57), 57);
  EXPECT_EQ(g.phase(-1), 42);
}

TEST(ExtractWindow, ConstantSeries) {
  std::vector<double> s(300, 1234.5);
  const auto w = extract_window({s, 100}, 150, CycleGrid{0, 50});
  EXPECT_EQ(w, std::vector<double>(50, 1234.5));
}

TEST(ExtractWindow, AdjacentWindowsTileTheSlice) {
  std::vector<double> s(400);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
  const CycleGrid g{0, 50};
  auto a = extract_window({s, 0}, 100, g);
  const auto b = extract_window({s, 0}, 150, g);
  a.insert(a.end(), b.begin(), b.end());
  EXPECT_EQ(a, std::vector<double>(s.begin() + 100, s.begin() + 200));
}

TEST(ExtractWindow, BoundsAndAlignment) {
  std::vector<double> s(400, 1.0);
  const CycleGrid g{0, 50};
  EXPECT_NO_THROW(extract_window({s, 0}, 350, g));
  // one sample later is both misaligned and past the end
  EXPECT_THROW(extract_window({s, 0}, 351, g), std::invalid_argument);
  const CycleGrid g1{1, 50};
  EXPECT_NO_THROW(extract_window({s, 0}, 301, g1));
  EXPECT_THROW(extract_window({s, 0}, 351, g1), std::out_of_range);
  EXPECT_THROW(extract_window({s, 100}, 50, g), std::out_of_range);
}

TEST(Normalize, IdenticalWindowsGiveZero) {
  Rng rng(1);
  const auto w = random_window(rng);
  for (double v : normalize(w, w)) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, FlatWindowsGiveZero) {
  const std::vector<double> a(50, 3.0), b(50, 9000.0);
  for (double v : normalize(a, b)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Normalize, MatchesReferenceOnRandomWindows) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto wt = random_window(rng), wp = random_window(rng);
    const auto g = normalize(wt, wp);
    const auto r = reference_g(wt, wp);
    for (std::size_t k = 0; k < g.size(); ++k)
      ASSERT_LE(std::abs(g[k] - r[k]), 1e-12 * std::max(1.0, std::abs(r[k])));
  }
}

TEST(Normalize, SwappingWindowsNegates) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto wt = random_window(rng), wp = random_window(rng);
    const auto g = normalize(wt, wp), h = normalize(wp, wt);
    for (std::size_t k = 0; k < g.size(); ++k) ASSERT_EQ(g[k], -h[k]);
  }
}

TEST(Normalize, RejectsBadInput) {
  std::vector<double> ok(50, 10.0), neg(50, 10.0), ones(50, 1.0);
  neg[3] = -1.0;
  EXPECT_THROW(normalize(neg, ok), std::invalid_argument);
  EXPECT_THROW(normalize(ok, ones), std::invalid_argument);
  EXPECT_THROW(normalize(ok, std::vector<double>(49, 10.0)), std::invalid_argument);
}

TEST(NormalizeSensors, GlobalScopeUsesSharedMax) {
  const std::vector<std::vector<double>> t{{std::exp(1.0), std::exp(2.0)}, {std::exp(4.0), std::exp(4.0)}};
  const std::vector<std::vector<double>> p{{std::exp(2.0), std::exp(2.0)}, {std::exp(2.0), std::exp(2.0)}};
  const auto g = normalize_sensors(t, p, MaxScope::Global);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g[0], 0.25 - 1.0);
  EXPECT_DOUBLE_EQ(g[1], 0.5 - 1.0);
  EXPECT_DOUBLE_EQ(g[2], 0.0);
  const auto per = normalize_sensors(t, p, MaxScope::PerSensor);
  EXPECT_DOUBLE_EQ(per[0], 0.5 - 1.0);
  EXPECT_DOUBLE_EQ(per[1], 0.0);
}

TEST(PhaseLockedFeature, RecordsPhaseAndAnchor) {
  std::vector<double> s(1000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 100.0 + static_cast<double>(i % 50);
  const CycleGrid g{0, 50};
  const auto f = phase_locked_feature({SeriesView{s, 0}, SeriesView{s, 0}}, 500, 100, 463, g, MaxScope::PerSensor);
  EXPECT_EQ(f.rho_ms, 13);
  EXPECT_EQ(f.t_pre_ms, 100);
  ASSERT_EQ(f.g.size(), 100u);
  for (double v : f.g) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SpectralPeak, SinusoidUnderLog) {
  const std::size_t n = 1101;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::exp(std::sin(2.0 * std::numbers::pi * 20.0 * static_cast<double>(i) / 1000.0));
  const auto t = spectral_peak(d, SpectralTransform::Log);
  EXPECT_FALSE(t.degenerate);
  EXPECT_NEAR(t.freq_hz, 20.0, 1000.0 / 1100.0);
}

TEST(SpectralPeak, ConstantIsDegenerate) {
  const std::vector<double> d(500, 42.0);
  const auto t = spectral_peak(d, SpectralTransform::Log);
  EXPECT_TRUE(t.degenerate);
  EXPECT_EQ(t.magnitude, 0.0);
  EXPECT_EQ(t.freq_hz, 0.0);
}

TEST(SpectralPeak, AntiCorrelatedPhasesDifferByPi) {
  // sensor 0 tracks odour A, sensor 1 tracks odour B
  const std::size_t n = 1101;
  for (double f : {2.0, 5.0, 10.0, 20.0}) {
    std::vector<double> a(n), b_corr(n), b_anti(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / 1000.0;
      a[i] = std::exp(0.3 * std::sin(ph));
      b_corr[i] = std::exp(0.3 * std::sin(ph));
      b_anti[i] = std::exp(0.3 * std::sin(ph + std::numbers::pi));
    }
    const auto ta = spectral_peak(a, SpectralTransform::Log);
    const auto tc = spectral_peak(b_corr, SpectralTransform::Log);
    const auto tb = spectral_peak(b_anti, SpectralTransform::Log);
    EXPECT_EQ(ta.freq_hz, tb.freq_hz);
    EXPECT_EQ(ta.freq_hz, tc.freq_hz);
    EXPECT_NEAR(std::remainder(tc.phase - ta.phase, 2.0 * std::numbers::pi), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(std::remainder(tb.phase - ta.phase, 2.0 * std::numbers::pi)), std::numbers::pi, 1e-9);
  }
}

TEST(SpectralPeak, IdentityTransformAcceptsNonPositive) {
  std::vector<double> d(201);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::sin(2.0 * std::numbers::pi * 50.0 * static_cast<double>(i) / 1000.0);
  EXPECT_THROW(spectral_peak(d, SpectralTransform::Log), std::invalid_argument);
  EXPECT_NEAR(spectral_peak(d, SpectralTransform::Identity).freq_hz, 50.0, 5.0);
}

TEST(SpectralFeature, WindowIsOnsetToOffsetPlusTail) {
  std::vector<double> s(3000, 10.0);
  s[1500] = 20.0;  // inside [1000, 1000 + 400 + 100]
  const auto inside = spectral_feature({SeriesView{s, 0}}, 1000, 1400, 100, SpectralTransform::Log);
  EXPECT_FALSE(inside.sensors[0].degenerate);
  const auto outside = spectral_feature({SeriesView{s, 0}}, 1000, 1399, 100, SpectralTransform::Log);
  EXPECT_TRUE(outside.sensors[0].degenerate);
  EXPECT_EQ(inside.flat().size(), 3u);
}

TEST(FeatureCsv, RoundTripIsExact) {
  Rng rng(9);
  std::vector<PhaseLockedFeature> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].trial_id = "A0000" + std::to_string(i);
    rows[i].t_ms = 1000 + 50 * i;
    rows[i].g.resize(4);
    for (auto& v : rows[i].g) v = rng.normal() * 1e-3;
  }
  const auto table = make_phase_table(rows);
  std::stringstream ss;
  write_feature_csv(ss, table);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "feature_id,trial_id,t_ms,g_0,g_1,g_2,g_3");
  const auto back = read_feature_csv(ss);
  EXPECT_EQ(back.values, table.values);
  EXPECT_EQ(back.trial_id, table.trial_id);
  EXPECT_EQ(back.t_ms, table.t_ms);
}

TEST(FeatureCsv, SpectralColumns) {
  SpectralFeature f;
  f.trial_id = "B00001";
  f.sensors.resize(4);
  const auto table = make_spectral_table({f}, 4);
  ASSERT_EQ(table.columns.size(), 12u);
  EXPECT_EQ(table.columns[0], "s0_freq");
  EXPECT_EQ(table.columns[11], "s3_phase");
}
