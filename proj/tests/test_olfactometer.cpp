#include "fastnose/olfactometer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fastnose;

namespace {

StimulusSpec train_spec(double f, CorrelationMode mode, double onset = 0.0) {
  StimulusSpec s;
  s.odours = {Odour::IA, Odour::EB};
  s.pulse_duration_ms = 1000.0;
  s.modulation_frequency_hz = f;
  s.mode = mode;
  s.onset_ms = onset;
  return s;
}

StimulusSpec single_spec(Odour o, double duration, double conc, double onset = 0.0) {
  StimulusSpec s;
  s.odours = {o};
  s.pulse_duration_ms = duration;
  s.concentration = conc;
  s.onset_ms = onset;
  return s;
}

}  // namespace

TEST(Schedule, AntiCorrelatedHalfCycleShift) {
  const auto sch = build_schedule(train_spec(20.0, CorrelationMode::AntiCorrelated));
  const auto ia = sch.pulses(Odour::IA), eb = sch.pulses(Odour::EB);
  ASSERT_EQ(ia.size(), 20u);
  ASSERT_EQ(eb.size(), 20u);
  EXPECT_DOUBLE_EQ(ia[0].begin_ms, 0.0);
  EXPECT_DOUBLE_EQ(ia[0].end_ms, 25.0);
  EXPECT_DOUBLE_EQ(ia[1].begin_ms, 50.0);
  EXPECT_DOUBLE_EQ(ia[1].end_ms, 75.0);
  EXPECT_DOUBLE_EQ(eb[0].begin_ms, 25.0);
  EXPECT_DOUBLE_EQ(eb[0].end_ms, 50.0);
  EXPECT_DOUBLE_EQ(eb[1].begin_ms, 75.0);
  EXPECT_DOUBLE_EQ(eb[1].end_ms, 100.0);
}

TEST(Schedule, CorrelatedSixtyHertzSharesWindows) {
  const auto sch = build_schedule(train_spec(60.0, CorrelationMode::Correlated));
  const auto ia = sch.pulses(Odour::IA), eb = sch.pulses(Odour::EB);
  ASSERT_EQ(ia.size(), eb.size());
  for (std::size_t k = 0; k < ia.size(); ++k) {
    EXPECT_DOUBLE_EQ(ia[k].begin_ms, eb[k].begin_ms);
    EXPECT_DOUBLE_EQ(ia[k].end_ms, eb[k].end_ms);
    if (k + 1 < ia.size()) {
      EXPECT_NEAR(ia[k].end_ms - ia[k].begin_ms, 1000.0 / 120.0, 1e-9);
    }
  }
}

TEST(Schedule, ShatteringDutyAndCarrierCompensation) {
  const auto sch = build_schedule(single_spec(Odour::Eu, 1000.0, 0.6, 100.0), 1300.0);
  const auto duty = sch.duty_trace(Odour::Eu);
  double sum = 0.0;
  for (std::size_t i = 100; i < 1100; ++i) sum += duty[i];
  EXPECT_NEAR(sum / 1000.0, 0.6, 1e-12);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(duty[i], 0.0);
  // carrier on manifold 0 gives up 0.6 of one valve during the pulse
  double carrier = 0.0;
  for (std::size_t i = 100; i < 1100; ++i) carrier += sch.tick_duty(0, i);
  EXPECT_NEAR(carrier / 1000.0, 0.4, 1e-12);
  EXPECT_DOUBLE_EQ(sch.tick_duty(0, 50), 1.0);
}

TEST(Schedule, ShatteringPeriodIsTwoMs) {
  const auto sch = build_schedule(single_spec(Odour::IA, 100.0, 0.4), 100.0);
  // valve index 2 carries IA; open 0.8 ms at the start of each 2 ms period
  for (std::size_t j = 0; j < 200; ++j) {
    const double t = 0.5 * static_cast<double>(j % 4);
    const double expect = t < 0.5 ? 1.0 : (t < 1.0 ? 0.6 : 0.0);
    ASSERT_NEAR(sch.open_fraction(2, j), expect, 1e-12) << j;
  }
}

TEST(ScheduleProperty, FlowConservedOnEveryManifold) {
  for (double c : {0.2, 0.4, 0.6, 0.8, 1.0})
    for (auto mode : {CorrelationMode::Correlated, CorrelationMode::AntiCorrelated})
      for (double f : {1.0, 20.0, 60.0}) {
        auto spec = train_spec(f, mode, 37.0);
        spec.concentration = c;
        const auto sch = build_schedule(spec, 1200.0);
        for (int m : {0, 1})
          for (double v : sch.manifold_flow(m)) ASSERT_NEAR(v, 1.0, 1e-12);
      }
}

TEST(ScheduleProperty, CrossCorrelationPeakLag) {
  for (double f : {5.0, 10.0, 20.0}) {
    const int period = static_cast<int>(1000.0 / f);
    for (auto mode : {CorrelationMode::Correlated, CorrelationMode::AntiCorrelated}) {
      const auto tr = transport(build_schedule(train_spec(f, mode), 1000.0), TransportParams{});
      const auto& a = tr.odour[index_of(Odour::IA)];
      const auto& b = tr.odour[index_of(Odour::EB)];
      int best = 0;
      double best_v = -1.0;
      for (int lag = 0; lag < period; ++lag) {
        // whole periods past the transport transient
        const std::size_t start = 200, stop = start + (b.size() - start) / period * period - period;
        double s = 0.0;
        for (std::size_t i = start; i < stop; ++i) s += a[i] * b[i + lag];
        if (s > best_v + 1e-12) {
          best_v = s;
          best = lag;
        }
      }
      EXPECT_EQ(best, mode == CorrelationMode::Correlated ? 0 : period / 2) << f;
    }
  }
}

TEST(Schedule, RejectsInvalidStimuli) {
  EXPECT_THROW(build_schedule(single_spec(Odour::IA, 1.5, 1.0)), std::invalid_argument);
  auto anti = train_spec(20.0, CorrelationMode::AntiCorrelated);
  anti.odours = {Odour::IA};
  EXPECT_THROW(build_schedule(anti), std::invalid_argument);
  EXPECT_THROW(build_schedule(train_spec(300.0, CorrelationMode::Correlated)), std::invalid_argument);
  EXPECT_THROW(validate_protocol_stimulus(single_spec(Odour::IA, 1000.0, 0.3)), std::invalid_argument);
  EXPECT_THROW(validate_protocol_stimulus(train_spec(3.0, CorrelationMode::Correlated)), std::invalid_argument);
  EXPECT_NO_THROW(validate_protocol_stimulus(train_spec(60.0, CorrelationMode::AntiCorrelated)));
}

TEST(Schedule, GateMaskMarksOpenValves) {
  const auto sch = build_schedule(train_spec(10.0, CorrelationMode::AntiCorrelated), 1000.0);
  EXPECT_EQ(sch.gate_mask(10), 0b0111u);   // carriers + IA
  EXPECT_EQ(sch.gate_mask(60), 0b1011u);   // carriers + EB
}

TEST(Transport, ClosedScheduleIsZero) {
  const auto sch = build_schedule(single_spec(Odour::IA, 100.0, 1.0, 500.0), 400.0);
  const auto tr = transport(sch, TransportParams{});
  for (const auto& o : tr.odour)
    for (double v : o) ASSERT_EQ(v, 0.0);
}

TEST(Transport, StepReachesOneMinusInverseE) {
  std::vector<double> duty(100, 1.0);
  const auto y = transport_signal(duty, TransportParams{10.0, 8.0});
  for (int i = 0; i <= 10; ++i) EXPECT_EQ(y[i], 0.0);
  EXPECT_NEAR(y[18], 1.0 - std::exp(-1.0), 1e-12);
}

TEST(Transport, ShatteringRipple) {
  const auto sch = build_schedule(single_spec(Odour::IA, 2000.0, 0.5), 2000.0);
  const TransportParams tp{10.0, 8.0};
  const auto y = transport(sch, tp).odour[index_of(Odour::IA)];
  double m = 0.0, lo = 1.0, hi = 0.0;
  for (std::size_t i = 1000; i < 2000; ++i) {
    m += y[i];
    lo = std::min(lo, y[i]);
    hi = std::max(hi, y[i]);
  }
  EXPECT_NEAR(m / 1000.0, 0.5, 1e-3);
  // the 2 ms carrier is the Nyquist tone of the 1 kHz grid: gain (1 - a) / (1 + a)
  const double a = std::exp(-1.0 / tp.tau_ms);
  EXPECT_NEAR(0.5 * (hi - lo), 0.5 * (1.0 - a) / (1.0 + a), 1e-9);
  // same order as the continuous-time attenuation
  const double cont = 1.0 / std::sqrt(1.0 + std::pow(2.0 * M_PI * tp.tau_ms / 2.0, 2));
  EXPECT_LT((1.0 - a) / (1.0 + a), 2.0 * cont);
}

TEST(Fidelity, IdealSquareWave) {
  const auto sch = build_schedule(train_spec(10.0, CorrelationMode::Correlated, 200.0), 1300.0);
  const auto duty = sch.duty_trace(Odour::IA);
  const auto f = fidelity(duty, sch, Odour::IA, 0.0);
  EXPECT_DOUBLE_EQ(f.mean, 1.0);
  EXPECT_DOUBLE_EQ(f.stddev, 0.0);
}

TEST(Fidelity, ConstantTraceIsZero) {
  const auto sch = build_schedule(train_spec(10.0, CorrelationMode::Correlated, 200.0), 1300.0);
  const std::vector<double> flat(1300, 0.3);
  EXPECT_DOUBLE_EQ(fidelity(flat, sch, Odour::IA).mean, 0.0);
}

TEST(Fidelity, NoPulsesIsAnError) {
  const auto sch = build_schedule(single_spec(Odour::IA, 100.0, 1.0, 100.0), 300.0);
  const std::vector<double> flat(300, 0.0);
  EXPECT_THROW(fidelity(flat, sch, Odour::Eu), std::invalid_argument);
}

TEST(Fidelity, MatchesFirstOrderClosedForm) {
  const TransportParams tp{10.0, 8.0};
  for (double f : {10.0, 20.0}) {
    const auto sch = build_schedule(train_spec(f, CorrelationMode::Correlated, 200.0), 1400.0);
    const auto y = transport(sch, tp).odour[index_of(Odour::IA)];
    const double half = 500.0 / f;
    const double analytic = 1.0 - std::exp(-half / tp.tau_ms);
    EXPECT_NEAR(fidelity(y, sch, Odour::IA, tp.delay_ms).mean / analytic, 1.0, 0.01) << f;
  }
}

TEST(FidelityProperty, NonIncreasingInFrequency) {
  double prev = 2.0;
  for (double f : kProtocolFrequenciesHz) {
    const auto sch = build_schedule(train_spec(f, CorrelationMode::Correlated, 200.0), 1400.0);
    const auto y = transport(sch, TransportParams{}).odour[index_of(Odour::IA)];
    const double fid = fidelity(y, sch, Odour::IA).mean;
    EXPECT_LE(fid, prev + 1e-12) << f;
    prev = fid;
  }
}
