#include "fastnose/evaluation.hpp"
#include "fastnose/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fastnose;

namespace {

LabelingParams pulse(Odour o = Odour::IA) {
  LabelingParams p;
  p.t_onset_ms = 0;
  p.t_offset_ms = 1000;
  p.odour = o;
  return p;
}

PredictionTimeline timeline(Odour truth, std::vector<Odour> pred, std::int64_t onset = 1000, int duration = 1000,
                            std::int64_t first = 1020) {
  PredictionTimeline tl;
  tl.trial_id = "T";
  tl.truth = truth;
  tl.duration_ms = duration;
  tl.onset_ms = onset;
  tl.offset_ms = onset + duration;
  tl.first_window_ms = first;
  tl.predicted = std::move(pred);
  return tl;
}

Trial at(Odour o, std::int64_t onset) {
  Trial t;
  t.trial_id = "A" + std::to_string(onset);
  t.odour_a = o;
  t.onset_ms = onset;
  return t;
}

}  // namespace

TEST(Labeling, AlgorithmExamples) {
  EXPECT_EQ(label_feature(500, pulse()), Odour::IA);
  EXPECT_EQ(label_feature(980, pulse()), std::nullopt);
  EXPECT_EQ(label_feature(1010, pulse()), Odour::Blank);
}

TEST(Labeling, Boundaries) {
  EXPECT_EQ(label_feature(0, pulse()), Odour::IA);
  EXPECT_EQ(label_feature(959, pulse()), Odour::IA);
  EXPECT_EQ(label_feature(960, pulse()), std::nullopt);
  EXPECT_EQ(label_feature(1009, pulse()), std::nullopt);
  EXPECT_EQ(label_feature(-1, pulse()), std::nullopt);
  EXPECT_EQ(label_feature(500, pulse(Odour::Blank)), Odour::Blank);
}

TEST(LabelingProperty, PartitionsTime) {
  int odour = 0, blank = 0, rejected = 0;
  for (std::int64_t t = -100; t <= 2000; ++t) {
    const auto l = label_feature(t, pulse(Odour::EB));
    if (!l) ++rejected;
    else if (*l == Odour::EB) ++odour;
    else if (*l == Odour::Blank) ++blank;
    else FAIL() << "unexpected label at " << t;
  }
  EXPECT_EQ(odour, 960);
  EXPECT_EQ(blank, 2000 - 1010 + 1);
  EXPECT_EQ(odour + blank + rejected, 2101);
}

TEST(OnsetOffset, AllBlankHasNoOnset) {
  const auto r = onset_offset(timeline(Odour::IA, std::vector<Odour>(60, Odour::Blank)));
  EXPECT_FALSE(r.onset_ms);
  EXPECT_EQ(r.offset_ms, 50);
}

TEST(OnsetOffset, PerfectTimelineWithinOnePitch) {
  // windows start at 1020, 1070, ...; pulse [1000, 2000)
  std::vector<Odour> pred;
  for (int k = 0; k < 60; ++k) pred.push_back(1020 + 50 * k < 2000 ? Odour::Eu : Odour::Blank);
  const auto r = onset_offset(timeline(Odour::Eu, pred));
  ASSERT_TRUE(r.onset_ms && r.offset_ms);
  EXPECT_LE(*r.onset_ms, 50);
  EXPECT_LE(*r.offset_ms, 50);
}

TEST(OnsetOffset, CountsWindowsFromTheOffsetWindow) {
  std::vector<Odour> pred(60, Odour::Blank);
  for (int k = 2; k < 24; ++k) pred[k] = Odour::IA;  // first window at or after offset is 20 (2020)
  const auto r = onset_offset(timeline(Odour::IA, pred));
  EXPECT_EQ(r.onset_ms, 150);
  EXPECT_EQ(r.offset_ms, 5 * 50);
}

TEST(OnsetOffsetProperty, MultiplesOfPitch) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Odour> pred;
    for (int k = 0; k < 40; ++k) pred.push_back(rng.uniform() < 0.5 ? Odour::Blank : Odour::H2);
    const auto r = onset_offset(timeline(Odour::H2, pred, 1000, 500, 1000 + static_cast<std::int64_t>(rng.index(50))));
    ASSERT_EQ(r.onset_ms.value_or(0) % 50, 0);
    ASSERT_EQ(r.offset_ms.value_or(0) % 50, 0);
  }
}

TEST(OnsetOffset, RejectsMisplacedTimeline) {
  EXPECT_THROW(onset_offset(timeline(Odour::IA, {Odour::IA}, 1000, 1000, 1050)), std::invalid_argument);
  EXPECT_THROW(onset_offset(timeline(Odour::IA, {}, 1000, 1000, 1000)), std::invalid_argument);
}

TEST(Modal, MajorityAndTies) {
  using O = Odour;
  EXPECT_EQ(modal_prediction(timeline(O::IA, {O::IA, O::EB, O::IA, O::EB, O::IA})), O::IA);
  // EB reaches two first
  EXPECT_EQ(modal_prediction(timeline(O::IA, {O::EB, O::IA, O::EB, O::Blank, O::IA})), O::EB);
  EXPECT_EQ(modal_prediction(timeline(O::IA, {O::Blank, O::Blank})), std::nullopt);
  // blank windows never count toward the mode
  EXPECT_EQ(modal_prediction(timeline(O::IA, {O::Blank, O::Blank, O::Blank, O::Eu})), O::Eu);
}

TEST(TrialAccuracy, Examples) {
  using O = Odour;
  std::vector<PredictionTimeline> all{timeline(O::IA, {O::IA, O::IA}), timeline(O::EB, {O::EB})};
  EXPECT_DOUBLE_EQ(trial_accuracy(all).accuracy, 1.0);
  std::vector<PredictionTimeline> modal{timeline(O::IA, {O::IA, O::EB, O::IA, O::EB, O::IA})};
  EXPECT_DOUBLE_EQ(trial_accuracy(modal).accuracy, 1.0);
  std::vector<PredictionTimeline> miss{timeline(O::IA, {O::Blank, O::Blank}), timeline(O::EB, {O::EB})};
  const auto r = trial_accuracy(miss);
  EXPECT_EQ(r.misses, 1u);
  EXPECT_TRUE(r.trials[0].miss);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.confusion[index_of(O::IA)][index_of(O::Blank)], 1u);
}

TEST(TrialAccuracy, UniformGuessingIsChance) {
  Rng rng(5);
  std::vector<PredictionTimeline> tls;
  for (int i = 0; i < 4000; ++i) {
    const Odour truth = kActiveOdours[rng.index(4)];
    tls.push_back(timeline(truth, {kActiveOdours[rng.index(4)]}));
  }
  EXPECT_NEAR(trial_accuracy(tls).accuracy, 0.25, 4.0 * std::sqrt(0.25 * 0.75 / 4000));
}

TEST(BalancedAccuracy, Examples) {
  EXPECT_DOUBLE_EQ(balanced_accuracy(10, 10, 10, 10), 1.0);
  EXPECT_DOUBLE_EQ(balanced_accuracy(10, 10, 0, 10), 0.5);
  EXPECT_DOUBLE_EQ(balanced_accuracy(8, 10, 6, 10), 0.7);
  EXPECT_THROW(balanced_accuracy(0, 0, 1, 1), std::invalid_argument);
  EXPECT_THROW(balanced_accuracy(1, 1, 0, 0), std::invalid_argument);
}

TEST(BalancedAccuracyProperty, EqualsPlainWhenBalanced) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.index(50);
    const std::size_t hits = rng.index(n + 1), cr = rng.index(n + 1);
    const std::vector<std::vector<std::size_t>> c{{hits, n - hits}, {n - cr, cr}};
    EXPECT_NEAR(balanced_accuracy(hits, n, cr, n), plain_accuracy(c), 1e-15);
    EXPECT_NEAR(balanced_accuracy(c), plain_accuracy(c), 1e-15);
  }
}

TEST(Confusion, MatrixAndRecall) {
  const std::vector<int> truth{0, 0, 0, 1, 2, 2}, pred{0, 1, 0, 1, 2, 0};
  const auto c = confusion_matrix(truth, pred, 3);
  EXPECT_EQ(c[0][0], 2u);
  EXPECT_EQ(c[0][1], 1u);
  EXPECT_EQ(c[2][0], 1u);
  EXPECT_NEAR(balanced_accuracy(c), (2.0 / 3.0 + 1.0 + 0.5) / 3.0, 1e-15);
  EXPECT_NEAR(plain_accuracy(c), 4.0 / 6.0, 1e-15);
  EXPECT_THROW(confusion_matrix(truth, std::vector<int>{0}, 3), std::invalid_argument);
}

TEST(Chi2Randomization, UniformScheduleIsIndependent) {
  std::vector<Trial> m;
  for (int bin = 0; bin < 3; ++bin)
    for (Odour o : kActiveOdours)
      for (int r = 0; r < 5; ++r) m.push_back(at(o, bin * 3'600'000 + r * 40'000 + static_cast<int>(index_of(o)) * 200'000));
  const auto res = chi2_randomization(m);
  EXPECT_DOUBLE_EQ(res.statistic, 0.0);
  EXPECT_DOUBLE_EQ(res.p_value, 1.0);
}

TEST(Chi2Randomization, ConfinedClassIsDependent) {
  std::vector<Trial> m;
  for (int i = 0; i < 200; ++i) m.push_back(at(Odour::IA, i * 10'000));
  for (int i = 0; i < 200; ++i) m.push_back(at(i % 2 ? Odour::EB : Odour::Eu, 4'000'000 + i * 10'000));
  EXPECT_LT(chi2_randomization(m).p_value, 1e-6);
}

TEST(SeedSummary, ClipsBand) {
  const std::vector<double> acc{1.0, 1.0, 0.9};
  const auto s = summarize_seeds(acc);
  EXPECT_NEAR(s.mean, 29.0 / 30.0, 1e-15);
  EXPECT_EQ(s.upper, 1.0);
  EXPECT_GT(s.lower, 0.0);
  const std::vector<double> low{0.0, 0.2};
  EXPECT_EQ(summarize_seeds(low).lower, 0.0);
}
