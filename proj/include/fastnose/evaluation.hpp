#pragma once

#include "fastnose/odour.hpp"
#include "fastnose/protocol.hpp"
#include "fastnose/stats.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fastnose {

struct LabelingParams {
  int tau_ms = 50;  // feature duration
  int d_ms = 10;    // upper bound on stimulus delay
  std::int64_t t_onset_ms = 0;
  std::int64_t t_offset_ms = 1000;
  Odour odour = Odour::Blank;
};

/// Training label of a window starting at t. Returns the stimulus odour (or
/// Blank) inside the pulse, Blank after it, nullopt for rejected windows.
std::optional<Odour> label_feature(std::int64_t t_ms, const LabelingParams& params);

/// Per-window predictions of one trial, windows contiguous at a fixed pitch.
struct PredictionTimeline {
  std::string trial_id;
  Odour truth = Odour::Blank;
  int duration_ms = 0;
  std::int64_t onset_ms = 0;
  std::int64_t offset_ms = 0;
  std::int64_t first_window_ms = 0;
  int pitch_ms = 50;
  std::vector<Odour> predicted;

  std::int64_t window_start(std::size_t k) const { return first_window_ms + static_cast<std::int64_t>(k) * pitch_ms; }
  /// Throws unless the first window lies in [onset, onset + pitch) and the timeline is nonempty.
  void validate() const;
};

struct OnsetOffset {
  std::optional<int> onset_ms;   // unset: no non-blank prediction
  std::optional<int> offset_ms;  // unset: no blank prediction after the offset
};

/// Times at which a prediction becomes available, in window pitches: onset =
/// end of the first non-blank window; offset = end of the first blank window
/// at or after the first window starting at or after t_offset, counted from
/// that window's start.
OnsetOffset onset_offset(const PredictionTimeline& timeline);

struct TrialOutcome {
  std::string trial_id;
  Odour truth = Odour::Blank;
  Odour predicted = Odour::Blank;  // Blank: missed
  bool miss = false;
  OnsetOffset timing;
};

struct TaskResult {
  std::vector<std::string> classes;               // row/column labels
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t n = 0;
  std::size_t misses = 0;
  std::vector<TrialOutcome> trials;
};

/// Most predicted non-blank class of the timeline; ties go to the class that
/// reached the tied count first. nullopt when every window is blank.
std::optional<Odour> modal_prediction(const PredictionTimeline& timeline);

/// Per-trial modal classification. The confusion matrix has the four active
/// odours plus a final 'blank' column for misses.
TaskResult trial_accuracy(std::span<const PredictionTimeline> timelines);

/// ((hits / s_plus) + (correct_rejections / s_minus)) / 2.
double balanced_accuracy(std::size_t hits, std::size_t s_plus, std::size_t correct_rejections,
                         std::size_t s_minus);

/// Mean per-class recall over classes present in the truth rows.
double balanced_accuracy(const std::vector<std::vector<std::size_t>>& confusion);
double plain_accuracy(const std::vector<std::vector<std::size_t>>& confusion);

/// Builds a confusion matrix from label vectors over n classes.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                                       std::size_t n_classes);

enum class ScheduleClass { OdourA, Stimulus };

/// Pearson chi-square of stimulus class against onset time bin.
ChiSquareResult chi2_randomization(const std::vector<Trial>& manifest, std::int64_t bin_ms = 3'600'000,
                                   ScheduleClass key = ScheduleClass::OdourA);

struct SeedSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double upper = 0.0;  // mean + stddev, clipped at 1
  double lower = 0.0;  // mean - stddev, clipped at 0
};
SeedSummary summarize_seeds(std::span<const double> accuracies);

}  // namespace fastnose
