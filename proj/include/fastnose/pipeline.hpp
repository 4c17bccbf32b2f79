#pragma once

#include "fastnose/classifiers.hpp"
#include "fastnose/config.hpp"
#include "fastnose/evaluation.hpp"
#include "fastnose/features.hpp"
#include "fastnose/protocol.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fastnose {

/// Sensor parameters named by the settings (empty path: checked-in reference set).
SensorParamSet load_sensor_params_for(const SimulationSettings& settings);

// --- run directories ----------------------------------------------------------------

struct RunInfo {
  ProtocolId protocol = ProtocolId::A;
  std::uint64_t seed = 0;
  std::uint64_t params_hash = 0;
  double scale = 0.2;
  bool binary = false;
};

/// DIR/trials/<trial_id>.csv (or .bin), DIR/run.txt, and DIR/manifest.csv
/// written last as the completion marker.
void simulate_to_directory(const std::string& dir, ProtocolId id, std::uint64_t seed, const Config& config,
                           bool binary, unsigned kinds = kAllStimuli);

struct RunDirectory {
  std::string dir;
  RunInfo info;
  std::vector<Trial> manifest;

  std::string trial_path(const Trial& t) const;
  /// Loads a trial recording and checks its header against the run.
  Recording load(const Trial& t) const;
};

/// Throws when the manifest (completion marker) is absent.
RunDirectory open_run_directory(const std::string& dir);

// --- features -----------------------------------------------------------------------

enum class FeatureMode { Phase, Dft };
FeatureMode parse_feature_mode(const std::string& s);

struct FeatureOptions {
  FeatureMode mode = FeatureMode::Phase;
  bool raw = false;                  // phase mode only: unnormalised resistances
  MaxScope scope = MaxScope::PerSensor;
  int window_ms = 50;
  int span_ms = 2000;                // windows start in [onset, onset + span)
  int t_pre_ms = -5000;              // anchor window offset from onset
  int dft_tail_ms = 100;
  int cycle_period_ms = 50;
};

FeatureOptions feature_options_from_config(const Config& config, FeatureMode mode, bool raw);

/// 0-based sensor indices feeding a feature mode under a protocol. Throws
/// when the protocol has no bank in the required heater regime.
std::vector<std::size_t> feature_sensors(FeatureMode mode, ProtocolId id);

/// Feature rows plus the trial manifest they came from.
struct FeatureSet {
  ProtocolId protocol = ProtocolId::A;
  std::uint64_t seed = 0;
  std::string variant;  // normalized | raw | dft
  std::vector<Trial> trials;
  FeatureTable table;

  const Trial& trial(const std::string& id) const;
  /// Row indices per trial id, in file order.
  const std::map<std::string, std::vector<std::size_t>>& rows_by_trial() const;
  void reindex();

private:
  std::map<std::string, std::size_t> trial_index_;
  std::map<std::string, std::vector<std::size_t>> rows_;
};

FeatureSet empty_feature_set(ProtocolId id, std::uint64_t seed, const FeatureOptions& options);

/// Appends the feature rows of one trial recording.
void append_features(FeatureSet& set, const Trial& trial, const Recording& rec, const FeatureOptions& options);

FeatureSet extract_features(const RunDirectory& run, const FeatureOptions& options,
                            const SensorParamSet* expected_params = nullptr);

/// Feature CSV plus a sidecar manifest at <path>.trials.csv.
void save_feature_set(const std::string& path, const FeatureSet& set);
FeatureSet load_feature_set(const std::string& path);

// --- tasks --------------------------------------------------------------------------

enum class Task { Pulse, Conc, Freq, FreqPair, Corr };
Task parse_task(const std::string& s);
std::string task_name(Task t);

struct MlSettings {
  int knn_k = 5;
  SvmParams svm;
  ForestParams forest;
  int folds = 5;
  int temporal_seeds = 10;
  double train_fraction = 0.6;
};
MlSettings ml_settings_from_config(const Config& config);

struct TaskEntry {
  std::string gas_pair = "all";
  double frequency_hz = 0.0;  // 0: all frequencies
  std::uint64_t seed = 0;
  std::unique_ptr<Model> model;
};

struct TaskBundle {
  Task task = Task::Pulse;
  ProtocolId protocol = ProtocolId::A;
  std::string variant;
  std::uint64_t seed = 0;
  bool shuffled = false;  // label-shuffled control
  std::vector<std::string> train_trials;
  std::vector<TaskEntry> entries;
};

/// Stratified by-trial split: per class, round(fraction * n) trials (at least
/// one on each side when n >= 2) go to training.
std::vector<std::string> split_trials(const std::vector<const Trial*>& trials, double fraction, std::uint64_t seed);

TaskBundle train_task(Task task, const FeatureSet& features, const MlSettings& ml, std::uint64_t seed,
                      bool shuffled = false);

void save_bundle(const std::string& path, const TaskBundle& bundle);
TaskBundle load_bundle(const std::string& path);

struct ResultRow {
  std::string task;
  std::string gas_pair;
  std::string frequency_hz;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::string condition;
  std::size_t n_test = 0;
};

struct ConfusionBlock {
  std::string label;  // task/pair/frequency/seed/condition
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> matrix;
};

struct TimingRow {
  std::string trial_id;
  std::string odour;
  int duration_ms = 0;
  std::string predicted;
  bool miss = false;
  std::optional<int> onset_ms;
  std::optional<int> offset_ms;
};

struct Evaluation {
  std::vector<ResultRow> rows;
  std::vector<ConfusionBlock> confusions;
  std::vector<TimingRow> timing;
};

/// Scores a bundle on a feature set. Trials used for training are excluded
/// when both come from the same protocol run.
Evaluation evaluate_task(const TaskBundle& bundle, const FeatureSet& test);

/// Writes <path>, <stem>.confusion.csv and, when present, <stem>.timing.csv,
/// each through a temporary file renamed into place.
void write_evaluation(const std::string& path, const Evaluation& eval);
std::vector<ResultRow> read_results(const std::string& path);

/// Aggregates every result CSV under `dir` into summary.csv and per-figure
/// plot tables. Returns the printable summary.
std::string report_directory(const std::string& dir);

}  // namespace fastnose
