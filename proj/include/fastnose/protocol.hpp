#pragma once

#include "fastnose/config.hpp"
#include "fastnose/heater_control.hpp"
#include "fastnose/olfactometer.hpp"
#include "fastnose/recording.hpp"
#include "fastnose/sensor_physics.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fastnose {

enum class ProtocolId { A, B, C };
char protocol_letter(ProtocolId id);
ProtocolId parse_protocol(std::string_view s);

/// Families of the stimulus set, usable as a bit mask to simulate a subset.
enum StimulusKind : unsigned {
  kFullPulse = 1u << 0,      // 1 s pulses at 100 %, 4 odours + 2 blank vials
  kConcentration = 1u << 1,  // 1 s pulses at 20..80 %
  kShortPulse = 1u << 2,     // 10..500 ms pulses at 100 %
  kAntiTrain = 1u << 3,      // anti-correlated 1 s trains, ordered pairs
  kCorrTrain = 1u << 4,      // correlated 1 s trains
  kAllStimuli = 0x1f,
};

/// One manifest record.
struct Trial {
  std::string trial_id;
  Odour odour_a = Odour::Blank;
  std::optional<Odour> odour_b;
  int duration_ms = 1000;
  int concentration_pct = 100;
  double frequency_hz = 0.0;
  CorrelationMode mode = CorrelationMode::Single;
  std::int64_t onset_ms = 0;
  std::uint64_t seed = 0;

  std::int64_t offset_ms() const { return onset_ms + duration_ms; }
  bool is_train() const { return mode != CorrelationMode::Single; }
  /// Stimulus with onset placed at `onset_in_window` ms of a local time base.
  StimulusSpec spec(double onset_in_window) const;
  /// Unordered odour pair name for trains, e.g. "IA-EB" (kActiveOdours order).
  std::string pair_name() const;
};

bool operator==(const Trial& a, const Trial& b);

/// Columns: trial_id,odour_a,odour_b,duration_ms,concentration_pct,frequency_hz,mode,onset_ms,seed.
void write_manifest(std::ostream& out, const std::vector<Trial>& trials);
std::vector<Trial> read_manifest(std::istream& in);

struct ProtocolSettings {
  double scale = 0.2;
  int recovery_ms = 30000;
  int recovery_jitter_ms = 1000;
  int gap_stride_ms = 10;
  int lead_in_ms = 200;
  int pre_ms = 5100;
  int post_ms = 2100;
  int t_pre_ms = -5000;
};

/// Repetitions after scaling: max(1, round(base * scale)).
int scaled_repetitions(int base, double scale);

/// Stimulus presentations in randomised order with onsets and per-trial seeds.
std::vector<Trial> make_manifest(ProtocolId id, std::uint64_t seed, const ProtocolSettings& settings,
                                 unsigned kinds = kAllStimuli);

struct BankSetup {
  bool cycled = true;
  std::vector<CycleStep> profile;
  double constant_c = 400.0;
  int period_ms() const;
};

/// Heater regime of sensors 1-4 (bank 0) and 5-8 (bank 1).
struct ProtocolLayout {
  ProtocolId id = ProtocolId::A;
  std::array<BankSetup, 2> banks;
  const BankSetup& bank_of(std::size_t sensor) const { return banks[sensor < 4 ? 0 : 1]; }
};

struct PlantSettings {
  double tau_thermal_ms = 3.0;  // overrides the parameter file when > 0
  HeaterCircuitParams circuit;
  SensingNoise noise;
  BaselineWander wander;
  double response_jitter_sigma = 0.0;  // per-trial lognormal spread of beta_max
  double ambient_c = 25.0;
  double ambient_sigma_c = 0.5;
  double ambient_tau_s = 1800.0;
  TransportParams transport;
  PidParams pid;
};

struct SimulationSettings {
  PlantSettings plant;
  ControllerConfig controller;
  std::vector<CycleStep> cycle_profile{{150.0, 25}, {400.0, 25}};
  std::vector<CycleStep> slow_cycle_profile{{150.0, 100}, {400.0, 100}};
  double constant_temperature_c = 400.0;
  ProtocolSettings protocol;
  std::string sensor_params_path;  // empty: checked-in reference set
};

SimulationSettings settings_from_config(const Config& config);
ProtocolLayout protocol_layout(ProtocolId id, const SimulationSettings& settings);

using RecordingSink = std::function<void(const Trial&, Recording&&)>;

/// Coupled simulation of olfactometer, sensor physics and heater control at
/// 1 ms ticks for a whole protocol run. Recording windows are simulated at
/// full rate; recovery gaps advance the slow states at gap_stride_ms.
class ProtocolRunner {
public:
  ProtocolRunner(ProtocolId id, SensorParamSet params, SimulationSettings settings, std::uint64_t seed);
  ~ProtocolRunner();

  /// Simulates every trial in order, handing each recording to `sink`.
  void run(const std::vector<Trial>& manifest, const RecordingSink& sink);

  const ProtocolLayout& layout() const { return layout_; }
  std::uint64_t params_hash() const { return params_hash_; }

  /// Per-tick DAC commands of sensor `s` during the most recent window
  /// (for hold/cycling checks).
  const std::vector<double>& last_voltages(std::size_t s) const;
  /// True hotplate temperature trace of sensor `s` during the most recent window.
  const std::vector<double>& last_true_temperature(std::size_t s) const;

private:
  struct Channel;
  void advance_gap(std::int64_t until_ms, Rng& rng);
  Recording simulate_window(const Trial* trial, std::int64_t start_ms, int lead_ms, int length_ms, Rng& rng);

  ProtocolId id_;
  SensorParamSet params_;
  SimulationSettings settings_;
  ProtocolLayout layout_;
  std::uint64_t seed_;
  std::uint64_t params_hash_;
  std::vector<Channel> channels_;
  double ambient_offset_ = 0.0;
  std::int64_t cursor_ms_ = 0;
};

/// make_manifest + ProtocolRunner::run. Returns the manifest.
std::vector<Trial> run_protocol(ProtocolId id, std::uint64_t seed, const SensorParamSet& params,
                                const SimulationSettings& settings, const RecordingSink& sink,
                                unsigned kinds = kAllStimuli);

}  // namespace fastnose
