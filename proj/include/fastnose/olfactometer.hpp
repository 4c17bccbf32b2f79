#pragma once

#include "fastnose/odour.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fastnose {

enum class CorrelationMode { Single, Correlated, AntiCorrelated };

std::string_view mode_name(CorrelationMode m);
CorrelationMode parse_mode(std::string_view name);

/// One stimulus presentation as requested by the protocol.
struct StimulusSpec {
  std::vector<Odour> odours;          // 1 or 2 odours
  double pulse_duration_ms = 1000.0;  // whole stimulus length (single pulse or train)
  double concentration = 1.0;         // shattering duty cycle, [0, 1]
  double modulation_frequency_hz = 0.0;
  CorrelationMode mode = CorrelationMode::Single;
  double onset_ms = 0.0;
};

inline constexpr double kShatterPeriodMs = 2.0;
inline constexpr double kSubTickMs = 0.5;
inline constexpr std::array<double, 5> kProtocolConcentrations{0.2, 0.4, 0.6, 0.8, 1.0};
inline constexpr std::array<double, 7> kProtocolFrequenciesHz{1, 2, 5, 10, 20, 40, 60};

/// Throws std::invalid_argument describing the first violated constraint.
void validate_stimulus(const StimulusSpec& spec);
/// Stricter check used for protocol-generated trials (fixed concentration and
/// frequency sets).
void validate_protocol_stimulus(const StimulusSpec& spec);

struct Interval {
  double begin_ms;
  double end_ms;
};

struct Valve {
  int manifold = 0;
  Odour odour = Odour::Blank;
  bool carrier = false;
  double duty = 1.0;               // shattering duty while the gate is open
  std::vector<Interval> windows;   // gate-open windows, ms relative to schedule start
};

/// Valve commands for one trial.
///
/// Two manifolds; each has one carrier valve plus the odour valves in use.
/// Odour valves are shattered at 500 Hz (open for duty * 2 ms at the start
/// of every 2 ms period). The carrier on each manifold is driven
/// complementary to the odour valves so that summed open fraction per
/// manifold is exactly 1 in every 0.5 ms sub-tick.
class ValveSchedule {
public:
  ValveSchedule(std::vector<Valve> valves, double length_ms);

  const std::vector<Valve>& valves() const { return valves_; }
  double length_ms() const { return length_ms_; }
  std::size_t ticks() const;
  std::size_t sub_ticks() const { return 2 * ticks(); }

  /// Fraction of sub-tick j (covering [0.5 j, 0.5 j + 0.5) ms) during which
  /// valve v is physically open.
  double open_fraction(std::size_t v, std::size_t sub_tick) const;
  /// Mean open fraction over 1 ms tick i (average of the two sub-ticks).
  double tick_duty(std::size_t v, std::size_t tick) const;
  /// Gate (command before shattering) at the midpoint of tick i.
  bool gate(std::size_t v, std::size_t tick) const;
  /// Bit v set when gate(v, tick).
  std::uint32_t gate_mask(std::size_t tick) const;

  /// Odour concentration driven into the outlet at 1 kHz (sum of odour valve
  /// duties carrying that odour), before transport.
  std::vector<double> duty_trace(Odour odour) const;
  /// Summed open fraction of one manifold at sub-tick resolution.
  std::vector<double> manifold_flow(int manifold) const;

  /// Gate-open windows of the first valve carrying `odour`.
  std::vector<Interval> pulses(Odour odour) const;

private:
  double odour_open(std::size_t v, std::size_t sub_tick) const;

  std::vector<Valve> valves_;
  double length_ms_;
};

/// Builds the valve schedule for a stimulus. Schedule time 0 is the start of
/// the trial; pulses begin at spec.onset_ms. `length_ms` of 0 selects onset +
/// duration.
ValveSchedule build_schedule(const StimulusSpec& spec, double length_ms = 0.0);

struct TransportParams {
  double delay_ms = 10.0;
  double tau_ms = 8.0;
};

/// Per-odour concentration at the sensor site, 1 kHz, sample i at t = i ms.
struct ConcentrationTrace {
  std::array<std::vector<double>, kOdourCount> odour;
  std::size_t size() const { return odour[0].size(); }
  OdourTable at(std::size_t i) const;
};

/// Pure delay plus single-pole low-pass, applied to the 1 kHz valve duty.
ConcentrationTrace transport(const ValveSchedule& schedule, const TransportParams& params);
/// Same filter on a bare duty sequence.
std::vector<double> transport_signal(std::span<const double> duty,
                                     const TransportParams& params);

struct FidelityResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_pulse;
};

/// Per-pulse (peak - trough) / (peak - baseline), summarised across pulses.
/// `trace` is sampled at 1 kHz on the schedule's time base; pulse windows are
/// taken from the valve carrying `odour`, shifted by `lag_ms` to account for
/// transport. Baseline is the mean of the trace before the first pulse.
FidelityResult fidelity(std::span<const double> trace, const ValveSchedule& schedule,
                        Odour odour, double lag_ms = 10.0);

}  // namespace fastnose
