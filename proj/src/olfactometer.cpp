#include "fastnose/olfactometer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fastnose {

std::string_view mode_name(CorrelationMode m) {
  switch (m) {
    case CorrelationMode::Single: return "single";
    case CorrelationMode::Correlated: return "correlated";
    case CorrelationMode::AntiCorrelated: return "anti-correlated";
  }
  return "?";
}

CorrelationMode parse_mode(std::string_view name) {
  if (name == "single") return CorrelationMode::Single;
  if (name == "correlated") return CorrelationMode::Correlated;
  if (name == "anti-correlated") return CorrelationMode::AntiCorrelated;
  throw std::invalid_argument("unknown correlation mode '" + std::string(name) + "'");
}

void validate_stimulus(const StimulusSpec& spec) {
  if (spec.odours.empty() || spec.odours.size() > 2)
    throw std::invalid_argument("stimulus needs 1 or 2 odours");
  if (spec.odours.size() == 2 && spec.odours[0] == spec.odours[1])
    throw std::invalid_argument("stimulus odour pair must be two distinct odours");
  if (!(spec.concentration >= 0.0 && spec.concentration <= 1.0))
    throw std::invalid_argument("concentration must lie in [0, 1]");
  if (!(spec.modulation_frequency_hz >= 0.0))
    throw std::invalid_argument("modulation frequency must be >= 0");
  if (!(spec.onset_ms >= 0.0)) throw std::invalid_argument("onset must be >= 0");
  if (spec.mode == CorrelationMode::AntiCorrelated && spec.odours.size() != 2)
    throw std::invalid_argument("anti-correlated stimulus requires exactly 2 odours");
  if (spec.mode != CorrelationMode::Single && spec.modulation_frequency_hz <= 0.0)
    throw std::invalid_argument("pulse trains need a positive modulation frequency");
  if (spec.pulse_duration_ms < kShatterPeriodMs)
    throw std::invalid_argument("pulse of " + std::to_string(spec.pulse_duration_ms) +
                                " ms is shorter than one shattering period (2 ms)");
  if (spec.modulation_frequency_hz > 0.0) {
    const double half_period = 500.0 / spec.modulation_frequency_hz;
    if (half_period < kShatterPeriodMs)
      throw std::invalid_argument("modulation frequency " +
                                  std::to_string(spec.modulation_frequency_hz) +
                                  " Hz gives pulses shorter than one shattering period");
  }
}

void validate_protocol_stimulus(const StimulusSpec& spec) {
  validate_stimulus(spec);
  const bool conc_ok = std::any_of(kProtocolConcentrations.begin(), kProtocolConcentrations.end(),
                                   [&](double c) { return std::abs(c - spec.concentration) < 1e-9; });
  if (!conc_ok) throw std::invalid_argument("protocol concentration must be one of 20..100%");
  if (spec.modulation_frequency_hz > 0.0) {
    const bool f_ok =
        std::any_of(kProtocolFrequenciesHz.begin(), kProtocolFrequenciesHz.end(),
                    [&](double f) { return std::abs(f - spec.modulation_frequency_hz) < 1e-9; });
    if (!f_ok) throw std::invalid_argument("protocol modulation frequency not in {1,2,5,10,20,40,60} Hz");
  }
}

// --- ValveSchedule ---------------------------------------------------------

ValveSchedule::ValveSchedule(std::vector<Valve> valves, double length_ms)
    : valves_(std::move(valves)), length_ms_(length_ms) {
  if (valves_.size() > 32) throw std::invalid_argument("at most 32 valves");
  for (auto& v : valves_) {
    std::sort(v.windows.begin(), v.windows.end(),
              [](const Interval& a, const Interval& b) { return a.begin_ms < b.begin_ms; });
  }
}

std::size_t ValveSchedule::ticks() const {
  return static_cast<std::size_t>(std::ceil(length_ms_ - 1e-9));
}

double ValveSchedule::odour_open(std::size_t v, std::size_t sub_tick) const {
  const Valve& valve = valves_[v];
  const double a = static_cast<double>(sub_tick) * kSubTickMs;
  const double b = a + kSubTickMs;
  const double period_start = std::floor(a / kShatterPeriodMs) * kShatterPeriodMs;
  const double shatter_lo = std::max(a, period_start);
  const double shatter_hi = std::min(b, period_start + kShatterPeriodMs * valve.duty);
  if (shatter_hi <= shatter_lo) return 0.0;
  double open = 0.0;
  auto it = std::upper_bound(valve.windows.begin(), valve.windows.end(), shatter_hi,
                             [](double t, const Interval& w) { return t < w.begin_ms; });
  for (auto w = valve.windows.begin(); w != it; ++w) {
    const double lo = std::max(shatter_lo, w->begin_ms);
    const double hi = std::min(shatter_hi, w->end_ms);
    if (hi > lo) open += hi - lo;
  }
  return open / kSubTickMs;
}

double ValveSchedule::open_fraction(std::size_t v, std::size_t sub_tick) const {
  const Valve& valve = valves_[v];
  if (!valve.carrier) return odour_open(v, sub_tick);
  double others = 0.0;
  for (std::size_t u = 0; u < valves_.size(); ++u) {
    if (u != v && !valves_[u].carrier && valves_[u].manifold == valve.manifold)
      others += odour_open(u, sub_tick);
  }
  return std::clamp(1.0 - others, 0.0, 1.0);
}

double ValveSchedule::tick_duty(std::size_t v, std::size_t tick) const {
  return 0.5 * (open_fraction(v, 2 * tick) + open_fraction(v, 2 * tick + 1));
}

bool ValveSchedule::gate(std::size_t v, std::size_t tick) const {
  const Valve& valve = valves_[v];
  if (valve.carrier) return true;
  const double mid = static_cast<double>(tick) + 0.5;
  return std::any_of(valve.windows.begin(), valve.windows.end(),
                     [&](const Interval& w) { return mid >= w.begin_ms && mid < w.end_ms; });
}

std::uint32_t ValveSchedule::gate_mask(std::size_t tick) const {
  std::uint32_t mask = 0;
  for (std::size_t v = 0; v < valves_.size(); ++v) {
    if (gate(v, tick)) mask |= (1u << v);
  }
  return mask;
}

std::vector<double> ValveSchedule::duty_trace(Odour odour) const {
  std::vector<double> out(ticks(), 0.0);
  for (std::size_t v = 0; v < valves_.size(); ++v) {
    if (valves_[v].carrier || valves_[v].odour != odour) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tick_duty(v, i);
  }
  return out;
}

std::vector<double> ValveSchedule::manifold_flow(int manifold) const {
  std::vector<double> out(sub_ticks(), 0.0);
  for (std::size_t v = 0; v < valves_.size(); ++v) {
    if (valves_[v].manifold != manifold) continue;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += open_fraction(v, j);
  }
  return out;
}

std::vector<Interval> ValveSchedule::pulses(Odour odour) const {
  for (const auto& v : valves_) {
    if (!v.carrier && v.odour == odour) return v.windows;
  }
  return {};
}

// --- schedule construction ---------------------------------------------------

namespace {

std::vector<Interval> train_windows(double onset, double duration, double freq_hz, bool shifted) {
  std::vector<Interval> out;
  if (freq_hz <= 0.0) {
    out.push_back({onset, onset + duration});
    return out;
  }
  const double period = 1000.0 / freq_hz;
  const double half = 0.5 * period;
  const double offset = shifted ? half : 0.0;
  for (int k = 0;; ++k) {
    const double b = k * period + offset;
    if (b >= duration - 1e-9) break;
    const double e = std::min(b + half, duration);
    out.push_back({onset + b, onset + e});
  }
  return out;
}

}  // namespace

ValveSchedule build_schedule(const StimulusSpec& spec, double length_ms) {
  validate_stimulus(spec);
  if (length_ms <= 0.0) length_ms = spec.onset_ms + spec.pulse_duration_ms;
  std::vector<Valve> valves;
  valves.push_back({0, Odour::Blank, true, 1.0, {}});
  valves.push_back({1, Odour::Blank, true, 1.0, {}});
  for (std::size_t k = 0; k < spec.odours.size(); ++k) {
    Valve v;
    v.manifold = static_cast<int>(k);
    v.odour = spec.odours[k];
    v.duty = spec.concentration;
    const bool shifted = (k == 1 && spec.mode == CorrelationMode::AntiCorrelated);
    v.windows = train_windows(spec.onset_ms, spec.pulse_duration_ms,
                              spec.modulation_frequency_hz, shifted);
    valves.push_back(std::move(v));
  }
  return ValveSchedule(std::move(valves), length_ms);
}

// --- transport ---------------------------------------------------------------

OdourTable ConcentrationTrace::at(std::size_t i) const {
  OdourTable c{};
  for (std::size_t k = 0; k < kOdourCount; ++k) c[k] = odour[k][i];
  return c;
}

std::vector<double> transport_signal(std::span<const double> duty, const TransportParams& params) {
  std::vector<double> out(duty.size(), 0.0);
  const auto delay = static_cast<std::ptrdiff_t>(std::llround(params.delay_ms));
  const double a = params.tau_ms > 0.0 ? std::exp(-1.0 / params.tau_ms) : 0.0;
  double y = 0.0;
  for (std::size_t i = 0; i < duty.size(); ++i) {
    out[i] = y;
    const auto src = static_cast<std::ptrdiff_t>(i) - delay;
    const double u = src >= 0 ? duty[static_cast<std::size_t>(src)] : 0.0;
    y = u + (y - u) * a;
  }
  return out;
}

ConcentrationTrace transport(const ValveSchedule& schedule, const TransportParams& params) {
  ConcentrationTrace trace;
  for (Odour o : kAllOdours) {
    const auto duty = schedule.duty_trace(o);
    trace.odour[index_of(o)] = transport_signal(duty, params);
  }
  return trace;
}

// --- fidelity ------------------------------------------------------------------

FidelityResult fidelity(std::span<const double> trace, const ValveSchedule& schedule, Odour odour,
                        double lag_ms) {
  const auto windows = schedule.pulses(odour);
  if (windows.empty()) throw std::invalid_argument("schedule contains no pulses for odour");
  const auto to_index = [&](double t) {
    return static_cast<std::size_t>(std::clamp(std::llround(t + lag_ms), 0LL,
                                               static_cast<long long>(trace.size())));
  };
  const std::size_t first = to_index(windows.front().begin_ms);
  if (first == 0) throw std::invalid_argument("no pre-pulse baseline available");
  const double baseline =
      std::accumulate(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(first), 0.0) /
      static_cast<double>(first);

  FidelityResult result;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const std::size_t lo = to_index(windows[k].begin_ms);
    // A pulse runs until the next pulse begins, or for one on-window past its
    // end when it is the last one.
    const double next = k + 1 < windows.size()
                            ? windows[k + 1].begin_ms
                            : windows[k].end_ms + (windows[k].end_ms - windows[k].begin_ms);
    const std::size_t hi = to_index(next);
    if (hi <= lo + 1) continue;
    const auto seg = trace.subspan(lo, hi - lo);
    const auto peak_it = std::max_element(seg.begin(), seg.end());
    const double peak = *peak_it;
    const double trough = *std::min_element(peak_it, seg.end());
    const double height = peak - baseline;
    result.per_pulse.push_back(height > 1e-12 ? (peak - trough) / height : 0.0);
  }
  if (result.per_pulse.empty()) throw std::invalid_argument("no complete pulse in trace");
  const double n = static_cast<double>(result.per_pulse.size());
  result.mean = std::accumulate(result.per_pulse.begin(), result.per_pulse.end(), 0.0) / n;
  double ss = 0.0;
  for (double f : result.per_pulse) ss += (f - result.mean) * (f - result.mean);
  result.stddev = std::sqrt(ss / n);
  return result;
}

}  // namespace fastnose
