#include "fastnose/heater_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fastnose {

// --- Kalman ----------------------------------------------------------------------

double kalman_measurement_variance(const KalmanConfig& cfg, double dv_dac) {
  const double transient = cfg.kt * std::abs(dv_dac);
  return cfg.sigma0 * cfg.sigma0 + transient * transient;
}

KalmanStep kalman_update(const KalmanState& state, const KalmanConfig& cfg,
                         const HeaterReadout& readout, double dv_dac) {
  KalmanStep out;
  KalmanState prior{state.r_est, state.variance + cfg.q};
  if (!readout.valid() || readout.current() <= 0.0) {
    out.state = prior;
    return out;
  }
  const double r_meas = kalman_measurement_variance(cfg, dv_dac);
  out.innovation = readout.raw_resistance() - prior.r_est;
  out.innovation_variance = prior.variance + r_meas;
  out.gain = prior.variance / out.innovation_variance;
  out.state.r_est = prior.r_est + out.gain * out.innovation;
  out.state.variance = (1.0 - out.gain) * prior.variance;
  out.measured = true;
  return out;
}

// --- calibration map ----------------------------------------------------------------

CalibrationMap::CalibrationMap(double slope, double intercept, std::vector<double> delta_grid,
                               std::vector<double> voltage)
    : slope_(slope), intercept_(intercept), delta_grid_(std::move(delta_grid)), voltage_(std::move(voltage)) {
  if (!(slope_ > 0.0)) throw std::invalid_argument("calibration slope must be positive");
  if (delta_grid_.size() < 2 || delta_grid_.size() != voltage_.size())
    throw std::invalid_argument("voltage map needs >= 2 matching grid nodes");
}

double CalibrationMap::voltage_for(double delta_c) const {
  delta_c = std::clamp(delta_c, delta_grid_.front(), delta_grid_.back());
  auto it = std::upper_bound(delta_grid_.begin(), delta_grid_.end(), delta_c);
  std::size_t hi = static_cast<std::size_t>(it - delta_grid_.begin());
  if (hi >= delta_grid_.size()) hi = delta_grid_.size() - 1;
  const std::size_t lo = hi - 1;
  const double w = (delta_c - delta_grid_[lo]) / (delta_grid_[hi] - delta_grid_[lo]);
  return voltage_[lo] + w * (voltage_[hi] - voltage_[lo]);
}

double CalibrationMap::voltage_slope(double delta_c) const {
  delta_c = std::clamp(delta_c, delta_grid_.front(), delta_grid_.back());
  auto it = std::upper_bound(delta_grid_.begin(), delta_grid_.end(), delta_c);
  std::size_t hi = static_cast<std::size_t>(it - delta_grid_.begin());
  if (hi >= delta_grid_.size()) hi = delta_grid_.size() - 1;
  const std::size_t lo = hi - 1;
  return (voltage_[hi] - voltage_[lo]) / (delta_grid_[hi] - delta_grid_[lo]);
}

double CalibrationMap::correct(double delta_c, double dv) {
  delta_c = std::clamp(delta_c, delta_grid_.front(), delta_grid_.back());
  auto it = std::upper_bound(delta_grid_.begin(), delta_grid_.end(), delta_c);
  std::size_t hi = static_cast<std::size_t>(it - delta_grid_.begin());
  if (hi >= delta_grid_.size()) hi = delta_grid_.size() - 1;
  const std::size_t lo = hi - 1;
  const double w = (delta_c - delta_grid_[lo]) / (delta_grid_[hi] - delta_grid_[lo]);
  voltage_[lo] += (1.0 - w) * dv;
  voltage_[hi] += w * dv;
  // Keep the map strictly increasing by pushing neighbours out of the way.
  constexpr double kMinGap = 1e-6;
  for (std::size_t j = hi + 1; j < voltage_.size(); ++j)
    voltage_[j] = std::max(voltage_[j], voltage_[j - 1] + kMinGap);
  for (std::size_t j = lo; j-- > 0;)
    voltage_[j] = std::min(voltage_[j], voltage_[j + 1] - kMinGap);
  return std::max(std::abs((1.0 - w) * dv), std::abs(w * dv));
}

bool CalibrationMap::strictly_increasing() const {
  for (std::size_t i = 1; i < voltage_.size(); ++i)
    if (!(voltage_[i] > voltage_[i - 1])) return false;
  return true;
}

CalibrationMap calibrate(std::span<const PowerStep> steps, const CalibrationAnchor& anchor,
                         double grid_step_c, double grid_max_c) {
  if (steps.size() < 2) throw std::invalid_argument("calibration needs at least two power levels");
  const double gain = anchor.datasheet.nominal_delta_c / anchor.datasheet.nominal_power_w;
  double mean_r = 0.0, mean_t = 0.0;
  for (const auto& s : steps) {
    mean_r += s.resistance_ohm;
    mean_t += anchor.ambient_c + gain * s.power_w;
  }
  mean_r /= static_cast<double>(steps.size());
  mean_t /= static_cast<double>(steps.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : steps) {
    const double dr = s.resistance_ohm - mean_r;
    sxx += dr * dr;
    sxy += dr * (anchor.ambient_c + gain * s.power_w - mean_t);
  }
  if (sxx <= 0.0) throw std::invalid_argument("calibration degenerate: a single power level");
  const double slope = sxy / sxx;
  const double intercept = mean_t - slope * mean_r;

  std::vector<double> grid, volts;
  for (double d = 0.0; d <= grid_max_c + 1e-9; d += grid_step_c) {
    const double t = anchor.ambient_c + d;
    const double r = (t - intercept) / slope;
    const double p = d / gain;
    const double i = std::sqrt(std::max(p, 0.0) / r);
    grid.push_back(d);
    volts.push_back(i * (r + anchor.r_sense_ohm));
  }
  return CalibrationMap(slope, intercept, std::move(grid), std::move(volts));
}

std::vector<PowerStep> measure_power_steps(HeaterPlant& plant, std::span<const double> voltages,
                                           int settle_ms, int average_samples, Rng* rng) {
  std::vector<PowerStep> out;
  const double rs = plant.circuit().r_sense_ohm;
  for (double v : voltages) {
    for (int k = 0; k < settle_ms; ++k) plant.tick(v, rng);
    double sum_vs = 0.0;
    for (int k = 0; k < average_samples; ++k) sum_vs += plant.tick(v, rng).v_sense;
    HeaterReadout r{v, sum_vs / average_samples, rs};
    out.push_back({r.power(), r.raw_resistance()});
  }
  return out;
}

// --- DAC -------------------------------------------------------------------------------

QuantizedVoltage quantize_dac(double v, const DacConfig& dac) {
  const double max_code = static_cast<double>((1 << dac.bits) - 1);
  const double code = std::nearbyint(v / dac.lsb_v);
  if (code < 0.0) return {0.0, true};
  if (code > max_code) return {max_code * dac.lsb_v, true};
  return {code * dac.lsb_v, false};
}

// --- controller ----------------------------------------------------------------------

HeaterController::HeaterController(ControllerConfig cfg, CalibrationMap map)
    : cfg_(std::move(cfg)), map_(std::move(map)) {
  kalman_.r_est = map_.resistance(cfg_.ambient_c);
  kalman_.variance = 100.0;
}

double HeaterController::command_for(double target_c) {
  double delta = target_c - cfg_.ambient_c;
  clamped_ = delta < map_.min_delta() || delta > map_.max_delta();
  delta = std::clamp(delta, map_.min_delta(), map_.max_delta());
  target_c_ = cfg_.ambient_c + delta;
  const auto q = quantize_dac(map_.voltage_for(delta), cfg_.dac);
  clamped_ = clamped_ || q.clamped;
  return q.volts;
}

double HeaterController::begin_step(double target_c, int duration_ms) {
  if (duration_ms < 25) throw std::invalid_argument("temperature steps must last at least 25 ms");
  previous_voltage_ = voltage_;
  voltage_ = command_for(target_c);
  step_duration_ms_ = duration_ms;
  first_tick_of_step_ = true;
  ticks_in_step_ = 0;
  settled_sum_ = 0.0;
  settled_count_ = 0;
  return voltage_;
}

double HeaterController::begin_hold(double target_c) {
  previous_voltage_ = voltage_;
  voltage_ = command_for(target_c);
  step_duration_ms_ = 0;
  first_tick_of_step_ = true;
  ticks_in_step_ = 0;
  settled_sum_ = 0.0;
  settled_count_ = 0;
  return voltage_;
}

void HeaterController::observe(const HeaterReadout& readout) {
  const double dv = first_tick_of_step_ ? voltage_ - previous_voltage_ : 0.0;
  first_tick_of_step_ = false;
  kalman_ = kalman_update(kalman_, cfg_.kalman, readout, dv).state;
  ++ticks_in_step_;
  // Steps: average over the final settle window. Holds: running window.
  const bool in_window = step_duration_ms_ > 0
                             ? ticks_in_step_ > step_duration_ms_ - cfg_.settle_window_ms
                             : true;
  if (in_window) {
    if (step_duration_ms_ == 0 && settled_count_ == cfg_.settle_window_ms) {
      settled_sum_ = 0.0;
      settled_count_ = 0;
    }
    settled_sum_ += estimated_temperature();
    ++settled_count_;
  }
}

double HeaterController::settled_temperature() const {
  return settled_count_ > 0 ? settled_sum_ / settled_count_ : estimated_temperature();
}

double HeaterController::end_step() {
  last_error_ = target_c_ - settled_temperature();
  const double dv = cfg_.adapt_gain_v_per_degc_s * last_error_ * (step_duration_ms_ / 1000.0);
  const double applied = map_.correct(target_c_ - cfg_.ambient_c, dv);
  accumulated_correction_ += dv;
  return applied;
}

double HeaterController::end_hold() {
  last_error_ = target_c_ - settled_temperature();
  const double delta = target_c_ - cfg_.ambient_c;
  const double dv = map_.voltage_slope(delta) * last_error_;
  accumulated_correction_ += dv;
  return map_.correct(delta, dv);
}

std::vector<double> step_temperature(HeaterController& ctrl, HeaterPlant& plant, double target_c,
                                     int duration_ms, Rng* rng, std::vector<double>* true_temperature) {
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(duration_ms));
  const double v = ctrl.begin_step(target_c, duration_ms);
  for (int k = 0; k < duration_ms; ++k) {
    const auto r = plant.tick(v, rng);
    ctrl.observe({r.v_dac, r.v_sense, plant.circuit().r_sense_ohm});
    trace.push_back(v);
    if (true_temperature) true_temperature->push_back(plant.temperature_c());
  }
  ctrl.end_step();
  return trace;
}

std::vector<double> hold_constant(HeaterController& ctrl, HeaterPlant& plant, double target_c,
                                  int window_ms, Rng* rng, std::vector<double>* true_temperature) {
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(window_ms));
  const double v = ctrl.begin_hold(target_c);
  for (int k = 0; k < window_ms; ++k) {
    const auto r = plant.tick(v, rng);
    ctrl.observe({r.v_dac, r.v_sense, plant.circuit().r_sense_ohm});
    trace.push_back(v);
    if (true_temperature) true_temperature->push_back(plant.temperature_c());
  }
  ctrl.end_hold();
  return trace;
}

HeaterController make_calibrated_controller(HeaterPlant& plant, const HeaterDatasheet& datasheet,
                                            const ControllerConfig& cfg, Rng* rng) {
  // Ladder of powers spanning roughly 100..450 degC on a nominal hotplate.
  const std::vector<double> ladder{0.8, 1.1, 1.4, 1.7, 2.0, 2.3, 2.5};
  const auto steps = measure_power_steps(plant, ladder, 40, 20, rng);
  CalibrationAnchor anchor{datasheet, cfg.ambient_c, cfg.r_sense_ohm};
  return HeaterController(cfg, calibrate(steps, anchor));
}

}  // namespace fastnose
