#pragma once

#include "fastnose/sensor_physics.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fastnose {

/// One tick of heater measurements as seen by the controller.
struct HeaterReadout {
  double v_dac = 0.0;     // commanded DAC voltage
  double v_sense = 0.0;   // voltage across the sense resistor
  double r_sense = 10.0;

  double current() const { return v_sense / r_sense; }
  /// (V_dac - V_sense) / I: heater resistance assuming V_heat == V_dac - V_sense.
  double raw_resistance() const { return (v_dac - v_sense) / current(); }
  double power() const { return (v_dac - v_sense) * current(); }
  bool valid() const { return v_dac > 0.0 && v_sense > 0.0 && v_dac > v_sense; }
};

// --- Kalman estimation of heater resistance -----------------------------------

struct KalmanConfig {
  double q = 0.0025;       // process noise, ohm^2 per tick
  double sigma0 = 0.2;     // base measurement noise, ohm
  double kt = 3.4879;      // ohm per volt of DAC change within the tick
};

struct KalmanState {
  double r_est = 100.0;
  double variance = 100.0;
};

struct KalmanStep {
  KalmanState state;
  bool measured = false;
  double innovation = 0.0;
  double innovation_variance = 0.0;
  double gain = 0.0;
};

/// Measurement variance sigma0^2 + (kt * |dV_dac|)^2.
double kalman_measurement_variance(const KalmanConfig& cfg, double dv_dac);

/// Scalar random-walk predict/update with z = raw heater resistance. Readouts
/// with non-positive current skip the update (predict only).
KalmanStep kalman_update(const KalmanState& state, const KalmanConfig& cfg,
                         const HeaterReadout& readout, double dv_dac);

// --- calibration -----------------------------------------------------------------

struct PowerStep {
  double power_w;
  double resistance_ohm;  // settled heater resistance at that power
};

struct CalibrationAnchor {
  HeaterDatasheet datasheet;
  double ambient_c = 25.0;
  double r_sense_ohm = 10.0;
};

/// Linear R -> T model plus a learned piecewise-linear map from temperature
/// rise above ambient to DAC voltage.
class CalibrationMap {
public:
  CalibrationMap() = default;
  CalibrationMap(double slope, double intercept, std::vector<double> delta_grid,
                 std::vector<double> voltage);

  double slope() const { return slope_; }
  double intercept() const { return intercept_; }
  double temperature(double r_ohm) const { return slope_ * r_ohm + intercept_; }
  double resistance(double temperature_c) const { return (temperature_c - intercept_) / slope_; }

  const std::vector<double>& delta_grid() const { return delta_grid_; }
  const std::vector<double>& voltages() const { return voltage_; }
  double min_delta() const { return delta_grid_.front(); }
  double max_delta() const { return delta_grid_.back(); }

  /// Interpolated DAC voltage for a rise of `delta_c` above ambient (clamped
  /// to the grid).
  double voltage_for(double delta_c) const;
  /// dV/d(delta) of the map at `delta_c`.
  double voltage_slope(double delta_c) const;
  /// Spreads `dv` over the two grid nodes bracketing `delta_c` by linear
  /// interpolation weights. Returns the largest node change applied.
  double correct(double delta_c, double dv);
  bool strictly_increasing() const;

private:
  double slope_ = 1.0;
  double intercept_ = 0.0;
  std::vector<double> delta_grid_;
  std::vector<double> voltage_;
};

/// Least-squares T = slope * R + intercept where each step's temperature is
/// inferred from the datasheet gain (nominal delta at nominal power), then the
/// voltage map is initialised by inverting that plant model on a 0..500 degC
/// rise grid. Throws std::invalid_argument with fewer than two distinct powers.
CalibrationMap calibrate(std::span<const PowerStep> steps, const CalibrationAnchor& anchor,
                         double grid_step_c = 25.0, double grid_max_c = 500.0);

/// Drives a plant through a ladder of constant voltages and records the settled
/// (power, resistance) pairs, averaging `settle_samples` readings per level.
std::vector<PowerStep> measure_power_steps(HeaterPlant& plant, std::span<const double> voltages,
                                           int settle_ms, int average_samples, Rng* rng);

// --- DAC ---------------------------------------------------------------------------

struct DacConfig {
  double lsb_v = 0.0007;
  int bits = 12;
  double full_scale() const { return lsb_v * static_cast<double>((1 << bits) - 1); }
};

struct QuantizedVoltage {
  double volts;
  bool clamped;
};

/// Nearest grid value, clamped into [0, full_scale].
QuantizedVoltage quantize_dac(double v, const DacConfig& dac);

// --- temperature controller -------------------------------------------------------

struct CycleStep {
  double temperature_c;
  int duration_ms;
};

struct ControllerConfig {
  double r_sense_ohm = 10.0;
  DacConfig dac;
  KalmanConfig kalman;
  double adapt_gain_v_per_degc_s = 0.1;
  std::vector<CycleStep> profile{{150.0, 25}, {400.0, 25}};
  double ambient_c = 25.0;
  int settle_window_ms = 1;  // ticks averaged for the end-of-step temperature
};

/// Combined open/closed-loop heater controller for one channel.
///
/// Every step applies one constant (DAC-quantised) voltage taken from the
/// learned map. The Kalman-filtered heater resistance is converted to
/// temperature; when a step ends the map node(s) for that target are nudged
/// by adapt_gain * error * step_duration.
class HeaterController {
public:
  HeaterController(ControllerConfig cfg, CalibrationMap map);

  /// Starts a fixed-voltage temperature step. Targets outside the calibrated
  /// range are clamped and flagged.
  double begin_step(double target_c, int duration_ms);
  /// Freezes the voltage for a whole stimulus window at `target_c`.
  double begin_hold(double target_c);
  /// Feeds one tick of measurements (the command issued this tick is the
  /// voltage returned by begin_*).
  void observe(const HeaterReadout& readout);
  /// Closes a step: measures the achieved temperature and updates the map.
  /// Returns the map correction applied (volts).
  double end_step();
  /// Closes a hold window with one corrective map update that removes the
  /// measured temperature error.
  double end_hold();
  /// Closes the current step or hold without touching the map (used when a
  /// step was entered part-way through).
  void cancel_step() { last_error_ = target_c_ - settled_temperature(); }

  double voltage() const { return voltage_; }
  double target() const { return target_c_; }
  double estimated_temperature() const { return map_.temperature(kalman_.r_est); }
  /// Mean Kalman temperature over the settle window of the current step.
  double settled_temperature() const;
  const KalmanState& kalman() const { return kalman_; }
  const CalibrationMap& map() const { return map_; }
  const ControllerConfig& config() const { return cfg_; }
  double accumulated_correction() const { return accumulated_correction_; }
  bool last_target_clamped() const { return clamped_; }
  double last_step_error() const { return last_error_; }

private:
  double command_for(double target_c);

  ControllerConfig cfg_;
  CalibrationMap map_;
  KalmanState kalman_;
  double voltage_ = 0.0;
  double previous_voltage_ = 0.0;
  bool first_tick_of_step_ = false;
  double target_c_ = 0.0;
  int step_duration_ms_ = 0;
  bool clamped_ = false;
  double accumulated_correction_ = 0.0;
  double last_error_ = 0.0;
  int ticks_in_step_ = 0;
  double settled_sum_ = 0.0;
  int settled_count_ = 0;
};

/// Runs one fixed-voltage step of `duration_ms` against `plant`; returns the
/// per-tick voltage command trace. `duration_ms` must be >= 25.
std::vector<double> step_temperature(HeaterController& ctrl, HeaterPlant& plant, double target_c,
                                     int duration_ms, Rng* rng,
                                     std::vector<double>* true_temperature = nullptr);

/// Holds `target_c` with a single frozen voltage for `window_ms`, then applies
/// the between-stimulus correction. Returns the voltage trace.
std::vector<double> hold_constant(HeaterController& ctrl, HeaterPlant& plant, double target_c,
                                  int window_ms, Rng* rng,
                                  std::vector<double>* true_temperature = nullptr);

/// Calibrates a controller for `plant` from a power-step ladder.
HeaterController make_calibrated_controller(HeaterPlant& plant, const HeaterDatasheet& datasheet,
                                            const ControllerConfig& cfg, Rng* rng);

}  // namespace fastnose
