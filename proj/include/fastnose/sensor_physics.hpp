#pragma once

#include "fastnose/odour.hpp"
#include "fastnose/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fastnose {

/// Micro-hotplate: linear R(T) heater with first-order thermal dynamics.
struct HotplateParams {
  double tau_thermal_ms = 3.0;
  double thermal_gain_c_per_w = 10000.0;  // steady-state rise above ambient per watt
  double r0_ohm = 80.0;                   // heater resistance at t0_c
  double t0_c = 25.0;
  double alpha_per_c = 0.0015;
  double t_ambient_c = 25.0;
};

/// Gas response of one (sensor, odour) pair.
struct OdourResponse {
  double beta_max = 0.0;  // log10-resistance drop at full coverage, optimal temperature
  double t_opt_c = 300.0;
  double w_c = 100.0;
  double tau_ads_ms = 20.0;
  double tau_des_ms = 150.0;
};

struct SensingLayerParams {
  std::array<OdourResponse, kOdourCount> response{};
  double a_s = 6.5;    // log10 R intercept in clean air
  double b_s = -0.004; // log10 R slope per degC in clean air
};

/// Manufacturer datasheet record used to anchor the heater calibration.
struct HeaterDatasheet {
  double nominal_power_w = 0.0375;
  double nominal_delta_c = 375.0;
};

struct SensorParams {
  int sensor_id = 1;
  HotplateParams hotplate;
  SensingLayerParams layer;
  HeaterDatasheet datasheet;
};

struct SensorParamSet {
  std::vector<SensorParams> sensors;

  /// 64-bit FNV-1a over the canonical text serialisation.
  std::uint64_t hash() const;
};

/// Plain-text parameter file: sections [air], [response], [hotplate],
/// [datasheet], each a comma-separated table with a header row.
void write_sensor_params(std::ostream& out, const SensorParamSet& params);
SensorParamSet read_sensor_params(std::istream& in);
SensorParamSet load_sensor_params(const std::string& path);
void save_sensor_params(const std::string& path, const SensorParamSet& params);

/// Draws the reference 8-sensor parameter set from a seeded generator. The
/// checked-in data/sensor_params.txt was produced by this with seed 20240601.
SensorParamSet generate_sensor_params(std::uint64_t seed);
inline constexpr std::uint64_t kReferenceParamSeed = 20240601;

/// Path of the checked-in reference parameter file.
std::string default_sensor_params_path();

struct SensorState {
  double temperature_c = 25.0;
  std::array<double, kOdourCount> coverage{};  // theta per odour, [0, 1]
  double resistance_ohm = 0.0;
};

// --- hotplate ---------------------------------------------------------------

/// Exact integration of dT/dt = (gain*P - (T - T_amb)) / tau over dt for constant P.
/// Throws std::invalid_argument on negative power.
SensorState step_thermal(const SensorState& state, const HotplateParams& params, double power_w,
                         double dt_ms);

/// R = R0 * (1 + alpha * (T - T0)).
double heater_resistance(double temperature_c, const HotplateParams& params);

// --- sensing layer ----------------------------------------------------------

struct SensingNoise {
  double sigma_log10 = 0.002;
  int adc_bits = 24;
  double full_scale_ohm = 8388608.0;  // 2^23 ohm -> 0.5 ohm LSB at 24 bit
};

/// Temperature-dependent sensitivity beta(T) = beta_max * exp(-((T - T_opt)/w)^2).
double sensitivity(const OdourResponse& r, double temperature_c);

/// Exact first-order coverage update for constant concentration over dt.
double update_coverage(double theta, double concentration, const OdourResponse& r, double dt_ms);

/// Noise-free log10 resistance for the current temperature and coverage.
/// `air_offset_log10` shifts the clean-air law (slow baseline wander).
double clean_log10_resistance(const SensorState& state, const SensingLayerParams& params,
                              double air_offset_log10 = 0.0);

/// Quantises a resistance to the ADC grid (full_scale / 2^bits), clamped to range.
double quantize_adc(double resistance_ohm, const SensingNoise& noise);

/// Advances coverage by dt under `concentrations`, then produces the measured
/// resistance (log-normal noise, ADC quantisation). `rng` may be null for a
/// noise-free reading. Returns the updated state with resistance_ohm set.
SensorState sensing_resistance(const SensorState& state, const SensingLayerParams& params,
                               const OdourTable& concentrations, double dt_ms,
                               const SensingNoise& noise, Rng* rng,
                               double air_offset_log10 = 0.0);

/// Ornstein-Uhlenbeck wander of the clean-air baseline (log10 units).
struct BaselineWander {
  double sigma_log10 = 0.02;  // stationary standard deviation
  double tau_s = 60.0;

  /// Exact OU transition over dt.
  double step(double offset, double dt_ms, Rng& rng) const;
};

// --- heater drive circuit ---------------------------------------------------

struct HeaterCircuitParams {
  double r_sense_ohm = 10.0;
  double amp_lag_ticks = 0.5;    // first-order lag of DAC+amplifier output, in ticks
  double v_sense_noise_v = 0.0001;
};

/// Electrical + thermal heater plant: DAC command -> lagged amplifier output ->
/// series R_heat + R_sense -> measured sense voltage; dissipated power drives
/// the hotplate temperature.
class HeaterPlant {
public:
  struct Reading {
    double v_dac = 0.0;     // command seen by the controller
    double v_sense = 0.0;   // measured (noisy) sense-resistor voltage
    double true_r_heat = 0.0;
    double true_temperature_c = 0.0;
    double power_w = 0.0;
  };

  HeaterPlant(HotplateParams hotplate, HeaterCircuitParams circuit, double initial_temperature_c);

  /// One 1 ms tick with DAC command v_dac. Sense voltage is sampled at the
  /// start of the tick; the thermal state then advances with that tick's power.
  Reading tick(double v_dac, Rng* rng);

  double temperature_c() const { return temperature_c_; }
  double amplifier_output_v() const { return v_amp_; }
  void set_ambient(double t_ambient_c) { hotplate_.t_ambient_c = t_ambient_c; }
  const HotplateParams& hotplate() const { return hotplate_; }
  const HeaterCircuitParams& circuit() const { return circuit_; }

  /// Steady-state DAC voltage that holds `temperature_c` (plant inversion).
  double steady_voltage(double temperature_c) const;

private:
  HotplateParams hotplate_;
  HeaterCircuitParams circuit_;
  double temperature_c_;
  double v_amp_ = 0.0;
};

// --- photoionisation detector ------------------------------------------------

struct PidParams {
  double tau_ms = 3.0;
  OdourTable gain{0.8, 1.0, 0.6, 0.7, 0.0};  // V per unit concentration; blank = 0
  double noise_sigma_v = 0.002;
  double baseline_v = 0.05;
};

/// Weighted concentration sum through a first-order response plus Gaussian
/// noise. `concentrations[o]` is a 1 kHz trace per odour (all equal length).
/// `rng` may be null for a noise-free response.
std::vector<double> pid_response(const std::array<std::vector<double>, kOdourCount>& concentrations,
                                 const PidParams& params, Rng* rng);

}  // namespace fastnose
