#include "fastnose/sensor_physics.hpp"

#include "fastnose/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fastnose {

// --- hotplate ---------------------------------------------------------------

SensorState step_thermal(const SensorState& state, const HotplateParams& params, double power_w,
                         double dt_ms) {
  if (power_w < 0.0) throw std::invalid_argument("heater power must be non-negative");
  if (params.tau_thermal_ms <= 0.0) throw std::invalid_argument("thermal time constant must be > 0");
  SensorState next = state;
  const double target = params.t_ambient_c + params.thermal_gain_c_per_w * power_w;
  next.temperature_c = target + (state.temperature_c - target) * std::exp(-dt_ms / params.tau_thermal_ms);
  return next;
}

double heater_resistance(double temperature_c, const HotplateParams& params) {
  return params.r0_ohm * (1.0 + params.alpha_per_c * (temperature_c - params.t0_c));
}

// --- sensing layer ----------------------------------------------------------

double sensitivity(const OdourResponse& r, double temperature_c) {
  if (r.beta_max == 0.0) return 0.0;
  const double z = (temperature_c - r.t_opt_c) / r.w_c;
  return r.beta_max * std::exp(-z * z);
}

double update_coverage(double theta, double c, const OdourResponse& r, double dt_ms) {
  c = std::clamp(c, 0.0, 1.0);
  const double ads = c / r.tau_ads_ms;
  const double rate = ads + (1.0 - c) / r.tau_des_ms;
  if (rate <= 0.0) return theta;
  const double steady = ads / rate;
  const double next = steady + (theta - steady) * std::exp(-rate * dt_ms);
  return std::clamp(next, 0.0, 1.0);
}

double clean_log10_resistance(const SensorState& state, const SensingLayerParams& params,
                              double air_offset_log10) {
  double log_r = params.a_s + air_offset_log10 + params.b_s * state.temperature_c;
  for (std::size_t k = 0; k < kOdourCount; ++k) {
    if (state.coverage[k] > 0.0) log_r -= sensitivity(params.response[k], state.temperature_c) * state.coverage[k];
  }
  return log_r;
}

double quantize_adc(double resistance_ohm, const SensingNoise& noise) {
  const double lsb = noise.full_scale_ohm / std::ldexp(1.0, noise.adc_bits);
  const double max_code = std::ldexp(1.0, noise.adc_bits) - 1.0;
  const double code = std::clamp(std::nearbyint(resistance_ohm / lsb), 0.0, max_code);
  return code * lsb;
}

SensorState sensing_resistance(const SensorState& state, const SensingLayerParams& params,
                               const OdourTable& concentrations, double dt_ms,
                               const SensingNoise& noise, Rng* rng, double air_offset_log10) {
  SensorState next = state;
  for (std::size_t k = 0; k < kOdourCount; ++k) {
    next.coverage[k] = update_coverage(state.coverage[k], concentrations[k], params.response[k], dt_ms);
  }
  double log_r = clean_log10_resistance(next, params, air_offset_log10);
  if (rng != nullptr && noise.sigma_log10 > 0.0) log_r += noise.sigma_log10 * rng->normal();
  next.resistance_ohm = quantize_adc(std::pow(10.0, log_r), noise);
  return next;
}

double BaselineWander::step(double offset, double dt_ms, Rng& rng) const {
  if (sigma_log10 <= 0.0) return 0.0;
  const double a = std::exp(-dt_ms / (tau_s * 1000.0));
  return offset * a + sigma_log10 * std::sqrt(1.0 - a * a) * rng.normal();
}

// --- heater plant -----------------------------------------------------------

HeaterPlant::HeaterPlant(HotplateParams hotplate, HeaterCircuitParams circuit,
                         double initial_temperature_c)
    : hotplate_(hotplate), circuit_(circuit), temperature_c_(initial_temperature_c) {}

HeaterPlant::Reading HeaterPlant::tick(double v_dac, Rng* rng) {
  const double lag = circuit_.amp_lag_ticks > 0.0 ? std::exp(-1.0 / circuit_.amp_lag_ticks) : 0.0;
  v_amp_ = v_dac + (v_amp_ - v_dac) * lag;
  Reading r;
  r.v_dac = v_dac;
  r.true_temperature_c = temperature_c_;
  r.true_r_heat = heater_resistance(temperature_c_, hotplate_);
  const double current = std::max(v_amp_, 0.0) / (r.true_r_heat + circuit_.r_sense_ohm);
  r.v_sense = current * circuit_.r_sense_ohm;
  if (rng != nullptr && circuit_.v_sense_noise_v > 0.0) r.v_sense += circuit_.v_sense_noise_v * rng->normal();
  r.power_w = current * current * r.true_r_heat;
  SensorState s;
  s.temperature_c = temperature_c_;
  temperature_c_ = step_thermal(s, hotplate_, r.power_w, 1.0).temperature_c;
  return r;
}

double HeaterPlant::steady_voltage(double temperature_c) const {
  const double r = heater_resistance(temperature_c, hotplate_);
  const double p = std::max(temperature_c - hotplate_.t_ambient_c, 0.0) / hotplate_.thermal_gain_c_per_w;
  const double i = std::sqrt(p / r);
  return i * (r + circuit_.r_sense_ohm);
}

// --- PID -----------------------------------------------------------------------

std::vector<double> pid_response(const std::array<std::vector<double>, kOdourCount>& concentrations,
                                 const PidParams& params, Rng* rng) {
  const std::size_t n = concentrations[0].size();
  std::vector<double> out(n, 0.0);
  const double a = params.tau_ms > 0.0 ? std::exp(-1.0 / params.tau_ms) : 0.0;
  double y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.0;
    for (std::size_t k = 0; k < kOdourCount; ++k) u += params.gain[k] * concentrations[k][i];
    y = u + (y - u) * a;
    out[i] = params.baseline_v + y;
    if (rng != nullptr && params.noise_sigma_v > 0.0) out[i] += params.noise_sigma_v * rng->normal();
  }
  return out;
}

// --- parameter file ---------------------------------------------------------

namespace {

using text::format_double;

}  // namespace

void write_sensor_params(std::ostream& out, const SensorParamSet& params) {
  out << "# fastnose sensor parameters v1\n";
  out << "[air]\nsensor_id,a_s,b_s\n";
  for (const auto& s : params.sensors)
    out << s.sensor_id << ',' << format_double(s.layer.a_s) << ',' << format_double(s.layer.b_s) << '\n';
  out << "[response]\nsensor_id,odour,beta_max,t_opt_c,w_c,tau_ads_ms,tau_des_ms\n";
  for (const auto& s : params.sensors) {
    for (Odour o : kAllOdours) {
      const auto& r = s.layer.response[index_of(o)];
      out << s.sensor_id << ',' << odour_name(o) << ',' << format_double(r.beta_max) << ','
          << format_double(r.t_opt_c) << ',' << format_double(r.w_c) << ','
          << format_double(r.tau_ads_ms) << ',' << format_double(r.tau_des_ms) << '\n';
    }
  }
  out << "[hotplate]\nsensor_id,r0_ohm,t0_c,alpha_per_c,thermal_gain_c_per_w,tau_thermal_ms,t_ambient_c\n";
  for (const auto& s : params.sensors) {
    const auto& h = s.hotplate;
    out << s.sensor_id << ',' << format_double(h.r0_ohm) << ',' << format_double(h.t0_c) << ','
        << format_double(h.alpha_per_c) << ',' << format_double(h.thermal_gain_c_per_w) << ','
        << format_double(h.tau_thermal_ms) << ',' << format_double(h.t_ambient_c) << '\n';
  }
  out << "[datasheet]\nsensor_id,nominal_power_w,nominal_delta_c\n";
  for (const auto& s : params.sensors)
    out << s.sensor_id << ',' << format_double(s.datasheet.nominal_power_w) << ','
        << format_double(s.datasheet.nominal_delta_c) << '\n';
}

SensorParamSet read_sensor_params(std::istream& in) {
  std::map<int, SensorParams> by_id;
  std::string section;
  bool expect_header = false;
  std::string line;
  int lineno = 0;
  auto sensor = [&](std::string_view id) -> SensorParams& {
    const int sid = static_cast<int>(text::parse_int(id));
    auto& s = by_id[sid];
    s.sensor_id = sid;
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      section = std::string(t.substr(1, t.size() - 2));
      expect_header = true;
      continue;
    }
    if (expect_header) {
      expect_header = false;
      continue;
    }
    const auto f = text::split(t, ',');
    try {
      if (section == "air") {
        if (f.size() != 3) throw std::invalid_argument("expected 3 columns");
        auto& s = sensor(f[0]);
        s.layer.a_s = text::parse_double(f[1]);
        s.layer.b_s = text::parse_double(f[2]);
      } else if (section == "response") {
        if (f.size() != 7) throw std::invalid_argument("expected 7 columns");
        auto& r = sensor(f[0]).layer.response[index_of(odour_from_name(text::trim(f[1])))];
        r.beta_max = text::parse_double(f[2]);
        r.t_opt_c = text::parse_double(f[3]);
        r.w_c = text::parse_double(f[4]);
        r.tau_ads_ms = text::parse_double(f[5]);
        r.tau_des_ms = text::parse_double(f[6]);
        if (r.tau_ads_ms <= 0.0 || r.tau_des_ms < r.tau_ads_ms || r.beta_max < 0.0)
          throw std::invalid_argument("response kinetics violate tau_des >= tau_ads > 0, beta >= 0");
      } else if (section == "hotplate") {
        if (f.size() != 7) throw std::invalid_argument("expected 7 columns");
        auto& h = sensor(f[0]).hotplate;
        h.r0_ohm = text::parse_double(f[1]);
        h.t0_c = text::parse_double(f[2]);
        h.alpha_per_c = text::parse_double(f[3]);
        h.thermal_gain_c_per_w = text::parse_double(f[4]);
        h.tau_thermal_ms = text::parse_double(f[5]);
        h.t_ambient_c = text::parse_double(f[6]);
        if (h.tau_thermal_ms <= 0.0 || h.alpha_per_c <= 0.0)
          throw std::invalid_argument("hotplate needs tau > 0 and alpha > 0");
      } else if (section == "datasheet") {
        if (f.size() != 3) throw std::invalid_argument("expected 3 columns");
        auto& d = sensor(f[0]).datasheet;
        d.nominal_power_w = text::parse_double(f[1]);
        d.nominal_delta_c = text::parse_double(f[2]);
      } else {
        throw std::invalid_argument("unknown section [" + section + "]");
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sensor parameter file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  SensorParamSet set;
  for (auto& [id, s] : by_id) {
    if (s.layer.response[index_of(Odour::Blank)].beta_max != 0.0)
      throw std::invalid_argument("blank odour must have beta_max = 0");
    set.sensors.push_back(s);
  }
  if (set.sensors.empty()) throw std::invalid_argument("sensor parameter file has no sensors");
  return set;
}

SensorParamSet load_sensor_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sensor parameter file " + path);
  return read_sensor_params(in);
}

void save_sensor_params(const std::string& path, const SensorParamSet& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_sensor_params(out, params);
}

std::uint64_t SensorParamSet::hash() const {
  std::ostringstream os;
  write_sensor_params(os, *this);
  return text::fnv1a(os.str());
}

std::string default_sensor_params_path() { return std::string(FASTNOSE_DATA_DIR) + "/sensor_params.txt"; }

SensorParamSet generate_sensor_params(std::uint64_t seed) {
  Rng rng(seed);
  SensorParamSet set;
  for (int id = 1; id <= 8; ++id) {
    SensorParams s;
    s.sensor_id = id;
    // Sensors 1 and 5 are the MiCS-type packages; the rest CCS-type.
    const bool mics = (id == 1 || id == 5);
    s.hotplate.r0_ohm = (mics ? 70.0 : 85.0) * rng.uniform(0.95, 1.05);
    s.hotplate.alpha_per_c = rng.uniform(0.0014, 0.0017);
    s.hotplate.thermal_gain_c_per_w = rng.uniform(9000.0, 11000.0);
    s.hotplate.tau_thermal_ms = 3.0;
    s.datasheet.nominal_power_w = 0.0375;
    s.datasheet.nominal_delta_c = s.hotplate.thermal_gain_c_per_w * s.datasheet.nominal_power_w;
    s.layer.a_s = rng.uniform(6.2, 6.8);
    s.layer.b_s = rng.uniform(-0.0045, -0.0035);
    for (Odour o : kActiveOdours) {
      auto& r = s.layer.response[index_of(o)];
      r.beta_max = rng.uniform(0.15, 0.6);
      r.t_opt_c = rng.uniform(150.0, 450.0);
      r.w_c = rng.uniform(80.0, 220.0);
      r.tau_ads_ms = 20.0;
      r.tau_des_ms = 150.0;
    }
    auto& blank = s.layer.response[index_of(Odour::Blank)];
    blank = OdourResponse{};
    blank.beta_max = 0.0;
    set.sensors.push_back(s);
  }
  return set;
}

}  // namespace fastnose
