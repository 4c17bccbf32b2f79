#include "fastnose/config.hpp"

#include "fastnose/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fastnose {

namespace {

constexpr const char* kDefaults = R"(
[plant]
sensor_params =
tau_thermal_ms = 3
v_sense_noise_v = 0.0001
amp_lag_ticks = 0.5
sensing_sigma_log10 = 0.002
adc_bits = 24
adc_full_scale_ohm = 8388608
wander_sigma_log10 = 0.08
wander_tau_s = 60
response_jitter_sigma = 0.15
ambient_c = 25
ambient_sigma_c = 0.5
ambient_tau_s = 1800
transport_delay_ms = 10
transport_tau_ms = 8
pid_tau_ms = 3
pid_noise_v = 0.002

[controller]
r_sense_ohm = 10
dac_lsb_v = 0.0007
dac_bits = 12
kalman_q = 0.0025
kalman_sigma0 = 0.2
kalman_kt = 3.4879
adapt_gain_v_per_degc_s = 0.1
cycle_profile = 150:25, 400:25
slow_cycle_profile = 150:100, 400:100
constant_temperature_c = 400

[protocol]
scale = 0.2
recovery_ms = 30000
recovery_jitter_ms = 1000
gap_stride_ms = 10
lead_in_ms = 200
pre_ms = 5100
post_ms = 2100
t_pre_ms = -5000

[ml]
knn_k = 5
svm_c = 1000
svm_gamma = 0.0001
svm_tol = 0.001
svm_max_iter = 2000000
forest_trees = 100
forest_max_depth = 0
folds = 5
temporal_seeds = 10
max_scope = per-sensor
)";

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Config Config::defaults() {
  Config c;
  std::istringstream in(kDefaults);
  std::string line, section;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      section = std::string(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    c.values_[section][std::string(text::trim(t.substr(0, eq)))] =
        std::string(text::trim(t.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::string& path) {
  Config c = defaults();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    c.merge_text(ss.str(), path);
  }
  c.apply_env();
  return c;
}

void Config::merge_text(const std::string& body, const std::string& origin) {
  std::istringstream in(body);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']') throw std::invalid_argument(where + ": malformed section header");
      section = std::string(text::trim(t.substr(1, t.size() - 2)));
      if (!values_.count(section)) throw std::invalid_argument(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument(where + ": expected key = value");
    if (section.empty()) throw std::invalid_argument(where + ": key outside any section");
    const std::string key(text::trim(t.substr(0, eq)));
    if (!has(section, key)) throw std::invalid_argument(where + ": unknown key " + section + "." + key);
    values_[section][key] = std::string(text::trim(t.substr(eq + 1)));
  }
}

void Config::apply_env() {
  for (auto& [section, kv] : values_) {
    for (auto& [key, value] : kv) {
      const std::string name = "FASTNOSE_" + upper(section) + "_" + upper(key);
      if (const char* v = std::getenv(name.c_str())) value = v;
    }
  }
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!has(section, key)) throw std::invalid_argument("unknown config key " + section + "." + key);
  values_[section][key] = value;
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  if (it == values_.end() || !it->second.count(key))
    throw std::invalid_argument("unknown config key " + section + "." + key);
  return it->second.at(key);
}

double Config::get_double(const std::string& section, const std::string& key) const {
  try {
    return text::parse_double(get(section, key));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("config " + section + "." + key + " is not a number: '" +
                                get(section, key) + "'");
  }
}

long long Config::get_int(const std::string& section, const std::string& key) const {
  try {
    return text::parse_int(get(section, key));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("config " + section + "." + key + " is not an integer: '" +
                                get(section, key) + "'");
  }
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [section, kv] : values_)
    for (const auto& [key, value] : kv) out += section + "." + key + "=" + value + "\n";
  return out;
}

std::vector<CycleStep> parse_profile(const std::string& s) {
  std::vector<CycleStep> out;
  for (auto item : text::split(s, ',')) {
    item = text::trim(item);
    if (item.empty()) continue;
    const auto parts = text::split(item, ':');
    if (parts.size() != 2) throw std::invalid_argument("profile entry must be temperature:duration, got '" + std::string(item) + "'");
    const double t = text::parse_double(parts[0]);
    const auto d = text::parse_int(parts[1]);
    if (d < 25) throw std::invalid_argument("profile step shorter than 25 ms");
    out.push_back({t, static_cast<int>(d)});
  }
  if (out.empty()) throw std::invalid_argument("empty heater profile");
  return out;
}

std::string default_config_path() { return std::string(FASTNOSE_CONFIG_DIR) + "/default.ini"; }

}  // namespace fastnose
