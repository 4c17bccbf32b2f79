#include "fastnose/protocol.hpp"

#include "fastnose/text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace fastnose {

char protocol_letter(ProtocolId id) { return "ABC"[static_cast<int>(id)]; }

ProtocolId parse_protocol(std::string_view s) {
  if (s == "A") return ProtocolId::A;
  if (s == "B") return ProtocolId::B;
  if (s == "C") return ProtocolId::C;
  throw std::invalid_argument("unknown protocol '" + std::string(s) + "' (A|B|C)");
}

// --- manifest ---------------------------------------------------------------------

StimulusSpec Trial::spec(double onset_in_window) const {
  StimulusSpec s;
  s.odours.push_back(odour_a);
  if (odour_b) s.odours.push_back(*odour_b);
  s.pulse_duration_ms = duration_ms;
  s.concentration = concentration_pct / 100.0;
  s.modulation_frequency_hz = frequency_hz;
  s.mode = mode;
  s.onset_ms = onset_in_window;
  return s;
}

std::string Trial::pair_name() const {
  if (!odour_b) return std::string(odour_name(odour_a));
  Odour a = odour_a, b = *odour_b;
  if (index_of(b) < index_of(a)) std::swap(a, b);
  return std::string(odour_name(a)) + "-" + std::string(odour_name(b));
}

bool operator==(const Trial& a, const Trial& b) {
  return a.trial_id == b.trial_id && a.odour_a == b.odour_a && a.odour_b == b.odour_b &&
         a.duration_ms == b.duration_ms && a.concentration_pct == b.concentration_pct &&
         a.frequency_hz == b.frequency_hz && a.mode == b.mode && a.onset_ms == b.onset_ms && a.seed == b.seed;
}

namespace {
constexpr const char* kManifestHeader =
    "trial_id,odour_a,odour_b,duration_ms,concentration_pct,frequency_hz,mode,onset_ms,seed";
}

void write_manifest(std::ostream& out, const std::vector<Trial>& trials) {
  out << kManifestHeader << '\n';
  for (const auto& t : trials) {
    out << t.trial_id << ',' << odour_name(t.odour_a) << ',' << (t.odour_b ? odour_name(*t.odour_b) : "") << ','
        << t.duration_ms << ',' << t.concentration_pct << ',' << text::format_double(t.frequency_hz) << ','
        << mode_name(t.mode) << ',' << t.onset_ms << ',' << t.seed << '\n';
  }
}

std::vector<Trial> read_manifest(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && (text::trim(line).empty() || text::trim(line).front() == '#')) {
  }
  if (text::trim(line) != kManifestHeader) throw std::runtime_error("manifest header mismatch");
  std::vector<Trial> out;
  while (std::getline(in, line)) {
    const auto tl = text::trim(line);
    if (tl.empty()) continue;
    const auto f = text::split(tl, ',');
    if (f.size() != 9) throw std::runtime_error("manifest row with " + std::to_string(f.size()) + " fields");
    Trial t;
    t.trial_id = std::string(f[0]);
    t.odour_a = odour_from_name(f[1]);
    if (!text::trim(f[2]).empty()) t.odour_b = odour_from_name(text::trim(f[2]));
    t.duration_ms = static_cast<int>(text::parse_int(f[3]));
    t.concentration_pct = static_cast<int>(text::parse_int(f[4]));
    t.frequency_hz = text::parse_double(f[5]);
    t.mode = parse_mode(text::trim(f[6]));
    t.onset_ms = text::parse_int(f[7]);
    t.seed = text::parse_u64(f[8]);
    out.push_back(std::move(t));
  }
  return out;
}

// --- stimulus set ---------------------------------------------------------------------

int scaled_repetitions(int base, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be > 0");
  return std::max(1, static_cast<int>(std::lround(base * scale)));
}

std::vector<Trial> make_manifest(ProtocolId id, std::uint64_t seed, const ProtocolSettings& settings,
                                 unsigned kinds) {
  std::vector<Trial> list;
  auto add = [&](int reps, Trial t) {
    for (int r = 0; r < reps; ++r) list.push_back(t);
  };
  auto pulse = [](Odour o, int duration, int conc) {
    Trial t;
    t.odour_a = o;
    t.duration_ms = duration;
    t.concentration_pct = conc;
    return t;
  };
  auto train = [](Odour a, Odour b, double f, CorrelationMode m) {
    Trial t;
    t.odour_a = a;
    t.odour_b = b;
    t.frequency_hz = f;
    t.mode = m;
    return t;
  };
  if (kinds & kFullPulse) {
    const int reps = scaled_repetitions(50, settings.scale);
    for (Odour o : kActiveOdours) add(reps, pulse(o, 1000, 100));
    // Two identical blank vials.
    add(reps, pulse(Odour::Blank, 1000, 100));
    add(reps, pulse(Odour::Blank, 1000, 100));
  }
  if (kinds & kConcentration) {
    const int reps = scaled_repetitions(20, settings.scale);
    for (Odour o : kActiveOdours)
      for (int c : {20, 40, 60, 80}) add(reps, pulse(o, 1000, c));
  }
  if (kinds & kShortPulse) {
    const int reps = scaled_repetitions(5, settings.scale);
    for (Odour o : kActiveOdours)
      for (int d : {10, 20, 50, 100, 200, 500}) add(reps, pulse(o, d, 100));
  }
  if (kinds & (kAntiTrain | kCorrTrain)) {
    const int reps = scaled_repetitions(5, settings.scale);
    for (std::size_t i = 0; i < kActiveOdours.size(); ++i)
      for (std::size_t j = i + 1; j < kActiveOdours.size(); ++j)
        for (double f : kProtocolFrequenciesHz) {
          const Odour a = kActiveOdours[i], b = kActiveOdours[j];
          if (kinds & kAntiTrain) {
            add(reps, train(a, b, f, CorrelationMode::AntiCorrelated));
            add(reps, train(b, a, f, CorrelationMode::AntiCorrelated));
          }
          if (kinds & kCorrTrain)
            add(reps, train(a, b, f, CorrelationMode::Correlated));
        }
  }
  if (list.empty()) throw std::invalid_argument("stimulus selection is empty");

  Rng rng(derive_seed(seed, 1));
  rng.shuffle(list);
  std::int64_t onset = settings.recovery_ms;
  const char letter = protocol_letter(id);
  for (std::size_t k = 0; k < list.size(); ++k) {
    auto& t = list[k];
    char id_buf[16];
    std::snprintf(id_buf, sizeof id_buf, "%c%05zu", letter, k + 1);
    t.trial_id = id_buf;
    t.onset_ms = onset;
    t.seed = derive_seed(seed, 1000 + k);
    validate_protocol_stimulus(t.spec(0.0));
    const auto jitter = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(settings.recovery_jitter_ms) + 1));
    // Next onset leaves the full recovery after this stimulus and room for
    // the next trial's pre-stimulus recording.
    onset += t.duration_ms + std::max<std::int64_t>(settings.recovery_ms, settings.post_ms + settings.pre_ms +
                                                                             settings.lead_in_ms) +
             jitter;
  }
  return list;
}

// --- layout / settings ------------------------------------------------------------------

int BankSetup::period_ms() const {
  int p = 0;
  for (const auto& s : profile) p += s.duration_ms;
  return p;
}

SimulationSettings settings_from_config(const Config& c) {
  SimulationSettings s;
  auto& p = s.plant;
  p.tau_thermal_ms = c.get_double("plant", "tau_thermal_ms");
  p.circuit.r_sense_ohm = c.get_double("controller", "r_sense_ohm");
  p.circuit.amp_lag_ticks = c.get_double("plant", "amp_lag_ticks");
  p.circuit.v_sense_noise_v = c.get_double("plant", "v_sense_noise_v");
  p.noise.sigma_log10 = c.get_double("plant", "sensing_sigma_log10");
  p.noise.adc_bits = static_cast<int>(c.get_int("plant", "adc_bits"));
  p.noise.full_scale_ohm = c.get_double("plant", "adc_full_scale_ohm");
  p.wander.sigma_log10 = c.get_double("plant", "wander_sigma_log10");
  p.wander.tau_s = c.get_double("plant", "wander_tau_s");
  p.response_jitter_sigma = c.get_double("plant", "response_jitter_sigma");
  if (p.response_jitter_sigma < 0.0) throw std::invalid_argument("plant.response_jitter_sigma must be >= 0");
  p.ambient_c = c.get_double("plant", "ambient_c");
  p.ambient_sigma_c = c.get_double("plant", "ambient_sigma_c");
  p.ambient_tau_s = c.get_double("plant", "ambient_tau_s");
  p.transport.delay_ms = c.get_double("plant", "transport_delay_ms");
  p.transport.tau_ms = c.get_double("plant", "transport_tau_ms");
  p.pid.tau_ms = c.get_double("plant", "pid_tau_ms");
  p.pid.noise_sigma_v = c.get_double("plant", "pid_noise_v");

  auto& k = s.controller;
  k.r_sense_ohm = p.circuit.r_sense_ohm;
  k.dac.lsb_v = c.get_double("controller", "dac_lsb_v");
  k.dac.bits = static_cast<int>(c.get_int("controller", "dac_bits"));
  k.kalman.q = c.get_double("controller", "kalman_q");
  k.kalman.sigma0 = c.get_double("controller", "kalman_sigma0");
  k.kalman.kt = c.get_double("controller", "kalman_kt");
  k.adapt_gain_v_per_degc_s = c.get_double("controller", "adapt_gain_v_per_degc_s");
  k.ambient_c = p.ambient_c;
  s.cycle_profile = parse_profile(c.get("controller", "cycle_profile"));
  s.slow_cycle_profile = parse_profile(c.get("controller", "slow_cycle_profile"));
  s.constant_temperature_c = c.get_double("controller", "constant_temperature_c");
  k.profile = s.cycle_profile;

  auto& pr = s.protocol;
  pr.scale = c.get_double("protocol", "scale");
  pr.recovery_ms = static_cast<int>(c.get_int("protocol", "recovery_ms"));
  pr.recovery_jitter_ms = static_cast<int>(c.get_int("protocol", "recovery_jitter_ms"));
  pr.gap_stride_ms = static_cast<int>(c.get_int("protocol", "gap_stride_ms"));
  pr.lead_in_ms = static_cast<int>(c.get_int("protocol", "lead_in_ms"));
  pr.pre_ms = static_cast<int>(c.get_int("protocol", "pre_ms"));
  pr.post_ms = static_cast<int>(c.get_int("protocol", "post_ms"));
  pr.t_pre_ms = static_cast<int>(c.get_int("protocol", "t_pre_ms"));
  if (pr.recovery_ms < 30000) throw std::invalid_argument("protocol.recovery_ms must be >= 30000");
  if (pr.gap_stride_ms < 1) throw std::invalid_argument("protocol.gap_stride_ms must be >= 1");
  if (pr.pre_ms < -pr.t_pre_ms + 100)
    throw std::invalid_argument("protocol.pre_ms must cover the pre-stimulus anchor window");
  s.sensor_params_path = c.get("plant", "sensor_params");
  return s;
}

ProtocolLayout protocol_layout(ProtocolId id, const SimulationSettings& s) {
  ProtocolLayout l;
  l.id = id;
  BankSetup cycled{true, s.cycle_profile, s.constant_temperature_c};
  BankSetup constant{false, {}, s.constant_temperature_c};
  BankSetup slow{true, s.slow_cycle_profile, s.constant_temperature_c};
  switch (id) {
    case ProtocolId::A: l.banks = {cycled, cycled}; break;
    case ProtocolId::B: l.banks = {constant, cycled}; break;
    case ProtocolId::C: l.banks = {constant, slow}; break;
  }
  return l;
}

// --- runner ---------------------------------------------------------------------------------

struct ProtocolRunner::Channel {
  const SensorParams* params;
  SensingLayerParams layer;
  HeaterPlant plant;
  HeaterController ctrl;
  SensorState state;
  double wander = 0.0;
  const BankSetup* bank;
  bool in_step = false;
  bool partial = false;
  std::int64_t step_end = 0;
  std::vector<double> voltages;
  std::vector<double> true_temperature;
};

ProtocolRunner::~ProtocolRunner() = default;

ProtocolRunner::ProtocolRunner(ProtocolId id, SensorParamSet params, SimulationSettings settings, std::uint64_t seed)
    : id_(id), params_(std::move(params)), settings_(std::move(settings)), seed_(seed) {
  if (params_.sensors.size() != kSensorCount)
    throw std::invalid_argument("sensor parameter set must describe 8 sensors");
  params_hash_ = params_.hash();
  if (settings_.plant.tau_thermal_ms > 0.0)
    for (auto& s : params_.sensors) s.hotplate.tau_thermal_ms = settings_.plant.tau_thermal_ms;
  for (auto& s : params_.sensors) s.hotplate.t_ambient_c = settings_.plant.ambient_c;
  layout_ = protocol_layout(id, settings_);

  channels_.reserve(kSensorCount);
  for (std::size_t s = 0; s < kSensorCount; ++s) {
    const auto& sp = params_.sensors[s];
    HeaterPlant plant(sp.hotplate, settings_.plant.circuit, settings_.plant.ambient_c);
    Rng cal_rng(derive_seed(seed, 100 + s));
    ControllerConfig cfg = settings_.controller;
    cfg.profile = layout_.bank_of(s).profile;
    auto ctrl = make_calibrated_controller(plant, sp.datasheet, cfg, &cal_rng);
    SensorState st;
    st.temperature_c = plant.temperature_c();
    channels_.push_back(Channel{&sp, sp.layer, std::move(plant), std::move(ctrl), st, 0.0, &layout_.bank_of(s), false, false, 0, {}, {}});
  }
  // Warm-up so controllers start every protocol converged.
  Rng warm(derive_seed(seed, 5));
  simulate_window(nullptr, 0, 0, 3000, warm);
  cursor_ms_ = 3000;
}

const std::vector<double>& ProtocolRunner::last_voltages(std::size_t s) const { return channels_.at(s).voltages; }
const std::vector<double>& ProtocolRunner::last_true_temperature(std::size_t s) const {
  return channels_.at(s).true_temperature;
}

void ProtocolRunner::advance_gap(std::int64_t until_ms, Rng& rng) {
  const double amb_tau_ms = settings_.plant.ambient_tau_s * 1000.0;
  while (cursor_ms_ < until_ms) {
    const double dt = static_cast<double>(std::min<std::int64_t>(settings_.protocol.gap_stride_ms, until_ms - cursor_ms_));
    for (auto& ch : channels_) {
      for (std::size_t o = 0; o < kOdourCount; ++o)
        ch.state.coverage[o] = update_coverage(ch.state.coverage[o], 0.0, ch.params->layer.response[o], dt);
      ch.wander = settings_.plant.wander.step(ch.wander, dt, rng);
    }
    if (settings_.plant.ambient_sigma_c > 0.0) {
      const double a = std::exp(-dt / amb_tau_ms);
      ambient_offset_ = ambient_offset_ * a + settings_.plant.ambient_sigma_c * std::sqrt(1.0 - a * a) * rng.normal();
    }
    cursor_ms_ += static_cast<std::int64_t>(dt);
  }
  for (auto& ch : channels_) ch.plant.set_ambient(settings_.plant.ambient_c + ambient_offset_);
}

namespace {

double quantize_step(double v, double step) { return std::round(v / step) * step; }

}  // namespace

Recording ProtocolRunner::simulate_window(const Trial* trial, std::int64_t start_ms, int lead_ms, int length_ms,
                                          Rng& rng) {
  const auto n = static_cast<std::size_t>(length_ms);
  ConcentrationTrace conc;
  std::vector<double> pid(n, settings_.plant.pid.baseline_v);
  std::vector<std::uint32_t> mask(n, 0);
  std::vector<double> flow(n, 1.0);
  if (trial) {
    const double onset_local = static_cast<double>(trial->onset_ms - start_ms);
    const auto schedule = build_schedule(trial->spec(onset_local), static_cast<double>(length_ms));
    conc = transport(schedule, settings_.plant.transport);
    pid = pid_response(conc.odour, settings_.plant.pid, &rng);
    const auto m0 = schedule.manifold_flow(0);
    const auto m1 = schedule.manifold_flow(1);
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = schedule.gate_mask(i);
      flow[i] = 0.25 * (m0[2 * i] + m0[2 * i + 1] + m1[2 * i] + m1[2 * i + 1]);
    }
  } else {
    for (auto& v : conc.odour) v.assign(n, 0.0);
  }

  Recording rec;
  rec.header.seed = seed_;
  rec.header.protocol = protocol_letter(id_);
  rec.header.params_hash = params_hash_;
  if (trial) rec.header.trial_id = trial->trial_id;
  rec.t0_ms = start_ms + lead_ms;
  rec.resize(n - static_cast<std::size_t>(lead_ms));

  for (auto& ch : channels_) {
    ch.voltages.clear();
    ch.true_temperature.clear();
    ch.in_step = false;
    ch.layer = ch.params->layer;
    if (trial && settings_.plant.response_jitter_sigma > 0.0)
      for (Odour o : kActiveOdours)
        ch.layer.response[index_of(o)].beta_max *= std::exp(settings_.plant.response_jitter_sigma * rng.normal());
    if (!ch.bank->cycled) ch.ctrl.begin_hold(ch.bank->constant_c);
  }

  const double rs = settings_.plant.circuit.r_sense_ohm;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t t = start_ms + static_cast<std::int64_t>(i);
    const OdourTable c = conc.at(i);
    const bool recorded = i >= static_cast<std::size_t>(lead_ms);
    const std::size_t row = i - static_cast<std::size_t>(lead_ms);
    for (std::size_t s = 0; s < kSensorCount; ++s) {
      auto& ch = channels_[s];
      if (ch.bank->cycled && !ch.in_step) {
        const int period = ch.bank->period_ms();
        const int phase = static_cast<int>(((t % period) + period) % period);
        int begin = 0;
        std::size_t k = 0;
        while (phase >= begin + ch.bank->profile[k].duration_ms) begin += ch.bank->profile[k++].duration_ms;
        ch.ctrl.begin_step(ch.bank->profile[k].temperature_c, ch.bank->profile[k].duration_ms);
        ch.partial = phase != begin;
        ch.step_end = t - phase + begin + ch.bank->profile[k].duration_ms;
        ch.in_step = true;
      }
      const double v = ch.ctrl.voltage();
      const auto reading = ch.plant.tick(v, &rng);
      ch.ctrl.observe({reading.v_dac, reading.v_sense, rs});
      ch.voltages.push_back(v);
      ch.true_temperature.push_back(ch.plant.temperature_c());
      if (ch.bank->cycled && t + 1 == ch.step_end) {
        if (ch.partial) ch.ctrl.cancel_step();
        else ch.ctrl.end_step();
        ch.in_step = false;
      }

      ch.state.temperature_c = ch.plant.temperature_c();
      ch.wander = settings_.plant.wander.step(ch.wander, 1.0, rng);
      ch.state = sensing_resistance(ch.state, ch.layer, c, 1.0, settings_.plant.noise, &rng, ch.wander);
      if (recorded) {
        rec.resistance[s][row] = ch.state.resistance_ohm;
        rec.hotplate_c[s][row] = quantize_step(ch.ctrl.estimated_temperature(), 1e-3);
      }
    }
    if (recorded) {
      rec.valves[row] = mask[i];
      rec.pid_v[row] = quantize_step(pid[i], 1e-5);
      rec.flow_au[row] = flow[i];
    }
  }
  for (auto& ch : channels_) {
    if (ch.bank->cycled) {
      if (ch.in_step) ch.ctrl.cancel_step();
      ch.in_step = false;
    } else {
      ch.ctrl.end_hold();
    }
  }
  cursor_ms_ = start_ms + length_ms;
  return rec;
}

void ProtocolRunner::run(const std::vector<Trial>& manifest, const RecordingSink& sink) {
  const auto& ps = settings_.protocol;
  for (const auto& trial : manifest) {
    const std::int64_t start = trial.onset_ms - ps.pre_ms - ps.lead_in_ms;
    if (start < cursor_ms_)
      throw std::invalid_argument("trial " + trial.trial_id + " overlaps the previous recording window");
    Rng rng(trial.seed);
    advance_gap(start, rng);
    const int length = ps.lead_in_ms + ps.pre_ms + ps.post_ms;
    auto rec = simulate_window(&trial, start, ps.lead_in_ms, length, rng);
    sink(trial, std::move(rec));
  }
}

std::vector<Trial> run_protocol(ProtocolId id, std::uint64_t seed, const SensorParamSet& params,
                                const SimulationSettings& settings, const RecordingSink& sink, unsigned kinds) {
  auto manifest = make_manifest(id, seed, settings.protocol, kinds);
  ProtocolRunner runner(id, params, settings, seed);
  runner.run(manifest, sink);
  return manifest;
}

}  // namespace fastnose
