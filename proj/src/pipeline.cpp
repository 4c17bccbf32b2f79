#include "fastnose/pipeline.hpp"

#include "fastnose/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace fastnose {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

// Writes through a temporary sibling and renames it into place.
template <typename F>
void write_atomically(const std::string& path, F&& body) {
  const std::string tmp = path + ".tmp";
  {
    auto out = open_out(tmp);
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

std::string hex16(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

int adaptive_folds(const Dataset& d, int configured) {
  std::size_t smallest = d.size();
  for (auto c : d.class_counts())
    if (c > 0) smallest = std::min(smallest, c);
  const int f = std::min<int>(configured, static_cast<int>(smallest));
  return f < 2 ? 1 : f;
}

void shuffle_labels(Dataset& d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5eed5));
  rng.shuffle(d.y);
}

std::vector<std::string> odour_classes() {
  std::vector<std::string> c;
  for (Odour o : kAllOdours) c.emplace_back(odour_name(o));
  return c;
}

std::string freq_name(double f) { return text::format_double(f); }

}  // namespace

SensorParamSet load_sensor_params_for(const SimulationSettings& settings) {
  return load_sensor_params(settings.sensor_params_path.empty() ? default_sensor_params_path()
                                                                : settings.sensor_params_path);
}

// --- run directories ------------------------------------------------------------------

void simulate_to_directory(const std::string& dir, ProtocolId id, std::uint64_t seed, const Config& config,
                           bool binary, unsigned kinds) {
  const auto settings = settings_from_config(config);
  const auto params = load_sensor_params_for(settings);
  const auto manifest = make_manifest(id, seed, settings.protocol, kinds);
  fs::create_directories(fs::path(dir) / "trials");
  const auto manifest_path = (fs::path(dir) / "manifest.csv").string();
  if (fs::exists(manifest_path)) fs::remove(manifest_path);

  ProtocolRunner runner(id, params, settings, seed);
  runner.run(manifest, [&](const Trial& t, Recording&& rec) {
    const auto path = fs::path(dir) / "trials" / (t.trial_id + (binary ? ".bin" : ".csv"));
    save_recording(path.string(), rec);
  });

  {
    auto out = open_out((fs::path(dir) / "run.txt").string());
    out << "protocol " << protocol_letter(id) << "\nseed " << seed << "\nparams_hash " << hex16(runner.params_hash())
        << "\nscale " << text::format_double(settings.protocol.scale) << "\nformat " << (binary ? "binary" : "text")
        << "\n\n" << config.canonical();
  }
  write_atomically(manifest_path, [&](std::ostream& out) { write_manifest(out, manifest); });
}

std::string RunDirectory::trial_path(const Trial& t) const {
  return (fs::path(dir) / "trials" / (t.trial_id + (info.binary ? ".bin" : ".csv"))).string();
}

Recording RunDirectory::load(const Trial& t) const {
  auto rec = load_recording(trial_path(t));
  const auto& h = rec.header;
  if (h.trial_id != t.trial_id || h.protocol != protocol_letter(info.protocol) || h.seed != info.seed)
    throw std::runtime_error("recording " + trial_path(t) + " does not belong to this run");
  if (h.params_hash != info.params_hash)
    throw std::runtime_error("recording " + trial_path(t) + " was made with a different sensor parameter set");
  return rec;
}

RunDirectory open_run_directory(const std::string& dir) {
  RunDirectory r;
  r.dir = dir;
  const auto manifest_path = (fs::path(dir) / "manifest.csv").string();
  if (!fs::exists(manifest_path))
    throw std::runtime_error("no manifest.csv in " + dir + " (missing or incomplete simulation)");
  auto in = open_in((fs::path(dir) / "run.txt").string());
  std::string key, value;
  bool have_protocol = false, have_seed = false, have_hash = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto tl = text::trim(line);
    if (tl.empty()) break;
    std::istringstream ls{std::string(tl)};
    ls >> key >> value;
    if (key == "protocol") {
      r.info.protocol = parse_protocol(value);
      have_protocol = true;
    } else if (key == "seed") {
      r.info.seed = text::parse_u64(value);
      have_seed = true;
    } else if (key == "params_hash") {
      r.info.params_hash = std::stoull(value, nullptr, 16);
      have_hash = true;
    } else if (key == "scale") {
      r.info.scale = text::parse_double(value);
    } else if (key == "format") {
      r.info.binary = value == "binary";
    }
  }
  if (!have_protocol || !have_seed || !have_hash) throw std::runtime_error("run.txt in " + dir + " is incomplete");
  auto min = open_in(manifest_path);
  r.manifest = read_manifest(min);
  return r;
}

// --- features -----------------------------------------------------------------------------

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "phase") return FeatureMode::Phase;
  if (s == "dft") return FeatureMode::Dft;
  throw std::invalid_argument("unknown feature mode '" + s + "' (phase|dft)");
}

FeatureOptions feature_options_from_config(const Config& config, FeatureMode mode, bool raw) {
  FeatureOptions o;
  o.mode = mode;
  o.raw = raw;
  if (raw && mode != FeatureMode::Phase) throw std::invalid_argument("--raw applies to phase features only");
  o.scope = parse_max_scope(config.get("ml", "max_scope"));
  o.t_pre_ms = static_cast<int>(config.get_int("protocol", "t_pre_ms"));
  int period = 0;
  for (const auto& s : parse_profile(config.get("controller", "cycle_profile"))) period += s.duration_ms;
  o.cycle_period_ms = period;
  o.window_ms = period;
  return o;
}

std::vector<std::size_t> feature_sensors(FeatureMode mode, ProtocolId id) {
  if (mode == FeatureMode::Phase) {
    if (id == ProtocolId::A) return {0, 1, 2, 3, 4, 5, 6, 7};
    if (id == ProtocolId::B) return {4, 5, 6, 7};
    throw std::invalid_argument("phase features need the 50 ms cycled bank; protocol C has none");
  }
  if (id == ProtocolId::A) throw std::invalid_argument("dft features need constant-temperature sensors; protocol A has none");
  return {0, 1, 2, 3};
}

const Trial& FeatureSet::trial(const std::string& id) const {
  const auto it = trial_index_.find(id);
  if (it == trial_index_.end()) throw std::out_of_range("trial " + id + " not in the feature manifest");
  return trials[it->second];
}

const std::map<std::string, std::vector<std::size_t>>& FeatureSet::rows_by_trial() const { return rows_; }

void FeatureSet::reindex() {
  trial_index_.clear();
  rows_.clear();
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (!trial_index_.emplace(trials[i].trial_id, i).second)
      throw std::runtime_error("duplicate trial id " + trials[i].trial_id);
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (!trial_index_.count(table.trial_id[r]))
      throw std::runtime_error("feature row for unknown trial " + table.trial_id[r]);
    rows_[table.trial_id[r]].push_back(r);
  }
}

FeatureSet empty_feature_set(ProtocolId id, std::uint64_t seed, const FeatureOptions& o) {
  FeatureSet s;
  s.protocol = id;
  s.seed = seed;
  s.variant = o.mode == FeatureMode::Dft ? "dft" : (o.raw ? "raw" : "normalized");
  s.table.kind = o.mode == FeatureMode::Dft ? FeatureKind::Spectral : FeatureKind::Phase;
  const auto n = feature_sensors(o.mode, id).size();
  if (o.mode == FeatureMode::Dft) {
    for (std::size_t k = 0; k < n; ++k)
      for (const char* f : {"freq", "mag", "phase"}) s.table.columns.push_back("s" + std::to_string(k) + "_" + f);
  } else {
    for (std::size_t i = 0; i < n * static_cast<std::size_t>(o.window_ms); ++i)
      s.table.columns.push_back("g_" + std::to_string(i));
  }
  return s;
}

void append_features(FeatureSet& set, const Trial& trial, const Recording& rec, const FeatureOptions& o) {
  const auto idx = feature_sensors(o.mode, set.protocol);
  std::vector<SeriesView> sensors;
  for (auto s : idx) sensors.push_back(rec.sensor(s));
  auto& tab = set.table;
  if (o.mode == FeatureMode::Dft) {
    const auto f = spectral_feature(sensors, trial.onset_ms, trial.offset_ms(), o.dft_tail_ms, SpectralTransform::Log);
    tab.trial_id.push_back(trial.trial_id);
    tab.t_ms.push_back(trial.onset_ms);
    tab.values.push_back(f.flat());
  } else {
    const CycleGrid grid{0, o.cycle_period_ms};
    const auto t_pre = grid.next_boundary(trial.onset_ms + o.t_pre_ms);
    for (auto t = grid.next_boundary(trial.onset_ms); t < trial.onset_ms + o.span_ms; t += o.cycle_period_ms) {
      tab.trial_id.push_back(trial.trial_id);
      tab.t_ms.push_back(t);
      if (o.raw)
        tab.values.push_back(raw_feature(sensors, t, grid, o.window_ms));
      else
        tab.values.push_back(phase_locked_feature(sensors, t, t_pre, trial.onset_ms, grid, o.scope, o.window_ms).g);
    }
  }
  set.trials.push_back(trial);
}

FeatureSet extract_features(const RunDirectory& run, const FeatureOptions& options,
                            const SensorParamSet* expected_params) {
  if (expected_params && expected_params->hash() != run.info.params_hash)
    throw std::runtime_error("run " + run.dir + " was simulated with a different sensor parameter file");
  auto set = empty_feature_set(run.info.protocol, run.info.seed, options);
  for (const auto& t : run.manifest) append_features(set, t, run.load(t), options);
  set.reindex();
  return set;
}

void save_feature_set(const std::string& path, const FeatureSet& set) {
  write_atomically(path + ".trials.csv", [&](std::ostream& out) {
    out << "# protocol " << protocol_letter(set.protocol) << " seed " << set.seed << " variant " << set.variant << '\n';
    write_manifest(out, set.trials);
  });
  write_atomically(path, [&](std::ostream& out) { write_feature_csv(out, set.table); });
}

FeatureSet load_feature_set(const std::string& path) {
  FeatureSet s;
  {
    auto in = open_in(path + ".trials.csv");
    std::string line;
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, k1, letter, k2, seed, k3, variant;
    ls >> hash >> k1 >> letter >> k2 >> seed >> k3 >> variant;
    if (hash != "#" || k1 != "protocol" || k2 != "seed" || k3 != "variant")
      throw std::runtime_error("feature manifest " + path + ".trials.csv has no header line");
    s.protocol = parse_protocol(letter);
    s.seed = text::parse_u64(seed);
    s.variant = variant;
    s.trials = read_manifest(in);
  }
  auto in = open_in(path);
  s.table = read_feature_csv(in);
  const bool dft = s.variant == "dft";
  if (dft != (s.table.kind == FeatureKind::Spectral))
    throw std::runtime_error("feature file " + path + " does not match its manifest variant");
  s.reindex();
  return s;
}

// --- tasks ---------------------------------------------------------------------------------

Task parse_task(const std::string& s) {
  if (s == "pulse") return Task::Pulse;
  if (s == "conc") return Task::Conc;
  if (s == "freq") return Task::Freq;
  if (s == "freqpair") return Task::FreqPair;
  if (s == "corr") return Task::Corr;
  throw std::invalid_argument("unknown task '" + s + "' (pulse|conc|freq|freqpair|corr)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::Pulse: return "pulse";
    case Task::Conc: return "conc";
    case Task::Freq: return "freq";
    case Task::FreqPair: return "freqpair";
    case Task::Corr: return "corr";
  }
  return "?";
}

MlSettings ml_settings_from_config(const Config& c) {
  MlSettings m;
  m.knn_k = static_cast<int>(c.get_int("ml", "knn_k"));
  m.svm.c = c.get_double("ml", "svm_c");
  m.svm.gamma = c.get_double("ml", "svm_gamma");
  m.svm.tol = c.get_double("ml", "svm_tol");
  m.svm.max_iter = c.get_int("ml", "svm_max_iter");
  m.forest.n_trees = static_cast<int>(c.get_int("ml", "forest_trees"));
  m.forest.max_depth = static_cast<int>(c.get_int("ml", "forest_max_depth"));
  m.folds = static_cast<int>(c.get_int("ml", "folds"));
  m.temporal_seeds = static_cast<int>(c.get_int("ml", "temporal_seeds"));
  if (m.knn_k < 1 || m.folds < 1 || m.temporal_seeds < 1) throw std::invalid_argument("[ml] counts must be >= 1");
  return m;
}

std::vector<std::string> split_trials(const std::vector<const Trial*>& trials, double fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto* t : trials) by_class[std::string(odour_name(t->odour_a))].push_back(t->trial_id);
  Rng rng(derive_seed(seed, 0x5b17));
  std::vector<std::string> train;
  for (auto& [cls, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size())));
    if (ids.size() >= 2) n = std::clamp<std::size_t>(n, 1, ids.size() - 1);
    train.insert(train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(train.begin(), train.end());
  return train;
}

namespace {

bool is_full_single(const Trial& t) { return t.mode == CorrelationMode::Single && t.duration_ms == 1000; }

// Windows lying fully inside [onset + 500, onset + 1000].
bool in_conc_window(const Trial& t, std::int64_t w, int window_ms) {
  return w >= t.onset_ms + 500 && w + window_ms <= t.onset_ms + 1000;
}

int window_length(const FeatureSet& set) {
  const auto n = feature_sensors(FeatureMode::Phase, set.protocol).size();
  return static_cast<int>(set.table.columns.size() / n);
}

void require_variant(const FeatureSet& set, bool dft, Task task) {
  if ((set.variant == "dft") != dft)
    throw std::invalid_argument("task " + task_name(task) + " needs " + (dft ? "dft" : "phase") +
                                " features, got " + set.variant);
}

const std::vector<double> kFrequencies(kProtocolFrequenciesHz.begin(), kProtocolFrequenciesHz.end());

std::vector<std::string> pair_names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kActiveOdours.size(); ++i)
    for (std::size_t j = i + 1; j < kActiveOdours.size(); ++j)
      out.push_back(std::string(odour_name(kActiveOdours[i])) + "-" + std::string(odour_name(kActiveOdours[j])));
  return out;
}

// Every pair must carry trains at every frequency in both modes.
void check_train_coverage(const FeatureSet& set) {
  std::set<std::tuple<std::string, double, CorrelationMode>> have;
  for (const auto& t : set.trials)
    if (t.is_train() && set.rows_by_trial().count(t.trial_id)) have.emplace(t.pair_name(), t.frequency_hz, t.mode);
  std::vector<std::string> gaps;
  for (const auto& p : pair_names())
    for (double f : kFrequencies)
      for (auto m : {CorrelationMode::Correlated, CorrelationMode::AntiCorrelated})
        if (!have.count({p, f, m})) gaps.push_back(p + "@" + freq_name(f) + "Hz/" + std::string(mode_name(m)));
  if (!gaps.empty()) {
    std::string msg = "pulse-train features are missing " + std::to_string(gaps.size()) + " combinations:";
    for (const auto& g : gaps) msg += " " + g;
    throw std::invalid_argument(msg);
  }
}

struct TemporalTarget {
  std::vector<std::string> classes;
  // class index for a trial, or -1 when the trial is not part of the problem
  std::function<int(const Trial&)> label;
};

TemporalTarget temporal_target(Task task, const std::string& pair, double f) {
  TemporalTarget tt;
  switch (task) {
    case Task::Corr:
      tt.classes = {"corr", "anti"};
      tt.label = [pair](const Trial& t) {
        if (!t.is_train() || t.pair_name() != pair) return -1;
        return t.mode == CorrelationMode::Correlated ? 0 : 1;
      };
      break;
    case Task::Freq:
      for (double x : kFrequencies) tt.classes.push_back(freq_name(x));
      tt.label = [pair](const Trial& t) {
        if (!t.is_train() || t.pair_name() != pair) return -1;
        const auto it = std::find(kFrequencies.begin(), kFrequencies.end(), t.frequency_hz);
        return it == kFrequencies.end() ? -1 : static_cast<int>(it - kFrequencies.begin());
      };
      break;
    case Task::FreqPair:
      tt.classes = {freq_name(f), "20"};
      tt.label = [pair, f](const Trial& t) {
        if (!t.is_train() || t.pair_name() != pair) return -1;
        if (t.frequency_hz == f) return 0;
        if (t.frequency_hz == 20.0) return 1;
        return -1;
      };
      break;
    default: throw std::logic_error("not a temporal task");
  }
  return tt;
}

Dataset temporal_dataset(const FeatureSet& set, const TemporalTarget& tt, std::vector<std::string>* ids) {
  Dataset d;
  d.d = set.table.columns.size();
  d.classes = tt.classes;
  for (const auto& t : set.trials) {
    const int y = tt.label(t);
    if (y < 0) continue;
    const auto it = set.rows_by_trial().find(t.trial_id);
    if (it == set.rows_by_trial().end()) continue;
    d.add(set.table.values[it->second.front()], y);
    if (ids) ids->push_back(t.trial_id);
  }
  return d;
}

std::vector<std::pair<std::string, double>> temporal_models(Task task) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& p : pair_names()) {
    if (task == Task::FreqPair) {
      for (double f : kFrequencies)
        if (f != 20.0) out.emplace_back(p, f);
    } else {
      out.emplace_back(p, 0.0);
    }
  }
  return out;
}

}  // namespace

TaskBundle train_task(Task task, const FeatureSet& set, const MlSettings& ml, std::uint64_t seed, bool shuffled) {
  TaskBundle b;
  b.task = task;
  b.protocol = set.protocol;
  b.variant = set.variant;
  b.seed = seed;
  b.shuffled = shuffled;

  if (task == Task::Pulse || task == Task::Conc) {
    require_variant(set, false, task);
    if (task == Task::Pulse && set.protocol != ProtocolId::A)
      throw std::invalid_argument("pulse task trains on protocol A features");
    if (task == Task::Conc && set.protocol != ProtocolId::B)
      throw std::invalid_argument("conc task trains on protocol B features");
    std::vector<const Trial*> pool;
    for (const auto& t : set.trials) {
      if (!is_full_single(t) || !set.rows_by_trial().count(t.trial_id)) continue;
      if (task == Task::Conc && t.concentration_pct != 100) continue;
      pool.push_back(&t);
    }
    if (pool.empty()) throw std::invalid_argument("no 1000 ms single-odour trials to train on");
    b.train_trials = split_trials(pool, ml.train_fraction, seed);

    Dataset d;
    d.d = set.table.columns.size();
    d.classes = odour_classes();
    const int wl = window_length(set);
    for (const auto& id : b.train_trials) {
      const auto& t = set.trial(id);
      const LabelingParams lp{wl, 10, t.onset_ms, t.offset_ms(), t.odour_a};
      for (auto r : set.rows_by_trial().at(id)) {
        const auto w = set.table.t_ms[r];
        if (task == Task::Conc) {
          if (in_conc_window(t, w, wl)) d.add(set.table.values[r], static_cast<int>(index_of(t.odour_a)));
        } else if (const auto y = label_feature(w, lp)) {
          d.add(set.table.values[r], static_cast<int>(index_of(*y)));
        }
      }
    }
    d.validate();
    if (shuffled) shuffle_labels(d, seed);
    TaskEntry e;
    e.seed = seed;
    if (task == Task::Conc) {
      e.model = std::make_unique<KnnModel>(std::move(d), ml.knn_k);
    } else {
      auto gram = std::make_shared<const std::vector<double>>(rbf_gram(d, ml.svm.gamma));
      e.model = cv_ensemble(d, svm_learner(ml.svm, gram), adaptive_folds(d, ml.folds), seed);
    }
    b.entries.push_back(std::move(e));
    return b;
  }

  require_variant(set, true, task);
  if (set.protocol == ProtocolId::A) throw std::invalid_argument("temporal tasks need protocol B or C features");
  check_train_coverage(set);
  for (const auto& t : set.trials)
    if (t.is_train() && set.rows_by_trial().count(t.trial_id)) b.train_trials.push_back(t.trial_id);
  std::sort(b.train_trials.begin(), b.train_trials.end());
  for (const auto& [pair, f] : temporal_models(task)) {
    const auto tt = temporal_target(task, pair, f);
    auto d = temporal_dataset(set, tt, nullptr);
    d.validate();
    for (int rep = 0; rep < ml.temporal_seeds; ++rep) {
      TaskEntry e;
      e.gas_pair = pair;
      e.frequency_hz = f;
      e.seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
      Dataset dd = d;
      if (shuffled) shuffle_labels(dd, e.seed);
      e.model = cv_ensemble(dd, forest_learner(ml.forest), adaptive_folds(dd, ml.folds), e.seed);
      b.entries.push_back(std::move(e));
    }
  }
  return b;
}

// --- bundle persistence ---------------------------------------------------------------------

void save_bundle(const std::string& path, const TaskBundle& b) {
  write_atomically(path, [&](std::ostream& out) {
    out << "fastnose-task 1\n"
        << "task " << task_name(b.task) << "\nprotocol " << protocol_letter(b.protocol) << "\nvariant " << b.variant
        << "\nseed " << b.seed << "\nshuffled " << (b.shuffled ? 1 : 0) << "\ntrain_trials " << b.train_trials.size();
    for (std::size_t i = 0; i < b.train_trials.size(); ++i) out << (i % 16 == 0 ? "\n" : " ") << b.train_trials[i];
    out << "\nentries " << b.entries.size() << '\n';
    for (const auto& e : b.entries) {
      out << "entry " << e.gas_pair << ' ' << freq_name(e.frequency_hz) << ' ' << e.seed << '\n'
          << "fastnose-model 1\n";
      e.model->save(out);
    }
  });
}

TaskBundle load_bundle(const std::string& path) {
  auto in = open_in(path);
  auto word = [&]() {
    std::string w;
    if (!(in >> w)) throw std::runtime_error("task bundle " + path + " is truncated");
    return w;
  };
  auto expect = [&](const std::string& w) {
    const auto got = word();
    if (got != w) throw std::runtime_error("task bundle " + path + ": expected '" + w + "', got '" + got + "'");
  };
  expect("fastnose-task");
  expect("1");
  TaskBundle b;
  expect("task");
  b.task = parse_task(word());
  expect("protocol");
  b.protocol = parse_protocol(word());
  expect("variant");
  b.variant = word();
  expect("seed");
  b.seed = text::parse_u64(word());
  expect("shuffled");
  b.shuffled = word() == "1";
  expect("train_trials");
  const auto nt = text::parse_u64(word());
  for (std::uint64_t i = 0; i < nt; ++i) b.train_trials.push_back(word());
  expect("entries");
  const auto ne = text::parse_u64(word());
  if (ne == 0) throw std::runtime_error("task bundle " + path + " holds no models");
  for (std::uint64_t i = 0; i < ne; ++i) {
    expect("entry");
    TaskEntry e;
    e.gas_pair = word();
    e.frequency_hz = text::parse_double(word());
    e.seed = text::parse_u64(word());
    e.model = read_model(in);
    b.entries.push_back(std::move(e));
  }
  return b;
}

// --- evaluation ---------------------------------------------------------------------------------

namespace {

std::string block_label(const ResultRow& r) {
  return r.task + "/" + r.gas_pair + "/" + r.frequency_hz + "/" + std::to_string(r.seed) + "/" + r.condition;
}

void add_result(Evaluation& ev, ResultRow row, std::vector<std::string> classes,
                std::vector<std::vector<std::size_t>> matrix) {
  ev.confusions.push_back({block_label(row), std::move(classes), std::move(matrix)});
  ev.rows.push_back(std::move(row));
}

std::string condition_prefix(const TaskBundle& b) { return b.shuffled ? "shuffled;" : ""; }

void evaluate_pulse(const TaskBundle& b, const FeatureSet& test, const std::set<std::string>& excluded,
                    Evaluation& ev) {
  const auto& model = *b.entries.front().model;
  std::map<int, std::vector<PredictionTimeline>> by_duration;
  const int pitch = window_length(test);
  for (const auto& t : test.trials) {
    if (excluded.count(t.trial_id) || t.mode != CorrelationMode::Single || t.odour_a == Odour::Blank) continue;
    if (t.concentration_pct != 100) continue;
    const auto it = test.rows_by_trial().find(t.trial_id);
    if (it == test.rows_by_trial().end()) continue;
    PredictionTimeline tl;
    tl.trial_id = t.trial_id;
    tl.truth = t.odour_a;
    tl.duration_ms = t.duration_ms;
    tl.onset_ms = t.onset_ms;
    tl.offset_ms = t.offset_ms();
    tl.pitch_ms = pitch;
    tl.first_window_ms = test.table.t_ms[it->second.front()];
    for (auto r : it->second) tl.predicted.push_back(kAllOdours.at(static_cast<std::size_t>(model.predict(test.table.values[r]))));
    by_duration[t.duration_ms].push_back(std::move(tl));
  }
  if (by_duration.empty()) throw std::invalid_argument("no held-out 100 % single-odour trials to test");
  for (const auto& [dur, tls] : by_duration) {
    const auto res = trial_accuracy(tls);
    ResultRow row{"pulse", "all", "", b.seed, res.accuracy, res.balanced_accuracy,
                  condition_prefix(b) + "duration_ms=" + std::to_string(dur), res.n};
    add_result(ev, row, res.classes, res.confusion);
    for (const auto& o : res.trials)
      ev.timing.push_back({o.trial_id, std::string(odour_name(o.truth)), dur, std::string(odour_name(o.predicted)),
                           o.miss, o.timing.onset_ms, o.timing.offset_ms});
  }
}

void evaluate_conc(const TaskBundle& b, const FeatureSet& test, const std::set<std::string>& excluded,
                   Evaluation& ev) {
  const auto& model = *b.entries.front().model;
  const int wl = window_length(test);
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> by_conc;
  for (const auto& t : test.trials) {
    if (excluded.count(t.trial_id) || !is_full_single(t) || t.odour_a == Odour::Blank) continue;
    const auto it = test.rows_by_trial().find(t.trial_id);
    if (it == test.rows_by_trial().end()) continue;
    auto& [truth, pred] = by_conc[t.concentration_pct];
    for (auto r : it->second) {
      if (!in_conc_window(t, test.table.t_ms[r], wl)) continue;
      truth.push_back(static_cast<int>(index_of(t.odour_a)));
      pred.push_back(model.predict(test.table.values[r]));
    }
  }
  if (by_conc.empty()) throw std::invalid_argument("no held-out single-odour trials to test");
  for (auto it = by_conc.rbegin(); it != by_conc.rend(); ++it) {
    const auto& [truth, pred] = it->second;
    auto cm = confusion_matrix(truth, pred, kOdourCount);
    ResultRow row{"conc", "all", "", b.seed, plain_accuracy(cm), balanced_accuracy(cm),
                  condition_prefix(b) + b.variant + ";concentration_pct=" + std::to_string(it->first), truth.size()};
    add_result(ev, row, odour_classes(), std::move(cm));
  }
}

void evaluate_temporal(const TaskBundle& b, const FeatureSet& test, const std::set<std::string>& excluded,
                       Evaluation& ev) {
  const std::string name = task_name(b.task);
  for (const auto& e : b.entries) {
    const auto tt = temporal_target(b.task, e.gas_pair, e.frequency_hz);
    std::vector<std::string> ids;
    const auto d = temporal_dataset(test, tt, &ids);
    std::vector<int> truth, pred;
    std::vector<double> freq;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (excluded.count(ids[i])) continue;
      truth.push_back(d.y[i]);
      pred.push_back(e.model->predict(d.row(i)));
      freq.push_back(test.trial(ids[i]).frequency_hz);
    }
    if (truth.empty()) throw std::invalid_argument("no test trials for " + name + " " + e.gas_pair);
    const auto k = tt.classes.size();
    auto emit = [&](const std::string& fname, auto&& keep) {
      std::vector<int> t2, p2;
      for (std::size_t i = 0; i < truth.size(); ++i)
        if (keep(i)) {
          t2.push_back(truth[i]);
          p2.push_back(pred[i]);
        }
      if (t2.empty()) return;
      auto cm = confusion_matrix(t2, p2, k);
      ResultRow row{name, e.gas_pair, fname, e.seed, plain_accuracy(cm), balanced_accuracy(cm),
                    condition_prefix(b) + "test=" + std::string(1, protocol_letter(test.protocol)), t2.size()};
      add_result(ev, row, tt.classes, std::move(cm));
    };
    if (b.task == Task::FreqPair) {
      emit(freq_name(e.frequency_hz), [](std::size_t) { return true; });
    } else {
      for (double f : kFrequencies) emit(freq_name(f), [&](std::size_t i) { return freq[i] == f; });
      if (b.task == Task::Freq) emit("all", [](std::size_t) { return true; });
    }
  }
}

}  // namespace

Evaluation evaluate_task(const TaskBundle& b, const FeatureSet& test) {
  if (b.entries.empty()) throw std::invalid_argument("task bundle holds no models");
  const bool dft = b.task != Task::Pulse && b.task != Task::Conc;
  require_variant(test, dft, b.task);
  if (!dft && test.variant != b.variant)
    throw std::invalid_argument("model was trained on " + b.variant + " features, test set is " + test.variant);
  for (const auto& e : b.entries)
    if (test.table.columns.empty() || e.model->scores(test.table.values.empty() ? std::vector<double>(test.table.columns.size(), 1.0)
                                                                              : test.table.values.front())
                                              .size() != e.model->n_classes())
      throw std::invalid_argument("model does not match the feature dimension");
  std::set<std::string> excluded;
  if (test.protocol == b.protocol) excluded.insert(b.train_trials.begin(), b.train_trials.end());
  Evaluation ev;
  switch (b.task) {
    case Task::Pulse: evaluate_pulse(b, test, excluded, ev); break;
    case Task::Conc: evaluate_conc(b, test, excluded, ev); break;
    default: evaluate_temporal(b, test, excluded, ev); break;
  }
  return ev;
}

namespace {

constexpr const char* kResultHeader = "task,gas_pair,frequency_hz,seed,accuracy,balanced_accuracy,condition,n_test";

std::string stem_of(const std::string& path) {
  const fs::path p(path);
  return (p.parent_path() / p.stem()).string();
}

}  // namespace

void write_evaluation(const std::string& path, const Evaluation& ev) {
  const auto stem = stem_of(path);
  write_atomically(stem + ".confusion.csv", [&](std::ostream& out) {
    out << "block,truth,predicted,count\n";
    for (const auto& c : ev.confusions)
      for (std::size_t i = 0; i < c.matrix.size(); ++i)
        for (std::size_t j = 0; j < c.matrix[i].size(); ++j)
          out << c.label << ',' << c.classes[i] << ',' << c.classes[j] << ',' << c.matrix[i][j] << '\n';
  });
  if (!ev.timing.empty())
    write_atomically(stem + ".timing.csv", [&](std::ostream& out) {
      out << "trial_id,odour,duration_ms,predicted,miss,onset_ms,offset_ms\n";
      for (const auto& t : ev.timing)
        out << t.trial_id << ',' << t.odour << ',' << t.duration_ms << ',' << t.predicted << ',' << (t.miss ? 1 : 0)
            << ',' << (t.onset_ms ? std::to_string(*t.onset_ms) : "") << ','
            << (t.offset_ms ? std::to_string(*t.offset_ms) : "") << '\n';
    });
  write_atomically(path, [&](std::ostream& out) {
    out << kResultHeader << '\n';
    for (const auto& r : ev.rows)
      out << r.task << ',' << r.gas_pair << ',' << r.frequency_hz << ',' << r.seed << ','
          << text::format_double(r.accuracy) << ',' << text::format_double(r.balanced_accuracy) << ',' << r.condition
          << ',' << r.n_test << '\n';
  });
}

std::vector<ResultRow> read_results(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kResultHeader)
    throw std::runtime_error(path + " is not a result file");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    const auto tl = text::trim(line);
    if (tl.empty()) continue;
    const auto f = text::split(tl, ',');
    if (f.size() != 8) throw std::runtime_error(path + ": malformed result row");
    rows.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), text::parse_u64(f[3]),
                    text::parse_double(f[4]), text::parse_double(f[5]), std::string(f[6]),
                    static_cast<std::size_t>(text::parse_u64(f[7]))});
  }
  return rows;
}

// --- report -----------------------------------------------------------------------------------

namespace {

bool is_result_file(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  return std::getline(in, line) && text::trim(line) == kResultHeader;
}

struct Group {
  std::vector<double> acc, bal;
  std::size_t n = 0;
};

}  // namespace

std::string report_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv" && e.path().filename() != "summary.csv" &&
        e.path().filename().string().rfind("plot_", 0) != 0 && is_result_file(e.path()))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no result CSVs in " + dir);

  // (task, condition, frequency) -> accuracies over seeds and pairs
  std::map<std::tuple<std::string, std::string, std::string>, Group> groups;
  for (const auto& f : files)
    for (const auto& r : read_results(f.string())) {
      auto& g = groups[{r.task, r.condition, r.frequency_hz}];
      g.acc.push_back(r.accuracy);
      g.bal.push_back(r.balanced_accuracy);
      g.n += r.n_test;
    }

  std::ostringstream table;
  table << std::left << std::setw(9) << "task" << std::setw(40) << "condition" << std::setw(8) << "freq"
        << "accuracy (mean +- sd)   balanced (mean +- sd)   rows\n";
  std::map<std::string, std::ostringstream> plots;
  const std::string header = "task,condition,frequency_hz,rows,n_test,accuracy_mean,accuracy_sd,accuracy_upper,"
                             "balanced_mean,balanced_sd,balanced_upper\n";
  std::ostringstream summary;
  summary << header;
  for (const auto& [key, g] : groups) {
    const auto& [task, cond, freq] = key;
    const auto a = summarize_seeds(g.acc);
    const auto b = summarize_seeds(g.bal);
    const std::string line = task + "," + cond + "," + freq + "," + std::to_string(g.acc.size()) + "," +
                             std::to_string(g.n) + "," + text::format_fixed(a.mean, 4) + "," +
                             text::format_fixed(a.stddev, 4) + "," + text::format_fixed(a.upper, 4) + "," +
                             text::format_fixed(b.mean, 4) + "," + text::format_fixed(b.stddev, 4) + "," +
                             text::format_fixed(b.upper, 4) + "\n";
    summary << line;
    auto& p = plots[task];
    if (p.tellp() == 0) p << header;
    p << line;
    table << std::left << std::setw(9) << task << std::setw(40) << cond << std::setw(8) << freq
          << text::format_fixed(a.mean, 3) << " +- " << std::setw(16) << text::format_fixed(a.stddev, 3)
          << text::format_fixed(b.mean, 3) << " +- " << std::setw(16) << text::format_fixed(b.stddev, 3)
          << g.acc.size() << '\n';
  }

  // onset/offset per pulse duration from timing files
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> timing;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() < 11 || name.substr(name.size() - 11) != ".timing.csv") continue;
    std::ifstream in(e.path());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = text::split(text::trim(line), ',');
      if (f.size() != 7) continue;
      auto& [on, off] = timing[static_cast<int>(text::parse_int(f[2]))];
      if (!text::trim(f[5]).empty()) on.push_back(text::parse_double(f[5]));
      if (!text::trim(f[6]).empty()) off.push_back(text::parse_double(f[6]));
    }
  }
  if (!timing.empty()) {
    auto& p = plots["timing"];
    p << "duration_ms,onset_n,onset_mean,onset_sd,offset_n,offset_mean,offset_sd\n";
    table << "\nduration_ms  onset (mean +- sd)   offset (mean +- sd)\n";
    for (const auto& [dur, v] : timing) {
      const auto& [on, off] = v;
      const double om = on.empty() ? 0.0 : mean(on), os = stddev(on);
      const double fm = off.empty() ? 0.0 : mean(off), fsd = stddev(off);
      p << dur << ',' << on.size() << ',' << text::format_fixed(om, 2) << ',' << text::format_fixed(os, 2) << ','
        << off.size() << ',' << text::format_fixed(fm, 2) << ',' << text::format_fixed(fsd, 2) << '\n';
      table << std::left << std::setw(13) << dur << text::format_fixed(om, 1) << " +- " << std::setw(12)
            << text::format_fixed(os, 1) << text::format_fixed(fm, 1) << " +- " << text::format_fixed(fsd, 1) << '\n';
    }
  }

  write_atomically((fs::path(dir) / "summary.csv").string(), [&](std::ostream& out) { out << summary.str(); });
  for (const auto& [name, p] : plots)
    write_atomically((fs::path(dir) / ("plot_" + name + ".csv")).string(), [&](std::ostream& out) { out << p.str(); });
  return table.str();
}

}  // namespace fastnose
