#include "fastnose/features.hpp"

#include "fastnose/fft.hpp"
#include "fastnose/text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace fastnose {

bool CycleGrid::aligned(std::int64_t t_ms) const { return phase(t_ms) == 0; }

int CycleGrid::phase(std::int64_t t_ms) const {
  const std::int64_t p = period_ms;
  return static_cast<int>((((t_ms - origin_ms) % p) + p) % p);
}

std::int64_t CycleGrid::next_boundary(std::int64_t t_ms) const {
  const int ph = phase(t_ms);
  return ph == 0 ? t_ms : t_ms + (period_ms - ph);
}

std::vector<double> extract_window(const SeriesView& series, std::int64_t t_ms, const CycleGrid& grid,
                                   int length) {
  if (!grid.aligned(t_ms))
    throw std::invalid_argument("window start " + std::to_string(t_ms) +
                                " ms is not on a heater-cycle boundary");
  const std::int64_t first = t_ms - series.t0_ms;
  if (length <= 0 || first < 0 ||
      first + length > static_cast<std::int64_t>(series.samples.size()))
    throw std::out_of_range("window [" + std::to_string(t_ms) + ", " + std::to_string(t_ms + length) +
                            ") ms outside the recording");
  const auto b = series.samples.begin() + first;
  return {b, b + length};
}

MaxScope parse_max_scope(const std::string& name) {
  if (name == "per-sensor") return MaxScope::PerSensor;
  if (name == "global") return MaxScope::Global;
  throw std::invalid_argument("unknown max scope '" + name + "' (per-sensor|global)");
}

namespace {

std::vector<double> log_window(std::span<const double> w) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0)) throw std::invalid_argument("non-positive resistance in window");
    out[i] = std::log(w[i]);
  }
  return out;
}

double checked_max(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("empty window");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == 0.0) throw std::invalid_argument("degenerate window: max(log R) is zero");
  return m;
}

}  // namespace

std::vector<double> normalize(std::span<const double> window_t, std::span<const double> window_pre) {
  if (window_t.size() != window_pre.size()) throw std::invalid_argument("window length mismatch");
  const auto lt = log_window(window_t);
  const auto lp = log_window(window_pre);
  const double mt = checked_max(lt);
  const double mp = checked_max(lp);
  std::vector<double> g(lt.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = lt[i] / mt - lp[i] / mp;
  return g;
}

std::vector<double> normalize_sensors(const std::vector<std::vector<double>>& windows_t,
                                      const std::vector<std::vector<double>>& windows_pre,
                                      MaxScope scope) {
  if (windows_t.size() != windows_pre.size()) throw std::invalid_argument("sensor count mismatch");
  std::vector<double> out;
  if (scope == MaxScope::PerSensor) {
    for (std::size_t s = 0; s < windows_t.size(); ++s) {
      const auto g = normalize(windows_t[s], windows_pre[s]);
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  }
  std::vector<std::vector<double>> lt, lp;
  double mt = -INFINITY, mp = -INFINITY;
  for (std::size_t s = 0; s < windows_t.size(); ++s) {
    if (windows_t[s].size() != windows_pre[s].size()) throw std::invalid_argument("window length mismatch");
    lt.push_back(log_window(windows_t[s]));
    lp.push_back(log_window(windows_pre[s]));
    mt = std::max(mt, checked_max(lt.back()));
    mp = std::max(mp, checked_max(lp.back()));
  }
  if (mt == 0.0 || mp == 0.0) throw std::invalid_argument("degenerate window: max(log R) is zero");
  for (std::size_t s = 0; s < lt.size(); ++s)
    for (std::size_t i = 0; i < lt[s].size(); ++i) out.push_back(lt[s][i] / mt - lp[s][i] / mp);
  return out;
}

PhaseLockedFeature phase_locked_feature(const std::vector<SeriesView>& sensors, std::int64_t t_ms,
                                        std::int64_t t_pre_ms, std::int64_t onset_ms,
                                        const CycleGrid& grid, MaxScope scope, int length) {
  std::vector<std::vector<double>> wt, wp;
  for (const auto& s : sensors) {
    wt.push_back(extract_window(s, t_ms, grid, length));
    wp.push_back(extract_window(s, t_pre_ms, grid, length));
  }
  PhaseLockedFeature f;
  f.t_ms = t_ms;
  f.t_pre_ms = t_pre_ms;
  f.rho_ms = grid.phase(onset_ms);
  f.g = normalize_sensors(wt, wp, scope);
  return f;
}

std::vector<double> raw_feature(const std::vector<SeriesView>& sensors, std::int64_t t_ms,
                                const CycleGrid& grid, int length) {
  std::vector<double> out;
  for (const auto& s : sensors) {
    const auto w = extract_window(s, t_ms, grid, length);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

namespace {

const FftPlan& cached_plan(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

}  // namespace

SpectralTriplet spectral_peak(std::span<const double> segment, SpectralTransform transform,
                              double sample_rate_hz) {
  if (segment.size() < 2) throw std::invalid_argument("spectral window needs at least 2 samples");
  std::vector<double> y(segment.begin(), segment.end());
  if (transform == SpectralTransform::Log) {
    for (auto& v : y) {
      if (!(v > 0.0)) throw std::invalid_argument("non-positive value under log transform");
      v = std::log(v);
    }
  }
  const std::size_t n = y.size() - 1;
  std::vector<double> dx(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = y[i + 1] - y[i];
    all_zero = all_zero && dx[i] == 0.0;
  }
  SpectralTriplet t;
  if (all_zero || n < 2) {
    t.degenerate = true;
    return t;
  }
  const auto spec = cached_plan(n).forward_real(dx);
  // Real input: bins above n/2 mirror the lower half.
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double m = std::abs(spec[k]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  t.freq_hz = static_cast<double>(best) * sample_rate_hz / static_cast<double>(n);
  t.magnitude = best_mag;
  t.phase = std::arg(spec[best]);
  return t;
}

std::vector<double> SpectralFeature::flat() const {
  std::vector<double> out;
  for (const auto& s : sensors) {
    out.push_back(s.freq_hz);
    out.push_back(s.magnitude);
    out.push_back(s.phase);
  }
  return out;
}

SpectralFeature spectral_feature(const std::vector<SeriesView>& sensors, std::int64_t t_onset_ms,
                                 std::int64_t t_offset_ms, int b_ms, SpectralTransform transform) {
  const std::int64_t end = t_offset_ms + b_ms;  // inclusive
  if (end <= t_onset_ms) throw std::invalid_argument("spectral window needs at least 2 samples");
  SpectralFeature f;
  f.t_ms = t_onset_ms;
  for (const auto& s : sensors) {
    const std::int64_t first = t_onset_ms - s.t0_ms;
    const std::int64_t count = end - t_onset_ms + 1;
    if (first < 0 || first + count > static_cast<std::int64_t>(s.samples.size()))
      throw std::out_of_range("spectral window outside the recording");
    f.sensors.push_back(spectral_peak(s.samples.subspan(static_cast<std::size_t>(first),
                                                        static_cast<std::size_t>(count)),
                                      transform));
  }
  return f;
}

// --- CSV ---------------------------------------------------------------------

FeatureTable make_phase_table(const std::vector<PhaseLockedFeature>& rows) {
  FeatureTable t;
  t.kind = FeatureKind::Phase;
  const std::size_t d = rows.empty() ? 0 : rows.front().g.size();
  for (std::size_t i = 0; i < d; ++i) t.columns.push_back("g_" + std::to_string(i));
  for (const auto& r : rows) {
    if (r.g.size() != d) throw std::invalid_argument("ragged feature rows");
    t.trial_id.push_back(r.trial_id);
    t.t_ms.push_back(r.t_ms);
    t.values.push_back(r.g);
  }
  return t;
}

FeatureTable make_spectral_table(const std::vector<SpectralFeature>& rows, std::size_t n_sensors) {
  FeatureTable t;
  t.kind = FeatureKind::Spectral;
  for (std::size_t s = 0; s < n_sensors; ++s)
    for (const char* f : {"_freq", "_mag", "_phase"}) t.columns.push_back("s" + std::to_string(s) + f);
  for (const auto& r : rows) {
    if (r.sensors.size() != n_sensors) throw std::invalid_argument("ragged feature rows");
    t.trial_id.push_back(r.trial_id);
    t.t_ms.push_back(r.t_ms);
    t.values.push_back(r.flat());
  }
  return t;
}

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  out << "feature_id,trial_id,t_ms";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << i << ',' << table.trial_id[i] << ',' << table.t_ms[i];
    for (double v : table.values[i]) out << ',' << text::format_double(v);
    out << '\n';
  }
}

FeatureTable read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("feature file is empty");
  const auto head = text::split(text::trim(line), ',');
  if (head.size() < 4 || head[0] != "feature_id" || head[1] != "trial_id" || head[2] != "t_ms")
    throw std::runtime_error("feature file header must start with feature_id,trial_id,t_ms");
  FeatureTable t;
  for (std::size_t i = 3; i < head.size(); ++i) t.columns.emplace_back(head[i]);
  if (t.columns.front() == "g_0")
    t.kind = FeatureKind::Phase;
  else if (t.columns.front() == "s0_freq")
    t.kind = FeatureKind::Spectral;
  else
    throw std::runtime_error("unrecognised feature columns");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto tl = text::trim(line);
    if (tl.empty()) continue;
    const auto f = text::split(tl, ',');
    if (f.size() != head.size())
      throw std::runtime_error("feature row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                               " fields, expected " + std::to_string(head.size()));
    t.trial_id.emplace_back(f[1]);
    t.t_ms.push_back(text::parse_int(f[2]));
    std::vector<double> v(f.size() - 3);
    for (std::size_t i = 3; i < f.size(); ++i) v[i - 3] = text::parse_double(f[i]);
    t.values.push_back(std::move(v));
    ++row;
  }
  return t;
}

}  // namespace fastnose
