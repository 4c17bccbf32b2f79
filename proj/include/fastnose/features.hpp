#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fastnose {

/// Heater-cycle grid: boundaries at origin + k * period (ms).
struct CycleGrid {
  std::int64_t origin_ms = 0;
  int period_ms = 50;

  bool aligned(std::int64_t t_ms) const;
  /// First boundary >= t_ms.
  std::int64_t next_boundary(std::int64_t t_ms) const;
  /// Phase of t_ms within the cycle, [0, period).
  int phase(std::int64_t t_ms) const;
};

/// One sensor channel sampled at 1 kHz; samples[i] is at t0_ms + i.
struct SeriesView {
  std::span<const double> samples;
  std::int64_t t0_ms = 0;
};

/// H(D_s, t): `length` consecutive samples starting at t. Throws if t is not
/// on a cycle boundary or the window runs off either end of the series.
std::vector<double> extract_window(const SeriesView& series, std::int64_t t_ms, const CycleGrid& grid,
                                   int length = 50);

enum class MaxScope { PerSensor, Global };
MaxScope parse_max_scope(const std::string& name);

/// G = log(w_t)/max(log(w_t)) - log(w_pre)/max(log(w_pre)), natural log,
/// element-wise for one sensor. Throws on non-positive resistance or a zero
/// maximum.
std::vector<double> normalize(std::span<const double> window_t, std::span<const double> window_pre);

/// Multi-sensor form. With MaxScope::Global the max runs over all sensors'
/// log windows instead of per sensor. Output is sensor-major.
std::vector<double> normalize_sensors(const std::vector<std::vector<double>>& windows_t,
                                      const std::vector<std::vector<double>>& windows_pre,
                                      MaxScope scope);

struct PhaseLockedFeature {
  std::string trial_id;
  std::int64_t t_ms = 0;      // window start
  int rho_ms = 0;             // onset position within the heater cycle
  std::int64_t t_pre_ms = 0;  // anchor window start
  std::vector<double> g;      // n_sensors * window length
};

/// Normalized feature at window start t with anchor t_pre.
PhaseLockedFeature phase_locked_feature(const std::vector<SeriesView>& sensors, std::int64_t t_ms,
                                        std::int64_t t_pre_ms, std::int64_t onset_ms,
                                        const CycleGrid& grid, MaxScope scope, int length = 50);

/// Raw counterpart: the concatenated resistance windows, no normalisation.
std::vector<double> raw_feature(const std::vector<SeriesView>& sensors, std::int64_t t_ms,
                                const CycleGrid& grid, int length = 50);

enum class SpectralTransform { Log, Identity };

struct SpectralTriplet {
  double freq_hz = 0.0;
  double magnitude = 0.0;
  double phase = 0.0;
  bool degenerate = false;
};

/// Dominant non-DC DFT bin of diff(transform(segment)); the DFT length is
/// the derivative length, no zero padding.
SpectralTriplet spectral_peak(std::span<const double> segment, SpectralTransform transform,
                              double sample_rate_hz = 1000.0);

struct SpectralFeature {
  std::string trial_id;
  std::int64_t t_ms = 0;
  std::vector<SpectralTriplet> sensors;

  /// [f0, m0, p0, f1, m1, p1, ...]
  std::vector<double> flat() const;
};

/// Triplets for each sensor over samples [t_onset, t_offset + b] inclusive.
SpectralFeature spectral_feature(const std::vector<SeriesView>& sensors, std::int64_t t_onset_ms,
                                 std::int64_t t_offset_ms, int b_ms, SpectralTransform transform);

// --- CSV export ------------------------------------------------------------

enum class FeatureKind { Phase, Spectral };

/// Generic feature table as stored on disk.
struct FeatureTable {
  FeatureKind kind = FeatureKind::Phase;
  std::vector<std::string> columns;  // value column names (after t_ms)
  std::vector<std::string> trial_id;
  std::vector<std::int64_t> t_ms;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return values.size(); }
};

FeatureTable make_phase_table(const std::vector<PhaseLockedFeature>& rows);
FeatureTable make_spectral_table(const std::vector<SpectralFeature>& rows, std::size_t n_sensors);

/// Header: feature_id,trial_id,t_ms,<columns>. Values in shortest
/// round-trip decimal.
void write_feature_csv(std::ostream& out, const FeatureTable& table);
FeatureTable read_feature_csv(std::istream& in);

}  // namespace fastnose
