#pragma once

#include "fastnose/features.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fastnose {

inline constexpr std::size_t kSensorCount = 8;
inline constexpr int kRecordingFormatVersion = 1;

struct RecordingHeader {
  int version = kRecordingFormatVersion;
  std::uint64_t seed = 0;
  char protocol = 'A';
  std::uint64_t params_hash = 0;
  std::string trial_id;
};

/// One trial's 1 kHz multi-channel recording; row i is at t0_ms + i.
///
/// Numeric fields are quantised when generated (resistance to the 0.5 ohm
/// ADC grid, hotplate temperature to 1 mdegC, PID to 10 uV) and written in
/// shortest round-trip decimal, so text write -> read is bit-exact. The
/// binary twin stores raw IEEE-754 doubles.
struct Recording {
  RecordingHeader header;
  std::int64_t t0_ms = 0;
  std::array<std::vector<double>, kSensorCount> resistance;
  std::array<std::vector<double>, kSensorCount> hotplate_c;
  std::vector<std::uint32_t> valves;
  std::vector<double> pid_v;
  std::vector<double> flow_au;

  std::size_t size() const { return valves.size(); }
  void resize(std::size_t n);
  std::int64_t t_end_ms() const { return t0_ms + static_cast<std::int64_t>(size()); }
  SeriesView sensor(std::size_t s) const { return {resistance.at(s), t0_ms}; }
  SeriesView hotplate(std::size_t s) const { return {hotplate_c.at(s), t0_ms}; }
  SeriesView pid() const { return {pid_v, t0_ms}; }
};

bool operator==(const Recording& a, const Recording& b);

void write_recording_text(std::ostream& out, const Recording& rec);
Recording read_recording_text(std::istream& in);
void write_recording_binary(std::ostream& out, const Recording& rec);
Recording read_recording_binary(std::istream& in);

/// Picks the format from the extension (.bin = binary, otherwise text).
void save_recording(const std::string& path, const Recording& rec);
Recording load_recording(const std::string& path);

}  // namespace fastnose
