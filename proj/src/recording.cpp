#include "fastnose/recording.hpp"

#include "fastnose/text.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fastnose {

void Recording::resize(std::size_t n) {
  for (auto& r : resistance) r.resize(n);
  for (auto& h : hotplate_c) h.resize(n);
  valves.resize(n);
  pid_v.resize(n);
  flow_au.resize(n);
}

bool operator==(const Recording& a, const Recording& b) {
  return a.header.version == b.header.version && a.header.seed == b.header.seed &&
         a.header.protocol == b.header.protocol && a.header.params_hash == b.header.params_hash &&
         a.header.trial_id == b.header.trial_id && a.t0_ms == b.t0_ms && a.resistance == b.resistance &&
         a.hotplate_c == b.hotplate_c && a.valves == b.valves && a.pid_v == b.pid_v && a.flow_au == b.flow_au;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad hex value '" + std::string(s) + "'");
  return v;
}

void append_double(std::string& line, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, res.ptr);
}

std::string column_header() {
  std::string h = "t_ms";
  for (std::size_t s = 1; s <= kSensorCount; ++s) h += ",r_sensor_" + std::to_string(s);
  for (std::size_t s = 1; s <= kSensorCount; ++s) h += ",t_hot_" + std::to_string(s);
  h += ",valve_bitmask,pid_v,flow_au";
  return h;
}

}  // namespace

void write_recording_text(std::ostream& out, const Recording& rec) {
  out << "# fastnose-recording " << rec.header.version << '\n'
      << "# seed " << rec.header.seed << '\n'
      << "# protocol " << rec.header.protocol << '\n'
      << "# params_hash " << hex64(rec.header.params_hash) << '\n'
      << "# trial_id " << rec.header.trial_id << '\n'
      << column_header() << '\n';
  std::string line;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    line.clear();
    line += std::to_string(rec.t0_ms + static_cast<std::int64_t>(i));
    for (const auto& r : rec.resistance) {
      line += ',';
      append_double(line, r[i]);
    }
    for (const auto& h : rec.hotplate_c) {
      line += ',';
      append_double(line, h[i]);
    }
    line += ',';
    line += std::to_string(rec.valves[i]);
    line += ',';
    append_double(line, rec.pid_v[i]);
    line += ',';
    append_double(line, rec.flow_au[i]);
    line += '\n';
    out << line;
  }
}

Recording read_recording_text(std::istream& in) {
  Recording rec;
  std::string line;
  auto header_value = [&](const std::string& key) {
    if (!std::getline(in, line)) throw std::runtime_error("recording header truncated");
    const std::string prefix = "# " + key + " ";
    if (line.rfind(prefix, 0) != 0) throw std::runtime_error("recording header: expected '" + key + "'");
    return std::string(text::trim(std::string_view(line).substr(prefix.size())));
  };
  rec.header.version = static_cast<int>(text::parse_int(header_value("fastnose-recording")));
  if (rec.header.version != kRecordingFormatVersion)
    throw std::runtime_error("unsupported recording version " + std::to_string(rec.header.version));
  rec.header.seed = text::parse_u64(header_value("seed"));
  const auto proto = header_value("protocol");
  if (proto.size() != 1) throw std::runtime_error("recording header: bad protocol");
  rec.header.protocol = proto[0];
  rec.header.params_hash = parse_hex64(header_value("params_hash"));
  rec.header.trial_id = header_value("trial_id");
  if (!std::getline(in, line) || text::trim(line) != column_header())
    throw std::runtime_error("recording column header mismatch");

  constexpr std::size_t kCols = 1 + 2 * kSensorCount + 3;
  std::int64_t expected_t = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    if (f.size() != kCols) throw std::runtime_error("recording row with " + std::to_string(f.size()) + " fields");
    const auto t = text::parse_int(f[0]);
    if (first) {
      rec.t0_ms = t;
      first = false;
    } else if (t != expected_t) {
      throw std::runtime_error("recording rows not on a gap-free 1 ms grid at t=" + std::to_string(t));
    }
    expected_t = t + 1;
    for (std::size_t s = 0; s < kSensorCount; ++s) rec.resistance[s].push_back(text::parse_double(f[1 + s]));
    for (std::size_t s = 0; s < kSensorCount; ++s)
      rec.hotplate_c[s].push_back(text::parse_double(f[1 + kSensorCount + s]));
    rec.valves.push_back(static_cast<std::uint32_t>(text::parse_u64(f[1 + 2 * kSensorCount])));
    rec.pid_v.push_back(text::parse_double(f[2 + 2 * kSensorCount]));
    rec.flow_au.push_back(text::parse_double(f[3 + 2 * kSensorCount]));
  }
  return rec;
}

namespace {

constexpr char kBinaryMagic[8] = {'F', 'N', 'R', 'E', 'C', 'B', 'I', 'N'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "binary recordings assume little-endian hosts");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("binary recording truncated");
  return v;
}

template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void get_vec(std::istream& in, std::vector<T>& v, std::size_t n) {
  v.resize(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T))))
    throw std::runtime_error("binary recording truncated");
}

}  // namespace

void write_recording_binary(std::ostream& out, const Recording& rec) {
  out.write(kBinaryMagic, sizeof kBinaryMagic);
  put<std::int32_t>(out, rec.header.version);
  put<std::uint64_t>(out, rec.header.seed);
  put<char>(out, rec.header.protocol);
  put<std::uint64_t>(out, rec.header.params_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.header.trial_id.size()));
  out.write(rec.header.trial_id.data(), static_cast<std::streamsize>(rec.header.trial_id.size()));
  put<std::int64_t>(out, rec.t0_ms);
  put<std::uint64_t>(out, rec.size());
  for (const auto& r : rec.resistance) put_vec(out, r);
  for (const auto& h : rec.hotplate_c) put_vec(out, h);
  put_vec(out, rec.valves);
  put_vec(out, rec.pid_v);
  put_vec(out, rec.flow_au);
}

Recording read_recording_binary(std::istream& in) {
  char magic[sizeof kBinaryMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kBinaryMagic, sizeof magic) != 0)
    throw std::runtime_error("not a binary fastnose recording");
  Recording rec;
  rec.header.version = get<std::int32_t>(in);
  if (rec.header.version != kRecordingFormatVersion)
    throw std::runtime_error("unsupported recording version " + std::to_string(rec.header.version));
  rec.header.seed = get<std::uint64_t>(in);
  rec.header.protocol = get<char>(in);
  rec.header.params_hash = get<std::uint64_t>(in);
  const auto id_len = get<std::uint32_t>(in);
  if (id_len > 4096) throw std::runtime_error("binary recording: corrupt trial id");
  rec.header.trial_id.resize(id_len);
  if (!in.read(rec.header.trial_id.data(), id_len)) throw std::runtime_error("binary recording truncated");
  rec.t0_ms = get<std::int64_t>(in);
  const auto n = static_cast<std::size_t>(get<std::uint64_t>(in));
  for (auto& r : rec.resistance) get_vec(in, r, n);
  for (auto& h : rec.hotplate_c) get_vec(in, h, n);
  get_vec(in, rec.valves, n);
  get_vec(in, rec.pid_v, n);
  get_vec(in, rec.flow_au, n);
  return rec;
}

namespace {
bool is_binary_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
}
}  // namespace

void save_recording(const std::string& path, const Recording& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write recording: " + path);
  if (is_binary_path(path)) write_recording_binary(out, rec);
  else write_recording_text(out, rec);
  if (!out) throw std::runtime_error("failed writing recording: " + path);
}

Recording load_recording(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open recording: " + path);
  return is_binary_path(path) ? read_recording_binary(in) : read_recording_text(in);
}

}  // namespace fastnose
