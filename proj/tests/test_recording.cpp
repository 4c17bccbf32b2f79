#include "fastnose/recording.hpp"
#include "fastnose/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace fastnose;

namespace {

Recording sample_recording(std::size_t n, std::uint64_t seed) {
  Recording rec;
  rec.header.seed = seed;
  rec.header.protocol = 'B';
  rec.header.params_hash = 0xdeadbeefcafef00dULL;
  rec.header.trial_id = "B00042";
  rec.t0_ms = 123456;
  rec.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < kSensorCount; ++s) {
      rec.resistance[s][i] = std::exp(rng.uniform(5.0, 14.0));
      rec.hotplate_c[s][i] = rng.uniform(25.0, 450.0);
    }
    rec.valves[i] = static_cast<std::uint32_t>(rng.index(16));
    rec.pid_v[i] = rng.normal();
    rec.flow_au[i] = rng.uniform();
  }
  return rec;
}

}  // namespace

TEST(Recording, TextRoundTripIsBitExact) {
  const auto rec = sample_recording(300, 1);
  std::stringstream ss;
  write_recording_text(ss, rec);
  const auto back = read_recording_text(ss);
  EXPECT_TRUE(back == rec);
  EXPECT_EQ(back.header.params_hash, rec.header.params_hash);
  EXPECT_EQ(back.t_end_ms(), rec.t0_ms + 300);
}

TEST(Recording, BinaryRoundTripIsBitExact) {
  const auto rec = sample_recording(300, 2);
  std::stringstream ss;
  write_recording_binary(ss, rec);
  EXPECT_TRUE(read_recording_binary(ss) == rec);
}

TEST(Recording, FilesPickFormatByExtension) {
  const auto dir = std::filesystem::temp_directory_path() / "fastnose_rec_test";
  std::filesystem::create_directories(dir);
  const auto rec = sample_recording(50, 3);
  save_recording((dir / "a.csv").string(), rec);
  save_recording((dir / "a.bin").string(), rec);
  EXPECT_TRUE(load_recording((dir / "a.csv").string()) == rec);
  EXPECT_TRUE(load_recording((dir / "a.bin").string()) == rec);
  std::filesystem::remove_all(dir);
}

TEST(Recording, ColumnLayout) {
  const auto rec = sample_recording(2, 4);
  std::stringstream ss;
  write_recording_text(ss, rec);
  std::string line;
  for (int i = 0; i < 6; ++i) std::getline(ss, line);
  EXPECT_EQ(line,
            "t_ms,r_sensor_1,r_sensor_2,r_sensor_3,r_sensor_4,r_sensor_5,r_sensor_6,r_sensor_7,r_sensor_8,"
            "t_hot_1,t_hot_2,t_hot_3,t_hot_4,t_hot_5,t_hot_6,t_hot_7,t_hot_8,valve_bitmask,pid_v,flow_au");
}

TEST(Recording, RejectsGapsAndBadHeaders) {
  const auto rec = sample_recording(5, 5);
  std::stringstream ss;
  write_recording_text(ss, rec);
  std::string text = ss.str();
  const auto pos = text.find("\n123458,");
  ASSERT_NE(pos, std::string::npos);
  std::string gappy = text;
  gappy.replace(pos + 1, 6, "123459");
  std::istringstream g(gappy);
  EXPECT_THROW(read_recording_text(g), std::runtime_error);
  std::istringstream bad("# not-a-recording 1\n");
  EXPECT_THROW(read_recording_text(bad), std::runtime_error);
}
