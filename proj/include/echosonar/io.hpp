#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "echosonar/echo.hpp"
#include "echosonar/imu.hpp"
#include "echosonar/pose.hpp"

namespace echosonar {

struct WavAudio {
  double sample_rate = 48000.0;
  Eigen::VectorXd samples;  // mono, in [-1, 1)
};

/// 16-bit PCM mono WAV; samples are divided by 32768.
WavAudio read_wav(const std::string& path);
/// Writes 16-bit PCM mono, scaling by 32768 with rounding and clipping to the int16 range.
void write_wav(const std::string& path, const Eigen::VectorXd& samples, double sample_rate);

/// Record kinds of the binary container. Each record is a 32-byte
/// little-endian header followed by rows*cols float64 values in row-major order:
///   0  char[4] magic "ESPF"    4  u32 version (1)
///   8  u32 rows               12  u32 cols
///  16  u32 kind               20  u32 reserved (0)
///  24  f64 scalar (meaning depends on kind)
enum class RecordKind : std::uint32_t {
  original_profile = 0,      // scalar: frame duration (s)
  differential_profile = 1,  // scalar: frame duration (s)
  window = 2,                // rows = 2 * range bins, original channel on top; scalar: end timestamp (s)
  pose = 3,                  // 21 x 3 landmarks; scalar: preprocessing time of its window (ms)
  imu_window = 4,            // samples x 24; scalar: window start time (s)
  model = 5,                 // estimator type code; scalar: k. See save_estimator
};

struct Record {
  RecordKind kind = RecordKind::original_profile;
  double scalar = 0.0;
  Eigen::MatrixXd values;
};

inline constexpr std::size_t kRecordHeaderBytes = 32;

void write_records(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_records(const std::string& path);

void write_profile(const std::string& path, const EchoProfile& profile);
EchoProfile read_profile(const std::string& path);

Record window_record(const EchoWindow& window, double timestamp);
EchoWindow window_from_record(const Record& record);

/// 8-bit binary PGM of an image with values in [0, 1]; row 0 on top.
void write_pgm(const std::string& path, const Eigen::MatrixXd& image);
/// 8-bit grayscale PNG of an image with values in [0, 1].
void write_png(const std::string& path, const Eigen::MatrixXd& image);

}  // namespace echosonar
