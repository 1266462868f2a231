#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace echosonar {

/// Timestamped 6-axis samples: ax, ay, az (m/s^2), gx, gy, gz (rad/s).
struct ImuRecording {
  std::vector<std::int64_t> timestamp_ns;
  Eigen::MatrixXd samples;  // (n, 6)
};

/// Delimited text with columns timestamp_ns, ax, ay, az, gx, gy, gz.
ImuRecording read_imu_file(const std::string& path);
void write_imu_file(const std::string& path, const ImuRecording& recording);

/// Linear interpolation onto a uniform grid at `sample_rate`, starting at the
/// first timestamp. Returns (n, 6).
Eigen::MatrixXd resample_imu(const ImuRecording& recording, double sample_rate);

/// Filter bands applied to every raw channel.
struct ImuBands {
  double low_band_lo = 0.22, low_band_hi = 8.0;
  double mid_band_lo = 8.0, mid_band_hi = 32.0;
  double high_cut = 32.0;
  int order = 2;
};

/// (n, 6) -> (n, 24): raw channels, then 0.22-8 Hz bandpass, 8-32 Hz bandpass
/// and >32 Hz highpass versions of each, all causal Butterworth. When the mid
/// band's upper edge is not below 0.45 fs it is clamped there with a warning;
/// when the highpass cutoff is not below Nyquist the high band is empty and
/// its channels are zero. Throws DesignError naming the band when a band's
/// lower edge does not fit under 0.45 fs.
Eigen::MatrixXd expand_bands(const Eigen::MatrixXd& raw6, double sample_rate, const ImuBands& bands = {});

struct ImuWindow {
  Eigen::MatrixXd values;  // (window samples, 24), per-channel z-scored
  double start_time = 0.0; // seconds from the start of the stream
};

/// Number of samples in a window of `seconds` at `sample_rate`.
Eigen::Index imu_window_samples(double sample_rate, double seconds = 1.2);

/// Per-channel z-score with a zero-variance guard.
void normalize_columns(Eigen::MatrixXd& values);

/// Window i starts at floor(i * stride * fs); windows must fit entirely.
std::vector<ImuWindow> window_imu(const Eigen::MatrixXd& expanded, double sample_rate, double stride_seconds,
                                  double window_seconds = 1.2);

}  // namespace echosonar
