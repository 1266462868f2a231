#pragma once

#include <Eigen/Core>

namespace echosonar {

/// Parameters of the transmitted linear FMCW sweep. One frame is one sweep.
struct ChirpSpec {
  double f_min = 18000.0;       // Hz
  double f_max = 21000.0;       // Hz
  double sample_rate = 48000.0; // samples/s
  Eigen::Index frame_len = 600; // samples per sweep

  /// Throws ParameterError unless 0 < f_min < f_max < sample_rate / 2 and frame_len > 0.
  void validate() const;

  double bandwidth() const { return f_max - f_min; }
  /// Sweep duration in seconds.
  double frame_duration() const { return static_cast<double>(frame_len) / sample_rate; }
};

struct PhysicalConstants {
  double speed_of_sound = 343.0;  // m/s

  void validate() const;
};

/// One unit-amplitude linear up-sweep from f_min to f_max, phase zero at sample 0:
/// x[n] = sin(2*pi*(f_min*t + B/(2T)*t^2)), t = n/fs, T = frame duration.
Eigen::VectorXd generate_chirp(const ChirpSpec& spec);

/// Cross-correlation ranging resolution, c / (2 fs), in meters per range bin.
double range_resolution(const ChirpSpec& spec, const PhysicalConstants& constants = {});

/// Bandwidth-limited resolution of conventional linear FMCW, c / (2 B), in meters.
double linear_fmcw_resolution(const ChirpSpec& spec, const PhysicalConstants& constants = {});

/// n_frames back-to-back copies of generate_chirp(spec); every frame restarts at phase zero.
Eigen::VectorXd assemble_tx_stream(const ChirpSpec& spec, Eigen::Index n_frames);

}  // namespace echosonar
