#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "echosonar/chirp.hpp"
#include "echosonar/pose.hpp"

namespace echosonar {

/// Distance at a time instant; trajectories interpolate linearly between keyframes
/// and hold the end values outside them.
struct Keyframe {
  double time = 0.0;      // s
  double distance = 0.0;  // m
};

struct Reflector {
  std::vector<Keyframe> trajectory;
  double reflectivity = 0.0;  // echo amplitude at 1 m; the received gain is reflectivity / d^2

  void validate() const;
  double distance_at(double time) const;
  /// Closest distance over the keyframes.
  double min_distance() const;

  static Reflector fixed(double distance, double reflectivity);
  /// Plate moving back and forth between `near` and `far` at constant `speed`,
  /// starting at `near` moving away (or at `far` moving closer when `approach_first`).
  static Reflector oscillating(double near, double far, double speed, double duration, double reflectivity,
                               bool approach_first = false);
};

/// Timing offset of each chirp frame's emission, in samples.
struct JitterModel {
  enum class Kind { none, uniform, periodic };
  Kind kind = Kind::none;
  int max_offset = 0;        // uniform: offsets drawn from [-max_offset, max_offset]
  std::vector<int> pattern;  // periodic: offset of frame k is pattern[k % size]

  /// Offsets for frames [0, n_frames).
  std::vector<int> offsets(Eigen::Index n_frames, std::uint64_t seed) const;
};

/// Additive noise. Levels in dBA are on the same scale as the device presets:
/// a source `level_dba` has RMS 10^((level_dba - emission_dba) / 20) times the
/// emitted chirp RMS.
struct NoiseModel {
  enum class Kind {
    gaussian,  // in-band (f_min..f_max) gaussian noise at snr_db against the direct path
    music,     // pink noise band-limited below cutoff_hz, at level_dba
    tone       // sinusoid at frequency_hz, at level_dba
  };
  Kind kind = Kind::gaussian;
  double snr_db = 30.0;
  double level_dba = 80.0;
  double cutoff_hz = 16000.0;
  double frequency_hz = 1000.0;
};

struct DevicePreset {
  std::string name;
  double output_dba = 0.0;  // playback level measured 10 cm from the speaker
  double imu_rate_hz = 100.0;
};

/// Galaxy Watch 7 (61.6 dBA, 100 Hz IMU), Xiaomi Watch 2 Pro (66.9 dBA, 50 Hz),
/// Pixel Watch 3 (80.8 dBA, 200 Hz).
const std::vector<DevicePreset>& device_presets();
const DevicePreset& device_preset(const std::string& name);

/// Level that maps to unit emission gain.
inline constexpr double kReferenceEmissionDba = 61.6;

struct SceneSpec {
  double direct_path_delay = 6.0;  // samples, speaker to microphone
  double direct_path_gain = 1.0;
  std::vector<Reflector> reflectors;
  JitterModel jitter;
  std::vector<NoiseModel> noise;
  std::optional<std::string> device_preset;

  /// Emission level in dBA: the preset's output level, else the reference level.
  double emission_dba() const;
  /// Scalar gain applied to the emitted chirp.
  double emission_gain() const;
  /// Throws ParameterError when an echo could rival the direct path or a model is malformed.
  void validate() const;
};

/// Microphone recording of `duration` seconds: direct path plus each
/// reflector's 1/d^2-attenuated echo. Reflector distances are measured from
/// the direct path, so an echo arrives 2 d / c after the direct-path copy (fractional delays by
/// linear interpolation), plus noise. Deterministic in `seed`.
Eigen::VectorXd simulate(const SceneSpec& scene, const ChirpSpec& chirp, double duration, std::uint64_t seed,
                         const PhysicalConstants& constants = {});

/// Shifts the samples of each frame [kL, (k+1)L) later by the model's offset
/// for frame k, zero-filling where the shift reaches outside the recording.
/// Length is preserved.
Eigen::VectorXd inject_jitter(const Eigen::VectorXd& recording, const JitterModel& model, const ChirpSpec& chirp,
                              std::uint64_t seed);

/// Toy pose-to-acoustics forward model.
struct PoseToReflectors {
  Eigen::Vector3d watch_origin{-0.02, 0.02, 0.015};  // wrist-relative, meters
  double fingertip_reflectivity = 3e-4;
  double phalanx_reflectivity = 4e-4;
  SceneSpec base;  // direct path, jitter and noise carried over into every scene
};

/// One reflector per fingertip and one per middle phalanx (midpoint of the
/// finger's second and third landmarks), at their distance from the watch origin.
SceneSpec hand_scene_from_pose(const HandPose& pose, const PoseToReflectors& mapping = {});

/// Hand moving through a timed pose stream: each reflector of
/// hand_scene_from_pose gets one keyframe per pose frame.
SceneSpec hand_scene_from_poses(std::span<const PoseFrame> frames, const PoseToReflectors& mapping = {});

/// Per-finger flexion in [0, 1] (0 = extended, 1 = fully curled), thumb first.
using FingerFlexion = std::array<double, 5>;

/// Canonical right hand in the reference palm frame, wrist at the origin,
/// wrist-to-little-MCP length 0.095 m; flexion bends each chain toward -z.
HandPose articulated_hand(const FingerFlexion& flexion);

/// Band-limited noise with spectral amplitude proportional to f^-slope/2 in
/// [low_hz, high_hz] and zero elsewhere, scaled to unit RMS.
Eigen::VectorXd band_limited_noise(Eigen::Index length, double sample_rate, double low_hz, double high_hz,
                                   double slope, std::uint64_t seed);

}  // namespace echosonar
