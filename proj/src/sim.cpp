#include "echosonar/sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <unsupported/Eigen/FFT>

#include "echosonar/dsp.hpp"
#include "echosonar/error.hpp"

namespace echosonar {

namespace {

// Stream ids so that jitter and each noise source draw independent sequences.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double interpolate(const Eigen::VectorXd& stream, double position) {
  const double base = std::floor(position);
  const auto i = static_cast<Eigen::Index>(base);
  const double frac = position - base;
  const double a = (i >= 0 && i < stream.size()) ? stream[i] : 0.0;
  const double b = (i + 1 >= 0 && i + 1 < stream.size()) ? stream[i + 1] : 0.0;
  return a + frac * (b - a);
}

double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace

void Reflector::validate() const {
  if (trajectory.empty()) throw ParameterError("reflector: trajectory needs at least one keyframe");
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (!(trajectory[i].distance > 0.0)) throw ParameterError("reflector: keyframe distances must be positive");
    if (i > 0 && !(trajectory[i].time > trajectory[i - 1].time)) {
      throw ParameterError("reflector: keyframe times must be strictly increasing");
    }
  }
  if (!(reflectivity >= 0.0)) throw ParameterError("reflector: reflectivity must be >= 0");
}

double Reflector::distance_at(double time) const {
  if (time <= trajectory.front().time) return trajectory.front().distance;
  if (time >= trajectory.back().time) return trajectory.back().distance;
  const auto next = std::upper_bound(trajectory.begin(), trajectory.end(), time,
                                     [](double t, const Keyframe& k) { return t < k.time; });
  const auto prev = next - 1;
  const double alpha = (time - prev->time) / (next->time - prev->time);
  return prev->distance + alpha * (next->distance - prev->distance);
}

double Reflector::min_distance() const {
  return std::min_element(trajectory.begin(), trajectory.end(),
                          [](const Keyframe& a, const Keyframe& b) { return a.distance < b.distance; })
      ->distance;
}

Reflector Reflector::fixed(double distance, double reflectivity) {
  return Reflector{{Keyframe{0.0, distance}}, reflectivity};
}

Reflector Reflector::oscillating(double near, double far, double speed, double duration, double reflectivity,
                                 bool approach_first) {
  if (!(far > near) || !(speed > 0.0)) throw ParameterError("oscillating reflector: require far > near, speed > 0");
  const double leg = (far - near) / speed;
  Reflector r;
  r.reflectivity = reflectivity;
  bool at_near = !approach_first;
  for (double t = 0.0;; t += leg) {
    r.trajectory.push_back({t, at_near ? near : far});
    at_near = !at_near;
    if (t >= duration) break;
  }
  return r;
}

std::vector<int> JitterModel::offsets(Eigen::Index n_frames, std::uint64_t seed) const {
  std::vector<int> out(static_cast<std::size_t>(std::max<Eigen::Index>(0, n_frames)), 0);
  switch (kind) {
    case Kind::none:
      break;
    case Kind::uniform: {
      if (max_offset < 0) throw ParameterError("jitter: max_offset must be >= 0");
      std::mt19937_64 rng(derive_seed(seed, 1));
      std::uniform_int_distribution<int> draw(-max_offset, max_offset);
      for (int& o : out) o = draw(rng);
      break;
    }
    case Kind::periodic:
      if (pattern.empty()) throw ParameterError("jitter: periodic pattern is empty");
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = pattern[k % pattern.size()];
      break;
  }
  return out;
}

const std::vector<DevicePreset>& device_presets() {
  static const std::vector<DevicePreset> presets{
      {"galaxy", 61.6, 100.0},
      {"xiaomi", 66.9, 50.0},
      {"pixel", 80.8, 200.0},
  };
  return presets;
}

const DevicePreset& device_preset(const std::string& name) {
  for (const DevicePreset& p : device_presets()) {
    if (p.name == name) return p;
  }
  throw ParameterError("unknown device preset '" + name + "'");
}

double SceneSpec::emission_dba() const {
  return device_preset ? echosonar::device_preset(*device_preset).output_dba : kReferenceEmissionDba;
}

double SceneSpec::emission_gain() const { return db_to_amplitude(emission_dba() - kReferenceEmissionDba); }

void SceneSpec::validate() const {
  if (!(direct_path_gain > 0.0)) throw ParameterError("scene: direct_path_gain must be positive");
  if (!(direct_path_delay >= 0.0)) throw ParameterError("scene: direct_path_delay must be >= 0");
  for (const Reflector& r : reflectors) {
    r.validate();
    const double d = r.min_distance();
    if (!(r.reflectivity / (d * d) < direct_path_gain)) {
      throw ParameterError("scene: echo gain " + std::to_string(r.reflectivity / (d * d)) +
                           " at " + std::to_string(d) + " m does not stay below the direct path gain");
    }
  }
  for (const NoiseModel& n : noise) {
    if (!std::isfinite(n.snr_db) || !std::isfinite(n.level_dba)) throw ParameterError("scene: noise level must be finite");
    if (n.kind == NoiseModel::Kind::music && !(n.cutoff_hz > 20.0)) throw ParameterError("scene: music cutoff must exceed 20 Hz");
  }
  if (device_preset) (void)echosonar::device_preset(*device_preset);
}

Eigen::VectorXd band_limited_noise(Eigen::Index length, double sample_rate, double low_hz, double high_hz,
                                   double slope, std::uint64_t seed) {
  if (length <= 0) return {};
  if (!(high_hz > low_hz) || low_hz < 0.0) throw ParameterError("band_limited_noise: empty band");
  const Eigen::Index nfft = detail::next_pow2(length);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(nfft / 2 + 1));
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
    const double re = gauss(rng), im = gauss(rng);
    if (f < low_hz || f > high_hz) continue;
    spectrum[k] = std::complex<double>(re, im) * std::pow(f, -slope / 2.0);
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> time;
  fft.inv(time, spectrum, nfft);
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(time.data(), length);
  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(length));
  if (rms > 0.0) out /= rms;
  return out;
}

Eigen::VectorXd simulate(const SceneSpec& scene, const ChirpSpec& chirp, double duration, std::uint64_t seed,
                         const PhysicalConstants& constants) {
  chirp.validate();
  constants.validate();
  scene.validate();
  const double fs = chirp.sample_rate;
  const Eigen::Index L = chirp.frame_len;
  const auto n = static_cast<Eigen::Index>(std::llround(duration * fs));
  if (n < 2 * L) throw ParameterError("simulate: duration must cover at least two frames");

  // Emitted stream with per-frame jitter on the emission instant.
  const Eigen::VectorXd tx = generate_chirp(chirp) * scene.emission_gain();
  const Eigen::Index n_frames = n / L + 2;
  const auto offsets = scene.jitter.offsets(n_frames, seed);
  Eigen::VectorXd emitted = Eigen::VectorXd::Zero(n + L);
  for (Eigen::Index k = 0; k < n_frames; ++k) {
    const Eigen::Index start = k * L + offsets[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < L; ++i) {
      const Eigen::Index at = start + i;
      if (at >= 0 && at < emitted.size()) emitted[at] += tx[i];
    }
  }

  Eigen::VectorXd out(n);
  const double samples_per_meter = 2.0 * fs / constants.speed_of_sound;
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = scene.direct_path_gain * interpolate(emitted, static_cast<double>(i) - scene.direct_path_delay);
  }
  for (const Reflector& r : scene.reflectors) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = r.distance_at(static_cast<double>(i) / fs);
      const double delay = scene.direct_path_delay + d * samples_per_meter;
      out[i] += r.reflectivity / (d * d) * interpolate(emitted, static_cast<double>(i) - delay);
    }
  }

  const double chirp_rms = std::sqrt(generate_chirp(chirp).squaredNorm() / static_cast<double>(L));
  for (std::size_t k = 0; k < scene.noise.size(); ++k) {
    const NoiseModel& model = scene.noise[k];
    const std::uint64_t stream_seed = derive_seed(seed, 100 + k);
    const double level_rms = db_to_amplitude(model.level_dba - kReferenceEmissionDba) * chirp_rms;
    switch (model.kind) {
      case NoiseModel::Kind::gaussian: {
        const double signal_rms = scene.direct_path_gain * scene.emission_gain() * chirp_rms;
        out += band_limited_noise(n, fs, chirp.f_min, chirp.f_max, 0.0, stream_seed) *
               (signal_rms / db_to_amplitude(model.snr_db));
        break;
      }
      case NoiseModel::Kind::music:
        out += band_limited_noise(n, fs, 20.0, std::min(model.cutoff_hz, fs / 2.0), 1.0, stream_seed) * level_rms;
        break;
      case NoiseModel::Kind::tone: {
        const double amplitude = std::sqrt(2.0) * level_rms;
        for (Eigen::Index i = 0; i < n; ++i) {
          out[i] += amplitude * std::sin(2.0 * std::numbers::pi * model.frequency_hz * static_cast<double>(i) / fs);
        }
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd inject_jitter(const Eigen::VectorXd& recording, const JitterModel& model, const ChirpSpec& chirp,
                              std::uint64_t seed) {
  chirp.validate();
  const Eigen::Index L = chirp.frame_len;
  const Eigen::Index n = recording.size();
  const Eigen::Index n_frames = (n + L - 1) / L;
  const auto offsets = model.offsets(n_frames, seed);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n_frames; ++k) {
    const Eigen::Index shift = offsets[static_cast<std::size_t>(k)];
    for (Eigen::Index i = k * L; i < std::min(n, (k + 1) * L); ++i) {
      const Eigen::Index src = i - shift;
      if (src >= 0 && src < n) out[i] = recording[src];
    }
  }
  return out;
}

SceneSpec hand_scene_from_pose(const HandPose& pose, const PoseToReflectors& mapping) {
  SceneSpec scene = mapping.base;
  const HandPose rel = to_wrist_relative(pose);
  for (int f = 0; f < 5; ++f) {
    const auto chain = finger_chain(static_cast<Finger>(f));
    const Eigen::Vector3d tip = rel.point(chain[3]);
    const Eigen::Vector3d phalanx = 0.5 * (rel.point(chain[1]) + rel.point(chain[2]));
    scene.reflectors.push_back(Reflector::fixed((tip - mapping.watch_origin).norm(), mapping.fingertip_reflectivity));
    scene.reflectors.push_back(Reflector::fixed((phalanx - mapping.watch_origin).norm(), mapping.phalanx_reflectivity));
  }
  return scene;
}

SceneSpec hand_scene_from_poses(std::span<const PoseFrame> frames, const PoseToReflectors& mapping) {
  if (frames.empty()) throw ParameterError("hand_scene_from_poses: empty pose stream");
  SceneSpec scene = mapping.base;
  const std::size_t first = scene.reflectors.size();
  for (const PoseFrame& frame : frames) {
    const SceneSpec s = hand_scene_from_pose(frame.pose, mapping);
    scene.reflectors.resize(s.reflectors.size());
    for (std::size_t r = first; r < s.reflectors.size(); ++r) {
      scene.reflectors[r].reflectivity = s.reflectors[r].reflectivity;
      scene.reflectors[r].trajectory.push_back({frame.timestamp, s.reflectors[r].trajectory.front().distance});
    }
  }
  return scene;
}

HandPose articulated_hand(const FingerFlexion& flexion) {
  for (double f : flexion) {
    if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("articulated_hand: flexion must lie in [0, 1]");
  }
  constexpr double kDeg = std::numbers::pi / 180.0;
  struct FingerGeometry {
    Eigen::Vector3d base;
    double heading_deg;
    std::array<double, 3> bones;
    std::array<double, 3> max_bend_deg;
  };
  const double little_angle = 30.0 * kDeg;
  const std::array<FingerGeometry, 5> fingers{{
      {{0.025, -0.020, 0.0}, -40.0, {0.040, 0.032, 0.028}, {30.0, 50.0, 60.0}},
      {{0.095, 0.0, 0.0}, -3.0, {0.040, 0.025, 0.020}, {80.0, 100.0, 70.0}},
      {{0.093, 0.0165, 0.0}, 0.0, {0.045, 0.028, 0.022}, {80.0, 100.0, 70.0}},
      {{0.0885, 0.0325, 0.0}, 4.0, {0.042, 0.026, 0.020}, {80.0, 100.0, 70.0}},
      {{0.095 * std::cos(little_angle), 0.095 * std::sin(little_angle), 0.0}, 9.0, {0.032, 0.020, 0.018}, {80.0, 100.0, 70.0}},
  }};

  HandPose pose;
  const Eigen::Vector3d down(0.0, 0.0, -1.0);
  for (int f = 0; f < 5; ++f) {
    const FingerGeometry& g = fingers[static_cast<std::size_t>(f)];
    const double c = std::clamp(flexion[static_cast<std::size_t>(f)], 0.0, 1.0);
    const Eigen::Vector3d heading(std::cos(g.heading_deg * kDeg), std::sin(g.heading_deg * kDeg), 0.0);
    const auto chain = finger_chain(static_cast<Finger>(f));
    Eigen::Vector3d at = g.base;
    pose.landmarks.row(chain[0]) = at.transpose();
    double bend = 0.0;
    for (int b = 0; b < 3; ++b) {
      bend += c * g.max_bend_deg[static_cast<std::size_t>(b)] * kDeg;
      at += g.bones[static_cast<std::size_t>(b)] * (std::cos(bend) * heading + std::sin(bend) * down);
      pose.landmarks.row(chain[b + 1]) = at.transpose();
    }
  }
  return pose;
}

}  // namespace echosonar
