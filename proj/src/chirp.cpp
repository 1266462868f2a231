#include "echosonar/chirp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "echosonar/error.hpp"

namespace echosonar {

void ChirpSpec::validate() const {
  if (!(f_min > 0.0) || !(f_max > f_min) || !(f_max < sample_rate / 2.0)) {
    throw ParameterError("chirp: require 0 < f_min < f_max < sample_rate/2 (got f_min=" + std::to_string(f_min) +
                         ", f_max=" + std::to_string(f_max) + ", sample_rate=" + std::to_string(sample_rate) + ")");
  }
  if (frame_len <= 0) throw ParameterError("chirp: frame_len must be positive");
}

void PhysicalConstants::validate() const {
  if (!(speed_of_sound > 0.0)) throw ParameterError("speed_of_sound must be positive");
}

Eigen::VectorXd generate_chirp(const ChirpSpec& spec) {
  spec.validate();
  const double sweep_rate = spec.bandwidth() / (2.0 * spec.frame_duration());
  Eigen::VectorXd chirp(spec.frame_len);
  for (Eigen::Index n = 0; n < spec.frame_len; ++n) {
    const double t = static_cast<double>(n) / spec.sample_rate;
    chirp[n] = std::sin(2.0 * std::numbers::pi * (spec.f_min * t + sweep_rate * t * t));
  }
  return chirp;
}

double range_resolution(const ChirpSpec& spec, const PhysicalConstants& constants) {
  return constants.speed_of_sound / (2.0 * spec.sample_rate);
}

double linear_fmcw_resolution(const ChirpSpec& spec, const PhysicalConstants& constants) {
  return constants.speed_of_sound / (2.0 * spec.bandwidth());
}

Eigen::VectorXd assemble_tx_stream(const ChirpSpec& spec, Eigen::Index n_frames) {
  if (n_frames < 1) throw ParameterError("assemble_tx_stream: n_frames must be >= 1");
  const Eigen::VectorXd chirp = generate_chirp(spec);
  return chirp.replicate(n_frames, 1);
}

}  // namespace echosonar
