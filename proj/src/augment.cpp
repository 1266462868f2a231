#include "echosonar/augment.hpp"

#include <cmath>

#include "echosonar/error.hpp"

namespace echosonar {

void AugmentSpec::validate() const {
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (vertical_shift_bins < 0) throw ParameterError("augment: vertical_shift_bins must be >= 0");
  if (!probability(amp_prob) || !probability(mask_prob)) throw ParameterError("augment: probabilities must lie in [0, 1]");
  if (!(amp_min <= amp_max)) throw ParameterError("augment: empty amplitude range");
  if (time_mask_min < 0 || time_mask_min > time_mask_max || range_mask_min < 0 || range_mask_min > range_mask_max) {
    throw ParameterError("augment: empty mask range");
  }
}

AugmentResult augment_window_traced(const EchoWindow& window, const AugmentSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const Eigen::Index rows = window.rows();
  const Eigen::Index cols = window.cols();
  AugmentResult result{window, {}};
  AugmentDraw& draw = result.draw;

  draw.shift = std::uniform_int_distribution<int>(-spec.vertical_shift_bins, spec.vertical_shift_bins)(rng);
  if (draw.shift != 0) {
    const Eigen::Index s = draw.shift;
    const Eigen::Index kept = std::max<Eigen::Index>(0, rows - std::abs(s));
    for (Eigen::MatrixXd& ch : result.window.channels) {
      Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(rows, cols);
      if (kept > 0) {
        if (s > 0) shifted.bottomRows(kept) = ch.topRows(kept);
        else shifted.topRows(kept) = ch.bottomRows(kept);
      }
      ch = std::move(shifted);
    }
  }

  std::bernoulli_distribution amp_coin(spec.amp_prob);
  if (amp_coin(rng)) {
    draw.amplitude_applied = true;
    draw.amplitude = std::uniform_real_distribution<double>(spec.amp_min, spec.amp_max)(rng);
    for (Eigen::MatrixXd& ch : result.window.channels) ch *= draw.amplitude;
  }

  std::bernoulli_distribution mask_coin(spec.mask_prob);
  if (mask_coin(rng)) {
    draw.mask_applied = true;
    draw.time_mask_width = std::min<Eigen::Index>(
        cols, std::uniform_int_distribution<int>(spec.time_mask_min, spec.time_mask_max)(rng));
    draw.time_mask_start = std::uniform_int_distribution<Eigen::Index>(0, cols - draw.time_mask_width)(rng);
    draw.range_mask_height = std::min<Eigen::Index>(
        rows, std::uniform_int_distribution<int>(spec.range_mask_min, spec.range_mask_max)(rng));
    draw.range_mask_start = std::uniform_int_distribution<Eigen::Index>(0, rows - draw.range_mask_height)(rng);
    for (Eigen::MatrixXd& ch : result.window.channels) {
      ch.middleCols(draw.time_mask_start, draw.time_mask_width).setZero();
      ch.middleRows(draw.range_mask_start, draw.range_mask_height).setZero();
    }
  }

  if (spec.renormalize) {
    Eigen::MatrixXd& original = result.window.channels[EchoWindow::kOriginal];
    const double reference = original.size() ? std::sqrt(original.squaredNorm() / static_cast<double>(original.size())) : 0.0;
    for (Eigen::MatrixXd& ch : result.window.channels) normalize_channel(ch, reference);
  }
  return result;
}

}  // namespace echosonar
