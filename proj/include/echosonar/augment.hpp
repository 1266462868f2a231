#pragma once

#include <random>

#include "echosonar/echo.hpp"

namespace echosonar {

struct AugmentSpec {
  int vertical_shift_bins = 5;
  double amp_prob = 0.8;
  double amp_min = 0.95, amp_max = 1.05;
  double mask_prob = 0.8;
  int time_mask_min = 5, time_mask_max = 15;
  int range_mask_min = 5, range_mask_max = 10;
  bool renormalize = true;  // z-score both channels after augmenting

  void validate() const;
};

/// What one augment_window call drew.
struct AugmentDraw {
  int shift = 0;              // rows; positive moves content to larger range
  bool amplitude_applied = false;
  double amplitude = 1.0;
  bool mask_applied = false;
  Eigen::Index time_mask_start = 0, time_mask_width = 0;
  Eigen::Index range_mask_start = 0, range_mask_height = 0;
};

struct AugmentResult {
  EchoWindow window;
  AugmentDraw draw;
};

/// Vertical shift with zero fill, then amplitude scaling, then one time band
/// and one range band zeroed, each draw shared by both channels. Expects a
/// pre-normalization window; re-normalizes per channel unless disabled.
AugmentResult augment_window_traced(const EchoWindow& window, const AugmentSpec& spec, std::mt19937_64& rng);

inline EchoWindow augment_window(const EchoWindow& window, const AugmentSpec& spec, std::mt19937_64& rng) {
  return augment_window_traced(window, spec, rng).window;
}

}  // namespace echosonar
