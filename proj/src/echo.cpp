#include "echosonar/echo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "echosonar/dsp.hpp"
#include "echosonar/error.hpp"

namespace echosonar {

namespace {

Eigen::Index lower_median(std::vector<Eigen::Index> values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

Eigen::Index argmax_abs(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  double best_value = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best_value) {
      best_value = a;
      best = i;
    }
  }
  return best;
}

}  // namespace

Eigen::Index start_from_sync_peak(Eigen::Index peak, Eigen::Index frame_len) {
  return (peak + frame_len - frame_len / 2) % frame_len;
}

AlignmentResult detect_start(const Eigen::VectorXd& rx, const Eigen::VectorXd& tx) {
  const Eigen::Index frame_len = tx.size();
  if (frame_len == 0) throw ParameterError("detect_start: empty template");
  if (rx.size() < 2 * frame_len) {
    throw InsufficientDataError("detect_start: recording shorter than two frames (" + std::to_string(rx.size()) +
                                " samples)");
  }
  const Eigen::VectorXd sync = cross_correlate(rx, tx);
  const Eigen::Index peak = argmax_abs(sync);
  if (!(std::abs(sync[peak]) > 0.0)) throw NoSignalError("detect_start: recording carries no correlation peak");

  AlignmentResult result;
  result.start_index = start_from_sync_peak(peak, frame_len);
  result.aligned = rx.tail(rx.size() - result.start_index);
  return result;
}

EchoProfile compute_echo_profile(const Eigen::VectorXd& aligned, const Eigen::VectorXd& tx, double sample_rate) {
  if (aligned.size() == 0) throw InsufficientDataError("compute_echo_profile: empty recording");
  const Eigen::Index frame_len = tx.size();
  const Eigen::VectorXd y = aligned.size() >= frame_len ? cross_correlate(aligned, tx) : Eigen::VectorXd();
  const Eigen::Index n_frames = y.size() / frame_len;
  if (n_frames < 1) throw InsufficientDataError("compute_echo_profile: correlation shorter than one frame");

  EchoProfile profile;
  // Column-major storage makes the row-major reshape + transpose a plain copy.
  profile.values = Eigen::Map<const Eigen::MatrixXd>(y.data(), frame_len, n_frames);
  profile.frame_duration = static_cast<double>(frame_len) / sample_rate;
  profile.kind = ProfileKind::original;
  return profile;
}

EchoProfile differential_profile(const EchoProfile& original) {
  if (original.cols() < 2) throw InsufficientDataError("differential_profile: need at least two frames");
  EchoProfile diff;
  const Eigen::Index n = original.cols() - 1;
  diff.values = original.values.rightCols(n).cwiseAbs() - original.values.leftCols(n).cwiseAbs();
  diff.frame_duration = original.frame_duration;
  diff.kind = ProfileKind::differential;
  return diff;
}

Eigen::VectorX<Eigen::Index> peak_rows(const EchoProfile& profile) {
  Eigen::VectorX<Eigen::Index> rows(profile.cols());
  for (Eigen::Index c = 0; c < profile.cols(); ++c) rows[c] = argmax_abs(profile.values.col(c));
  return rows;
}

Eigen::Index direct_path_row(const EchoProfile& profile) {
  if (profile.cols() == 0) throw InsufficientDataError("direct_path_row: empty profile");
  const auto rows = peak_rows(profile);
  return lower_median(std::vector<Eigen::Index>(rows.begin(), rows.end()));
}

EchoProfile realign_peaks(const EchoProfile& profile, const RealignSpec& spec) {
  if (spec.window_frames < 2) throw ParameterError("realign_peaks: window_frames must be >= 2");
  if (spec.max_shift < 0 || spec.deviation_threshold < 0 || spec.drift_threshold < 0) {
    throw ParameterError("realign_peaks: thresholds must be non-negative");
  }
  EchoProfile out = profile;
  const Eigen::Index n = profile.cols();
  const Eigen::Index len = profile.rows();
  if (n == 0) return out;

  const auto rows = peak_rows(profile);
  Eigen::Index reference = lower_median(std::vector<Eigen::Index>(rows.begin(), rows.end()));
  const Eigen::Index hop = std::max<Eigen::Index>(1, spec.window_frames / 2);

  for (Eigen::Index begin = 0; begin < n; begin += hop) {
    const Eigen::Index end = std::min(n, begin + spec.window_frames);
    const Eigen::Index estimate =
        lower_median(std::vector<Eigen::Index>(rows.begin() + begin, rows.begin() + end));
    if (std::abs(estimate - reference) > spec.drift_threshold) reference = estimate;

    for (Eigen::Index c = begin; c < std::min(n, begin + hop); ++c) {
      const Eigen::Index offset = rows[c] - reference;
      if (std::abs(offset) <= spec.deviation_threshold || std::abs(offset) > spec.max_shift) continue;
      for (Eigen::Index r = 0; r < len; ++r) {
        out.values(r, c) = profile.values(((r + offset) % len + len) % len, c);
      }
    }
  }
  return out;
}

EchoProfile median_drift_filter(const EchoProfile& profile, Eigen::Index kernel_frames) {
  if (kernel_frames < 2) throw ParameterError("median_drift_filter: kernel_frames must be >= 2");
  EchoProfile out = profile;
  const Eigen::Index n = profile.cols();
  const Eigen::Index before = kernel_frames / 2;
  const Eigen::Index after = kernel_frames - 1 - before;
  std::vector<double> buf(static_cast<std::size_t>(kernel_frames));
  for (Eigen::Index r = 0; r < profile.rows(); ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, c - before);
      const Eigen::Index hi = std::min(n - 1, c + after);
      const auto count = static_cast<std::size_t>(hi - lo + 1);
      for (Eigen::Index k = lo; k <= hi; ++k) buf[static_cast<std::size_t>(k - lo)] = profile.values(r, k);
      auto first = buf.begin();
      auto last = buf.begin() + static_cast<std::ptrdiff_t>(count);
      auto upper = first + static_cast<std::ptrdiff_t>(count / 2);
      std::nth_element(first, upper, last);
      if (count % 2 == 1) {
        out.values(r, c) = *upper;
      } else {
        const double lower = *std::max_element(first, upper);
        out.values(r, c) = 0.5 * (lower + *upper);
      }
    }
  }
  return out;
}

Eigen::VectorXd EchoWindow::flattened() const {
  Eigen::VectorXd flat(channels[0].size() + channels[1].size());
  flat << channels[0].reshaped(), channels[1].reshaped();
  return flat;
}

void normalize_channel(Eigen::MatrixXd& channel, double reference_rms) {
  if (channel.size() == 0) return;
  const double mean = channel.mean();
  const double sd = std::sqrt((channel.array() - mean).square().mean());
  if (!(sd > 0.0) || sd <= 1e-9 * reference_rms) {
    channel.setZero();
    return;
  }
  channel = (channel.array() - mean) / sd;
}

EchoWindow window_at(const EchoProfile& original, const EchoProfile& differential, Eigen::Index crop_start,
                     Eigen::Index end_frame, const WindowSpec& spec) {
  const Eigen::Index w = spec.window_frames;
  const Eigen::Index bins = spec.range_bins;
  if (w < 1 || bins < 1) throw ParameterError("window: range_bins and window_frames must be positive");
  if (crop_start < 0 || crop_start + bins > original.rows() || crop_start + bins > differential.rows()) {
    throw ParameterError("window: crop rows [" + std::to_string(crop_start) + ", " +
                         std::to_string(crop_start + bins) + ") exceed the profile");
  }
  if (end_frame - w < 0 || end_frame >= original.cols() || end_frame - 1 >= differential.cols()) {
    throw InsufficientDataError("window: end frame " + std::to_string(end_frame) + " lacks a full history");
  }
  EchoWindow window;
  window.end_frame = end_frame;
  window.channels[EchoWindow::kOriginal] = original.values.block(crop_start, end_frame - w + 1, bins, w);
  window.channels[EchoWindow::kDifferential] = differential.values.block(crop_start, end_frame - w, bins, w);
  if (spec.normalize) {
    const double reference = std::sqrt(window.channels[0].squaredNorm() / static_cast<double>(window.channels[0].size()));
    normalize_channel(window.channels[0], reference);
    normalize_channel(window.channels[1], reference);
  }
  return window;
}

std::vector<EchoWindow> crop_and_window(const EchoProfile& original, const EchoProfile& differential,
                                        const WindowSpec& spec) {
  if (spec.stride_frames < 1) throw ParameterError("window: stride_frames must be >= 1");
  std::vector<EchoWindow> windows;
  if (original.cols() == 0) return windows;
  const Eigen::Index crop = spec.crop_start.value_or(direct_path_row(original));
  const Eigen::Index usable = std::min(original.cols() - 1, differential.cols());
  for (Eigen::Index first = 0; first + spec.window_frames <= usable; first += spec.stride_frames) {
    windows.push_back(window_at(original, differential, crop, first + spec.window_frames, spec));
  }
  return windows;
}

Eigen::MatrixXd clip_for_render(const EchoProfile& profile, double threshold) {
  if (!(threshold > 0.0)) throw ParameterError("clip_for_render: threshold must be positive");
  return (profile.values.array().min(threshold).max(-threshold) + threshold) / (2.0 * threshold);
}

double ProcessedRecording::frame_end_time(Eigen::Index frame) const {
  return static_cast<double>(start_index + (frame + 1) * original.rows()) / sample_rate;
}

namespace {

EchoProfile calibrated(EchoProfile profile, const EchoPipelineSpec& spec) {
  if (!spec.calibrate) return profile;
  return median_drift_filter(realign_peaks(profile, spec.realign), spec.median_kernel);
}

double rms(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : std::sqrt(m.squaredNorm() / static_cast<double>(m.size())); }

BandpassSpec band_of(const EchoPipelineSpec& spec) {
  return BandpassSpec{spec.chirp.f_min, spec.chirp.f_max, spec.filter_order, spec.chirp.sample_rate};
}

}  // namespace

ProcessedRecording process_recording(const Eigen::VectorXd& recording, const EchoPipelineSpec& spec) {
  const Eigen::VectorXd tx = generate_chirp(spec.chirp);
  const Eigen::VectorXd filtered = butterworth_bandpass(recording, band_of(spec));
  AlignmentResult alignment = detect_start(filtered, tx);

  ProcessedRecording out;
  out.sample_rate = spec.chirp.sample_rate;
  out.start_index = alignment.start_index;
  const EchoProfile raw = compute_echo_profile(alignment.aligned, tx, spec.chirp.sample_rate);
  const Eigen::Index raw_row = direct_path_row(raw);
  out.misaligned_columns = (peak_rows(raw).array() != raw_row).count();
  if (spec.calibrate) {
    const EchoProfile realigned = realign_peaks(raw, spec.realign);
    out.original = median_drift_filter(realigned, spec.median_kernel);
    out.differential = differential_profile(out.original);
    if (realigned.cols() >= 2) {
      const double after = rms(out.differential.values);
      const double before = rms(differential_profile(realigned).values);
      out.drift_suppression = after > 0.0 ? before / after : 1.0;
    }
  } else {
    out.original = raw;
    out.differential = differential_profile(out.original);
  }
  out.direct_row = direct_path_row(out.original);
  return out;
}

WindowPreprocessor::WindowPreprocessor(EchoPipelineSpec spec, Eigen::Index start_index, Eigen::Index crop_start,
                                       WindowSpec window, Eigen::Index warmup_frames)
    : spec_(std::move(spec)),
      start_index_(start_index),
      crop_start_(crop_start),
      window_(window),
      warmup_frames_(warmup_frames),
      tx_(generate_chirp(spec_.chirp)) {
  if (warmup_frames_ < 0) throw ParameterError("WindowPreprocessor: warmup_frames must be >= 0");
}

std::pair<Eigen::Index, Eigen::Index> WindowPreprocessor::span_for(Eigen::Index end_frame) const {
  const Eigen::Index frame_len = spec_.chirp.frame_len;
  const Eigen::Index first_frame = std::max<Eigen::Index>(0, end_frame - window_.window_frames - warmup_frames_ - 1);
  const Eigen::Index first = start_index_ + first_frame * frame_len;
  const Eigen::Index lookahead = spec_.calibrate ? (spec_.median_kernel - 1) / 2 : 0;
  const Eigen::Index last = start_index_ + (end_frame + 1 + lookahead) * frame_len;
  return {first, last - first};
}

EchoWindow WindowPreprocessor::process(const Eigen::VectorXd& recording, Eigen::Index end_frame) const {
  auto [first, count] = span_for(end_frame);
  const Eigen::Index needed = start_index_ + (end_frame + 1) * spec_.chirp.frame_len - first;
  count = std::min(count, recording.size() - first);
  if (count < needed) {
    throw InsufficientDataError("WindowPreprocessor: recording ends before frame " + std::to_string(end_frame));
  }
  const Eigen::Index frame_len = spec_.chirp.frame_len;
  const Eigen::Index first_frame = (first - start_index_) / frame_len;

  const Eigen::VectorXd filtered = butterworth_bandpass(recording.segment(first, count), band_of(spec_));
  const EchoProfile profile = calibrated(compute_echo_profile(filtered, tx_, spec_.chirp.sample_rate), spec_);
  const EchoProfile diff = differential_profile(profile);
  EchoWindow window = window_at(profile, diff, crop_start_, end_frame - first_frame, window_);
  window.end_frame = end_frame;
  return window;
}

}  // namespace echosonar
