#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "echosonar/chirp.hpp"

namespace echosonar {

enum class ProfileKind { original = 0, differential = 1 };

/// Range-bin x frame correlation matrix. Row r is r range bins past the start
/// of the frame's correlation lag window; one bin is c / (2 fs) of distance.
struct EchoProfile {
  Eigen::MatrixXd values;       // (frame_len, n_frames), signed correlation values
  double frame_duration = 0.0;  // seconds per column
  ProfileKind kind = ProfileKind::original;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct AlignmentResult {
  Eigen::Index start_index = 0;  // in [0, frame_len)
  Eigen::VectorXd aligned;       // rx[start_index:]
};

/// Frame-center adjustment applied to the sync correlation peak:
/// (peak + L - floor(L/2)) mod L.
Eigen::Index start_from_sync_peak(Eigen::Index peak, Eigen::Index frame_len);

/// Locates the direct-path arrival as the strongest |rx * tx| and trims the
/// recording so that compute_echo_profile places that arrival at row L/2 of
/// every frame. Requires len(rx) >= 2 L; throws NoSignalError on an all-zero
/// recording.
AlignmentResult detect_start(const Eigen::VectorXd& rx, const Eigen::VectorXd& tx);

/// y = aligned * tx, cut into floor(len(y) / L) frames of L lags, one column each.
EchoProfile compute_echo_profile(const Eigen::VectorXd& aligned, const Eigen::VectorXd& tx, double sample_rate);

/// Column f = |P[:, f+1]| - |P[:, f]|; one fewer column than the source.
EchoProfile differential_profile(const EchoProfile& original);

/// Row of the largest |value| in each column; ties go to the smallest row.
Eigen::VectorX<Eigen::Index> peak_rows(const EchoProfile& profile);

/// Median (lower median for even counts) of peak_rows over all columns.
Eigen::Index direct_path_row(const EchoProfile& profile);

struct RealignSpec {
  Eigen::Index window_frames = 50;       // sliding window length (columns); windows overlap by half
  Eigen::Index deviation_threshold = 0;  // columns whose peak deviates by more than this are shifted
  Eigen::Index max_shift = 10;           // columns needing a larger shift are left untouched
  Eigen::Index drift_threshold = 2;      // window median must move this far to move the reference row
};

/// Sliding-window direct-path peak correction. The reference row starts at
/// the profile-wide median peak row; each half-overlapping window re-estimates
/// it as the median of its columns' peak rows and adopts the estimate when it
/// differs by more than drift_threshold. Columns whose peak row deviates from
/// the reference are circularly shifted to it. Relative offsets inside a
/// column are preserved.
EchoProfile realign_peaks(const EchoProfile& profile, const RealignSpec& spec = {});

/// Per-row running median over kernel_frames consecutive columns, shrinking at
/// the edges. Odd kernels are centered; an even kernel k covers
/// [f - k/2, f + k/2 - 1] and takes the mean of the two middle values.
EchoProfile median_drift_filter(const EchoProfile& profile, Eigen::Index kernel_frames = 4);

/// Two-channel model input: original and differential, range_bins x window_frames each.
struct EchoWindow {
  static constexpr int kOriginal = 0;
  static constexpr int kDifferential = 1;

  std::array<Eigen::MatrixXd, 2> channels;
  Eigen::Index end_frame = 0;  // last original column covered

  Eigen::Index rows() const { return channels[0].rows(); }
  Eigen::Index cols() const { return channels[0].cols(); }
  /// Both channels, original first, column-major, as one vector.
  Eigen::VectorXd flattened() const;
};

struct WindowSpec {
  Eigen::Index range_bins = 60;
  Eigen::Index window_frames = 96;
  Eigen::Index stride_frames = 1;
  std::optional<Eigen::Index> crop_start;  // first kept row; defaults to direct_path_row(original)
  bool normalize = true;
};

/// Per-channel z-score. A channel whose standard deviation is at most
/// 1e-9 x `reference_rms` (or exactly zero) becomes all zeros.
void normalize_channel(Eigen::MatrixXd& channel, double reference_rms);

/// Window whose last original column is `end_frame`: original columns
/// [end_frame - W + 1, end_frame] paired with differential columns
/// [end_frame - W, end_frame - 1], rows [crop_start, crop_start + range_bins).
EchoWindow window_at(const EchoProfile& original, const EchoProfile& differential, Eigen::Index crop_start,
                     Eigen::Index end_frame, const WindowSpec& spec);

/// All windows advancing by stride_frames. The first original column has no
/// differential partner and is never covered. Too few frames gives an empty result.
std::vector<EchoWindow> crop_and_window(const EchoProfile& original, const EchoProfile& differential,
                                        const WindowSpec& spec = {});

/// Clamp to [-threshold, threshold] and map affinely onto [0, 1]. Display only.
Eigen::MatrixXd clip_for_render(const EchoProfile& profile, double threshold = 1e10);

struct EchoPipelineSpec {
  ChirpSpec chirp;
  int filter_order = 5;
  bool calibrate = true;
  RealignSpec realign;
  Eigen::Index median_kernel = 4;
};

struct ProcessedRecording {
  Eigen::Index start_index = 0;
  EchoProfile original;      // calibrated when the spec asks for it
  EchoProfile differential;
  Eigen::Index direct_row = 0;
  double sample_rate = 48000.0;
  Eigen::Index misaligned_columns = 0;  // columns whose raw peak row differs from the raw direct-path row
  double drift_suppression = 1.0;       // differential RMS before / after the median filter

  /// Recording time (s) at which original column `frame` is complete.
  double frame_end_time(Eigen::Index frame) const;
};

/// bandpass -> detect_start -> compute_echo_profile -> [realign, median] -> differential.
ProcessedRecording process_recording(const Eigen::VectorXd& recording, const EchoPipelineSpec& spec = {});

/// Recomputes the window ending at original column `end_frame` from raw audio
/// alone, using only the samples that window needs plus a short filter
/// warm-up. `start_index` comes from an earlier detect_start on the same
/// recording; `crop_start` is the direct-path row.
class WindowPreprocessor {
 public:
  WindowPreprocessor(EchoPipelineSpec spec, Eigen::Index start_index, Eigen::Index crop_start,
                     WindowSpec window = {}, Eigen::Index warmup_frames = 4);

  /// Samples of the recording the window needs: [first, first + count). The
  /// span reaches (median_kernel - 1) / 2 frames past end_frame because the
  /// drift filter looks ahead; near the end of a recording it is truncated.
  std::pair<Eigen::Index, Eigen::Index> span_for(Eigen::Index end_frame) const;

  EchoWindow process(const Eigen::VectorXd& recording, Eigen::Index end_frame) const;

 private:
  EchoPipelineSpec spec_;
  Eigen::Index start_index_;
  Eigen::Index crop_start_;
  WindowSpec window_;
  Eigen::Index warmup_frames_;
  Eigen::VectorXd tx_;
};

}  // namespace echosonar
