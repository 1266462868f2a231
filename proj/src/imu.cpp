#include "echosonar/imu.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "echosonar/dsp.hpp"
#include "echosonar/error.hpp"

namespace echosonar {

ImuRecording read_imu_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("imu file " + path + ": cannot open");
  ImuRecording rec;
  std::vector<std::array<double, 6>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string first;
    fields >> first;
    std::int64_t ts = 0;
    try {
      std::size_t used = 0;
      ts = std::stoll(first, &used);
      if (used != first.size()) throw std::invalid_argument(first);
    } catch (const std::exception&) {
      if (rows.empty() && rec.timestamp_ns.empty()) continue;  // header
      throw IngestionError("imu file " + path + ":" + std::to_string(line_no) + ": bad timestamp");
    }
    std::array<double, 6> v{};
    for (double& x : v) {
      if (!(fields >> x)) throw IngestionError("imu file " + path + ":" + std::to_string(line_no) + ": expected 6 values");
    }
    if (!rec.timestamp_ns.empty() && ts <= rec.timestamp_ns.back()) {
      throw IngestionError("imu file " + path + ":" + std::to_string(line_no) + ": timestamps must increase");
    }
    rec.timestamp_ns.push_back(ts);
    rows.push_back(v);
  }
  rec.samples.resize(static_cast<Eigen::Index>(rows.size()), 6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < 6; ++k) rec.samples(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  }
  return rec;
}

void write_imu_file(const std::string& path, const ImuRecording& recording) {
  std::ofstream out(path);
  if (!out) throw IngestionError("imu file " + path + ": cannot write");
  out << "timestamp_ns,ax,ay,az,gx,gy,gz\n" << std::setprecision(17);
  for (std::size_t i = 0; i < recording.timestamp_ns.size(); ++i) {
    out << recording.timestamp_ns[i];
    for (int k = 0; k < 6; ++k) out << ',' << recording.samples(static_cast<Eigen::Index>(i), k);
    out << '\n';
  }
}

Eigen::MatrixXd resample_imu(const ImuRecording& recording, double sample_rate) {
  const auto& ts = recording.timestamp_ns;
  if (ts.size() < 2) throw InsufficientDataError("resample_imu: need at least two samples");
  if (!(sample_rate > 0.0)) throw ParameterError("resample_imu: sample_rate must be positive");
  const double span = static_cast<double>(ts.back() - ts.front()) * 1e-9;
  const auto n = static_cast<Eigen::Index>(std::floor(span * sample_rate + 1e-9)) + 1;
  Eigen::MatrixXd out(n, 6);
  std::size_t j = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(ts.front()) + static_cast<double>(i) / sample_rate * 1e9;
    while (j + 2 < ts.size() && static_cast<double>(ts[j + 1]) < t) ++j;
    const double t0 = static_cast<double>(ts[j]), t1 = static_cast<double>(ts[j + 1]);
    const double alpha = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    out.row(i) = (1.0 - alpha) * recording.samples.row(static_cast<Eigen::Index>(j)) +
                 alpha * recording.samples.row(static_cast<Eigen::Index>(j + 1));
  }
  return out;
}

Eigen::MatrixXd expand_bands(const Eigen::MatrixXd& raw6, double sample_rate, const ImuBands& bands) {
  if (raw6.cols() != 6) throw ParameterError("expand_bands: expected 6 channels");
  if (!(sample_rate > 0.0)) throw ParameterError("expand_bands: sample_rate must be positive");
  const double ceiling = 0.45 * sample_rate;
  auto require = [&](double lo, const std::string& name) {
    if (!(lo < ceiling)) {
      throw DesignError("expand_bands: band " + name + " cannot be realized at " + std::to_string(sample_rate) + " Hz");
    }
  };
  require(bands.low_band_hi, "0.22-8 Hz");
  require(bands.mid_band_lo, "8-32 Hz");

  const SosFilter low =
      design_butterworth_bandpass({bands.low_band_lo, bands.low_band_hi, bands.order, sample_rate});
  double mid_hi = bands.mid_band_hi;
  if (!(mid_hi < ceiling)) {
    std::clog << "warning: expand_bands: 8-32 Hz band upper edge clamped to " << ceiling << " Hz at " << sample_rate
              << " Hz sampling\n";
    mid_hi = ceiling;
  }
  const SosFilter mid = design_butterworth_bandpass({bands.mid_band_lo, mid_hi, bands.order, sample_rate});
  const bool has_high = bands.high_cut < sample_rate / 2.0;
  const SosFilter high = has_high ? design_butterworth_highpass(bands.high_cut, bands.order, sample_rate) : SosFilter{};

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(raw6.rows(), 24);
  out.leftCols<6>() = raw6;
  for (int c = 0; c < 6; ++c) {
    out.col(6 + c) = low.apply(raw6.col(c));
    out.col(12 + c) = mid.apply(raw6.col(c));
    if (has_high) out.col(18 + c) = high.apply(raw6.col(c));
  }
  return out;
}

Eigen::Index imu_window_samples(double sample_rate, double seconds) {
  return static_cast<Eigen::Index>(std::llround(seconds * sample_rate));
}

void normalize_columns(Eigen::MatrixXd& values) {
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    auto col = values.col(c);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      col.setZero();
    } else {
      col = (col.array() - mean) / sd;
    }
  }
}

std::vector<ImuWindow> window_imu(const Eigen::MatrixXd& expanded, double sample_rate, double stride_seconds,
                                  double window_seconds) {
  if (!(stride_seconds > 0.0)) throw ParameterError("window_imu: stride must be positive");
  const Eigen::Index width = imu_window_samples(sample_rate, window_seconds);
  std::vector<ImuWindow> windows;
  if (width < 1) return windows;
  for (Eigen::Index i = 0;; ++i) {
    const auto start = static_cast<Eigen::Index>(std::floor(static_cast<double>(i) * stride_seconds * sample_rate + 1e-9));
    if (start + width > expanded.rows()) break;
    ImuWindow w;
    w.values = expanded.middleRows(start, width);
    normalize_columns(w.values);
    w.start_time = static_cast<double>(start) / sample_rate;
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace echosonar
