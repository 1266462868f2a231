#pragma once

#include <algorithm>
#include <complex>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "echosonar/error.hpp"
#include "echosonar/parallel.hpp"

namespace echosonar {

template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct BandpassSpec {
  double low_cut = 18000.0;      // Hz
  double high_cut = 21000.0;     // Hz
  int order = 5;                 // prototype order; the bandpass has 2*order poles
  double sample_rate = 48000.0;  // Hz

  void validate() const;
};

/// Second-order section, H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Cascade of biquads run in transposed direct form II from a zero state.
class SosFilter {
 public:
  SosFilter() = default;
  explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

  const std::vector<Biquad>& sections() const { return sections_; }

  /// Complex frequency response at `frequency` Hz.
  std::complex<double> response(double frequency, double sample_rate) const;

  template <typename Derived>
  Signal<typename Derived::Scalar> apply(const Eigen::MatrixBase<Derived>& input) const {
    using Scalar = typename Derived::Scalar;
    Signal<Scalar> out = input;
    for (const Biquad& s : sections_) {
      const Scalar b0 = static_cast<Scalar>(s.b0), b1 = static_cast<Scalar>(s.b1), b2 = static_cast<Scalar>(s.b2);
      const Scalar a1 = static_cast<Scalar>(s.a1), a2 = static_cast<Scalar>(s.a2);
      Scalar z1 = 0, z2 = 0;
      for (Eigen::Index n = 0; n < out.size(); ++n) {
        const Scalar x = out[n];
        const Scalar y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        out[n] = y;
      }
    }
    return out;
  }

 private:
  std::vector<Biquad> sections_;
};

/// Digital Butterworth bandpass via bilinear transform with prewarped band edges.
/// Unity gain at the (digital image of the) geometric band center.
SosFilter design_butterworth_bandpass(const BandpassSpec& spec);
/// Unity gain at Nyquist.
SosFilter design_butterworth_highpass(double cutoff, int order, double sample_rate);
/// Unity gain at DC.
SosFilter design_butterworth_lowpass(double cutoff, int order, double sample_rate);

/// Causal Butterworth bandpass of `signal`; output has the input's length.
template <typename Derived>
Signal<typename Derived::Scalar> butterworth_bandpass(const Eigen::MatrixBase<Derived>& signal,
                                                      const BandpassSpec& spec) {
  if (signal.size() <= 3 * spec.order) {
    throw ParameterError("butterworth_bandpass: signal must be longer than 3*order samples");
  }
  return design_butterworth_bandpass(spec).apply(signal);
}

namespace detail {

inline Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Full cross-correlation: y[k] = sum_n rx[k - (L-1) + n] * tx[n], k in [0, N + L - 1),
/// with rx taken as zero outside its support. The template is slid across the
/// signal; an exact copy of tx starting at rx offset j peaks at k = j + L - 1.
/// Computed by FFT overlap-save; blocks are independent, so results do not
/// depend on the worker count.
template <typename DerivedRx, typename DerivedTx>
Signal<typename DerivedRx::Scalar> cross_correlate(const Eigen::MatrixBase<DerivedRx>& rx,
                                                   const Eigen::MatrixBase<DerivedTx>& tx) {
  using Scalar = typename DerivedRx::Scalar;
  using Complex = std::complex<Scalar>;
  const Eigen::Index n = rx.size();
  const Eigen::Index taps = tx.size();
  if (n == 0 || taps == 0) throw ParameterError("cross_correlate: inputs must be nonempty");
  if (taps > n) throw ParameterError("cross_correlate: template longer than signal");

  const Eigen::Index out_len = n + taps - 1;
  const Eigen::Index nfft = std::min(detail::next_pow2(out_len), std::max<Eigen::Index>(1024, detail::next_pow2(8 * taps)));
  const Eigen::Index step = nfft - taps + 1;
  const Eigen::Index blocks = (out_len + step - 1) / step;

  // Spectrum of the reversed template.
  std::vector<Complex> kernel_spectrum;
  {
    Eigen::FFT<Scalar> fft;
    fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
    std::vector<Scalar> kernel(static_cast<std::size_t>(nfft), Scalar(0));
    for (Eigen::Index i = 0; i < taps; ++i) kernel[static_cast<std::size_t>(i)] = static_cast<Scalar>(tx[taps - 1 - i]);
    fft.fwd(kernel_spectrum, kernel);
  }

  Signal<Scalar> out(out_len);
  parallel_for(blocks, [&](Eigen::Index first, Eigen::Index last) {
    Eigen::FFT<Scalar> fft;
    fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
    std::vector<Scalar> segment(static_cast<std::size_t>(nfft));
    std::vector<Complex> spectrum;
    std::vector<Scalar> result;
    for (Eigen::Index b = first; b < last; ++b) {
      // Segment of rx padded with L-1 leading zeros, starting at b*step.
      const Eigen::Index origin = b * step - (taps - 1);
      for (Eigen::Index i = 0; i < nfft; ++i) {
        const Eigen::Index src = origin + i;
        segment[static_cast<std::size_t>(i)] = (src >= 0 && src < n) ? static_cast<Scalar>(rx[src]) : Scalar(0);
      }
      fft.fwd(spectrum, segment);
      for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= kernel_spectrum[i];
      fft.inv(result, spectrum, nfft);
      const Eigen::Index count = std::min(step, out_len - b * step);
      for (Eigen::Index j = 0; j < count; ++j) {
        out[b * step + j] = result[static_cast<std::size_t>(j + taps - 1)];
      }
    }
  });
  return out;
}

}  // namespace echosonar
