#include "echosonar/dsp.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace echosonar {

namespace {

using Complex = std::complex<double>;

// Left-half-plane poles of the unit-cutoff analog Butterworth lowpass.
std::vector<Complex> prototype_poles(int order) {
  std::vector<Complex> poles;
  poles.reserve(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

double prewarp(double frequency, double sample_rate) {
  return 2.0 * sample_rate * std::tan(std::numbers::pi * frequency / sample_rate);
}

Complex bilinear(Complex s, double sample_rate) {
  const double k = 2.0 * sample_rate;
  return (k + s) / (k - s);
}

// Groups digital poles into conjugate pairs (or pairs of real poles) and
// assigns zeros in order, two per section.
std::vector<Biquad> to_sections(std::vector<Complex> poles, const std::vector<Complex>& zeros) {
  constexpr double kImagTol = 1e-10;
  std::vector<Complex> complex_poles;
  std::vector<double> real_poles;
  for (const Complex& p : poles) {
    if (std::abs(p) >= 1.0 - 1e-14) throw DesignError("filter design produced an unstable pole");
    if (p.imag() > kImagTol) complex_poles.push_back(p);
    else if (std::abs(p.imag()) <= kImagTol) real_poles.push_back(p.real());
  }
  std::sort(real_poles.begin(), real_poles.end());

  std::vector<std::pair<Complex, Complex>> pole_pairs;
  for (const Complex& p : complex_poles) pole_pairs.emplace_back(p, std::conj(p));
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) pole_pairs.emplace_back(real_poles[i], real_poles[i + 1]);
  const bool odd = real_poles.size() % 2 == 1;

  std::vector<Biquad> sections;
  std::size_t zi = 0;
  auto next_zero = [&]() -> double {
    if (zi >= zeros.size()) throw DesignError("filter design: zero/pole count mismatch");
    return zeros[zi++].real();
  };
  for (const auto& [p1, p2] : pole_pairs) {
    Biquad s;
    const double z1 = next_zero(), z2 = next_zero();
    s.b0 = 1.0;
    s.b1 = -(z1 + z2);
    s.b2 = z1 * z2;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    sections.push_back(s);
  }
  if (odd) {
    Biquad s;
    const double z1 = next_zero();
    s.b0 = 1.0;
    s.b1 = -z1;
    s.a1 = -real_poles.back();
    sections.push_back(s);
  }
  return sections;
}

SosFilter normalized(std::vector<Biquad> sections, double reference_frequency, double sample_rate) {
  SosFilter raw(sections);
  const double gain = std::abs(raw.response(reference_frequency, sample_rate));
  if (!(gain > 0.0) || !std::isfinite(gain)) throw DesignError("filter design: degenerate reference gain");
  sections.front().b0 /= gain;
  sections.front().b1 /= gain;
  sections.front().b2 /= gain;
  return SosFilter(std::move(sections));
}

void check_cutoff(double cutoff, double sample_rate, const char* what) {
  if (!(cutoff > 0.0) || !(cutoff < sample_rate / 2.0)) {
    throw DesignError(std::string(what) + ": cutoff " + std::to_string(cutoff) + " Hz must lie in (0, " +
                      std::to_string(sample_rate / 2.0) + ") Hz");
  }
}

}  // namespace

void BandpassSpec::validate() const {
  if (order < 1) throw ParameterError("bandpass: order must be >= 1");
  if (!(sample_rate > 0.0)) throw ParameterError("bandpass: sample_rate must be positive");
  if (!(low_cut > 0.0) || !(high_cut > low_cut)) throw ParameterError("bandpass: require 0 < low_cut < high_cut");
  if (!(high_cut < sample_rate / 2.0)) {
    throw DesignError("bandpass: high_cut " + std::to_string(high_cut) + " Hz is not below Nyquist");
  }
}

std::complex<double> SosFilter::response(double frequency, double sample_rate) const {
  const Complex z1 = std::polar(1.0, -2.0 * std::numbers::pi * frequency / sample_rate);  // z^-1
  Complex h = 1.0;
  for (const Biquad& s : sections_) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z1 * z1) / (1.0 + s.a1 * z1 + s.a2 * z1 * z1);
  }
  return h;
}

SosFilter design_butterworth_bandpass(const BandpassSpec& spec) {
  spec.validate();
  const double fs = spec.sample_rate;
  const double w1 = prewarp(spec.low_cut, fs);
  const double w2 = prewarp(spec.high_cut, fs);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  std::vector<Complex> poles;
  for (const Complex& p : prototype_poles(spec.order)) {
    const Complex half = p * bw / 2.0;
    const Complex root = std::sqrt(half * half - w0 * w0);
    poles.push_back(bilinear(half + root, fs));
    poles.push_back(bilinear(half - root, fs));
  }
  // order zeros at s = 0 (z = 1) and order at infinity (z = -1), interleaved so
  // every section gets 1 - z^-2.
  std::vector<Complex> zeros;
  for (int i = 0; i < spec.order; ++i) {
    zeros.emplace_back(1.0);
    zeros.emplace_back(-1.0);
  }
  const double center = fs / std::numbers::pi * std::atan(w0 / (2.0 * fs));
  return normalized(to_sections(poles, zeros), center, fs);
}

SosFilter design_butterworth_highpass(double cutoff, int order, double sample_rate) {
  if (order < 1) throw ParameterError("highpass: order must be >= 1");
  check_cutoff(cutoff, sample_rate, "highpass");
  const double wc = prewarp(cutoff, sample_rate);
  std::vector<Complex> poles;
  for (const Complex& p : prototype_poles(order)) poles.push_back(bilinear(wc / p, sample_rate));
  const std::vector<Complex> zeros(static_cast<std::size_t>(order), Complex(1.0));
  return normalized(to_sections(poles, zeros), sample_rate / 2.0, sample_rate);
}

SosFilter design_butterworth_lowpass(double cutoff, int order, double sample_rate) {
  if (order < 1) throw ParameterError("lowpass: order must be >= 1");
  check_cutoff(cutoff, sample_rate, "lowpass");
  const double wc = prewarp(cutoff, sample_rate);
  std::vector<Complex> poles;
  for (const Complex& p : prototype_poles(order)) poles.push_back(bilinear(wc * p, sample_rate));
  const std::vector<Complex> zeros(static_cast<std::size_t>(order), Complex(-1.0));
  return normalized(to_sections(poles, zeros), 0.0, sample_rate);
}

}  // namespace echosonar
