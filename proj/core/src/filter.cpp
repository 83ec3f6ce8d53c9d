#include "tempdens/filter.hpp"

#include <cmath>
#include <numbers>

#include "tempdens/error.hpp"

namespace tempdens {

using Complex = std::complex<double>;

std::complex<double> SosFilter::response(double frequency_hz, double rate) const {
  const double w = 2.0 * std::numbers::pi * frequency_hz / rate;
  const Complex z1 = std::polar(1.0, -w);
  const Complex z2 = z1 * z1;
  Complex h{1.0, 0.0};
  for (const auto& s : sections) {
    h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[0] * z1 + s.a[1] * z2);
  }
  return h;
}

SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz, double rate) {
  require(order >= 1, ErrorCode::kInvalidArgument, "filter order must be positive");
  require(rate > 0.0 && 0.0 < low_hz && low_hz < high_hz && high_hz < rate / 2.0,
          ErrorCode::kInvalidArgument,
          "band edges must satisfy 0 < low < high < rate/2 (got low=" + std::to_string(low_hz) +
              ", high=" + std::to_string(high_hz) + ", rate=" + std::to_string(rate) + ")");

  const double fs2 = 2.0 * rate;
  const double warped_low = fs2 * std::tan(std::numbers::pi * low_hz / rate);
  const double warped_high = fs2 * std::tan(std::numbers::pi * high_hz / rate);
  const double bandwidth = warped_high - warped_low;
  const double center_sq = warped_low * warped_high;

  // Analog prototype poles on the left half of the unit circle, then the
  // low-pass to band-pass mapping (each prototype pole splits in two).
  std::vector<Complex> analog_poles;
  for (int m = -order + 1; m < order; m += 2) {
    const Complex p = -std::exp(Complex(0.0, std::numbers::pi * m / (2.0 * order)));
    const Complex scaled = p * bandwidth / 2.0;
    const Complex root = std::sqrt(scaled * scaled - center_sq);
    analog_poles.push_back(scaled + root);
    analog_poles.push_back(scaled - root);
  }

  // Bilinear transform. The band-pass has `order` zeros at s=0 (-> z=1) and
  // `order` at infinity (-> z=-1), so every section gets numerator 1 - z^-2.
  Complex denominator{1.0, 0.0};
  std::vector<Complex> upper;
  for (const auto& p : analog_poles) {
    denominator *= fs2 - p;
    const Complex pz = (fs2 + p) / (fs2 - p);
    if (pz.imag() > 0.0) upper.push_back(pz);
  }
  require(static_cast<int>(upper.size()) == order, ErrorCode::kInvalidArgument,
          "band too narrow for a conjugate-pair section layout");
  const double gain = (std::pow(bandwidth * fs2, order) / denominator).real();

  SosFilter filter;
  for (const auto& pz : upper) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {-2.0 * pz.real(), std::norm(pz)};
    filter.sections.push_back(s);
  }
  for (auto& coeff : filter.sections.front().b) coeff *= gain;
  return filter;
}

Matrix apply_sos(const SosFilter& filter, const Matrix& signal) {
  Matrix out(signal.rows(), signal.cols());
  for (Index ch = 0; ch < signal.rows(); ++ch) {
    std::vector<std::array<double, 2>> state(filter.sections.size(), {0.0, 0.0});
    for (Index n = 0; n < signal.cols(); ++n) {
      double x = signal(ch, n);
      for (std::size_t s = 0; s < filter.sections.size(); ++s) {
        const auto& sec = filter.sections[s];
        auto& z = state[s];
        const double y = sec.b[0] * x + z[0];
        z[0] = sec.b[1] * x - sec.a[0] * y + z[1];
        z[1] = sec.b[2] * x - sec.a[1] * y;
        x = y;
      }
      out(ch, n) = x;
    }
  }
  return out;
}

Matrix bandpass(const Matrix& signal, double low_hz, double high_hz, double rate) {
  return apply_sos(design_butterworth_bandpass(4, low_hz, high_hz, rate), signal);
}

}  // namespace tempdens
