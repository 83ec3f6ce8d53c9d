#pragma once

#include <array>
#include <complex>
#include <vector>

#include "tempdens/types.hpp"

namespace tempdens {

/// One biquad: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};
};

struct SosFilter {
  std::vector<Biquad> sections;

  std::complex<double> response(double frequency_hz, double rate) const;
};

/// Digital Butterworth band-pass of prototype order `order` (2*order poles),
/// via bilinear transform with pre-warped band edges.
SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz, double rate);

/// Causal (forward-only) per-channel filtering with zero initial state.
Matrix apply_sos(const SosFilter& filter, const Matrix& signal);

/// 4th-order Butterworth band-pass applied causally to every channel.
Matrix bandpass(const Matrix& signal, double low_hz, double high_hz, double rate);

}  // namespace tempdens
