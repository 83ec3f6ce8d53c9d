#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tempdens/error.hpp"
#include "tempdens/filter.hpp"

using namespace tempdens;

TEST_SUITE("filter") {
  // |H(f)| of scipy.signal.butter(4, [8, 30], btype="band", fs=250, output="sos").
  TEST_CASE("magnitude response matches the reference design") {
    const SosFilter f = design_butterworth_bandpass(4, 8.0, 30.0, 250.0);
    CHECK(f.sections.size() == 4);
    const std::pair<double, double> reference[] = {
        {0.5, 4.661800806247723e-06}, {4.0, 0.024787479309738118}, {8.0, 0.7071067811865452},
        {10.0, 0.9856502757529916},   {15.0, 0.9999999998752955},   {20.0, 0.9999041860467133},
        {30.0, 0.7071067811865477},   {40.0, 0.1447300987933878},   {60.0, 0.011730816704444404},
        {100.0, 8.591476995425151e-05}};
    for (const auto& [hz, mag] : reference) {
      INFO("f = " << hz);
      CHECK(std::abs(f.response(hz, 250.0)) == doctest::Approx(mag).epsilon(1e-9));
    }
  }

  TEST_CASE("constant input decays toward zero") {
    const Matrix dc = Matrix::Constant(2, 2500, 5.0);
    const Matrix y = bandpass(dc, 8.0, 30.0, 250.0);
    CHECK(y.leftCols(100).cwiseAbs().maxCoeff() > 0.1);  // step transient
    CHECK(y.rightCols(250).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("15 Hz sinusoid passes within 1 dB") {
    const Index n = 5000;
    Matrix x(1, n);
    for (Index i = 0; i < n; ++i) x(0, i) = std::sin(2.0 * std::numbers::pi * 15.0 * static_cast<double>(i) / 250.0);
    const Matrix y = bandpass(x, 8.0, 30.0, 250.0);
    const double peak = y.rightCols(1000).cwiseAbs().maxCoeff();
    CHECK(std::abs(20.0 * std::log10(peak)) < 1.0);
  }

  TEST_CASE("filtering is causal") {
    Matrix x = Matrix::Zero(1, 400);
    x(0, 200) = 1.0;
    const Matrix y = bandpass(x, 8.0, 30.0, 250.0);
    CHECK(y.leftCols(200).cwiseAbs().maxCoeff() == 0.0);
    CHECK(y(0, 200) != 0.0);
  }

  TEST_CASE("band edges are checked") {
    CHECK_THROWS_AS(design_butterworth_bandpass(4, 30.0, 8.0, 250.0), Error);
    CHECK_THROWS_AS(design_butterworth_bandpass(4, 8.0, 130.0, 250.0), Error);
  }
}
