#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tempdens/backbone.hpp"
#include "tempdens/error.hpp"

using namespace tempdens;

namespace {

// Centered 2 x 4 window whose covariance is diag(a, b) up to scale.
Matrix diag_window(double a, double b) {
  Matrix w(2, 4);
  w.row(0) << 1, -1, 1, -1;
  w.row(1) << 1, 1, -1, -1;
  w.row(0) *= std::sqrt(a);
  w.row(1) *= std::sqrt(b);
  return w;
}

double accuracy(const LinearHead& head, const Matrix& x, const std::vector<int>& y) {
  int right = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    Index arg = 0;
    head.logits(x.row(i).transpose()).maxCoeff(&arg);
    right += static_cast<int>(arg) == y[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(right) / static_cast<double>(x.rows());
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("CSP on diag(2,1) vs diag(1,2) aligns with the axes") {
    const std::vector<Matrix> a{diag_window(2, 1), diag_window(2, 1)};
    const std::vector<Matrix> b{diag_window(1, 2), diag_window(1, 2)};
    const CspFilters csp = fit_csp(a, b, 1);
    REQUIRE(csp.filters.rows() == 2);
    CHECK(csp.eigenvalues(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
    CHECK(csp.eigenvalues(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
    // Each filter has (numerically) a single nonzero coordinate.
    CHECK(std::abs(csp.filters(0, 1)) < 1e-9 * std::abs(csp.filters(0, 0)));
    CHECK(std::abs(csp.filters(1, 0)) < 1e-9 * std::abs(csp.filters(1, 1)));
  }

  TEST_CASE("identical class distributions give eigenvalues near 0.5") {
    std::mt19937_64 rng(5);
    std::vector<Matrix> a, b;
    for (int i = 0; i < 20; ++i) {
      const Matrix w = test::gaussian(4, 200, rng);
      a.push_back(w);
      b.push_back(w);
    }
    const CspFilters csp = fit_csp(a, b, 2);
    for (Index i = 0; i < csp.eigenvalues.size(); ++i) CHECK(csp.eigenvalues(i) == doctest::Approx(0.5).epsilon(1e-9));
  }

  TEST_CASE("CSP needs two windows per class") {
    const std::vector<Matrix> one{diag_window(2, 1)};
    const std::vector<Matrix> two{diag_window(1, 2), diag_window(1, 2)};
    CHECK_THROWS_AS(fit_csp(one, two, 1), Error);
  }

  TEST_CASE("log-variance features") {
    std::mt19937_64 rng(11);
    const Matrix noise = test::gaussian(3, 20000, rng);
    const Matrix identity = Matrix::Identity(3, 3);
    const Vector f = extract_features(noise, identity);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(f(i)) < 0.1);
    const Vector f2 = extract_features(2.0 * noise, identity);
    for (Index i = 0; i < 3; ++i) CHECK(f2(i) - f(i) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK_THROWS_AS(extract_features(Matrix::Zero(3, 100), identity), Error);
    CHECK_THROWS_AS(extract_features(Matrix::Zero(2, 100), identity), Error);
  }

  TEST_CASE("linear head logits") {
    LinearHead head{Matrix::Zero(2, 3), Vector::Zero(2)};
    CHECK(head.logits(Vector::Zero(3)).isZero());
    head.weights << 1, 2, 3, -1, 0, 4;
    head.bias << 0.5, -0.5;
    Vector f(3);
    f << 1, -1, 2;
    const Vector z = head.logits(f);
    CHECK(z(0) == 1 - 2 + 6 + 0.5);
    CHECK(z(1) == -1 + 0 + 8 - 0.5);
  }

  TEST_CASE("head gradient matches central differences") {
    std::mt19937_64 rng(21);
    const Matrix x = test::gaussian(12, 4, rng);
    std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
    LinearHead head{test::gaussian(3, 4, rng), test::gaussian(3, rng)};
    const double l2 = 0.3;
    const HeadObjective obj = head_objective(head, x, y, l2);
    const double h = 1e-6;
    for (Index i = 0; i < head.weights.size(); ++i) {
      LinearHead up = head, down = head;
      up.weights.data()[i] += h;
      down.weights.data()[i] -= h;
      const double fd = (head_objective(up, x, y, l2).loss - head_objective(down, x, y, l2).loss) / (2 * h);
      CHECK(obj.grad_weights.data()[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("separable blobs train to full accuracy with non-increasing loss") {
    std::mt19937_64 rng(4);
    Matrix x = test::gaussian(200, 2, rng, 0.5);
    std::vector<int> y(200);
    for (Index i = 0; i < 200; ++i) {
      y[static_cast<std::size_t>(i)] = i % 2;
      x(i, 0) += i % 2 ? 2.0 : -2.0;
    }
    const HeadTrainResult r = train_head(x, y, 2, {});
    CHECK(accuracy(r.head, x, y) == 1.0);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) CHECK(r.loss_history[i] <= r.loss_history[i - 1]);
  }

  TEST_CASE("lr = 0 leaves the head unchanged; one class is an error") {
    std::mt19937_64 rng(8);
    const Matrix x = test::gaussian(10, 3, rng);
    std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    HeadTrainOptions options;
    options.lr = 0.0;
    const LinearHead start{test::gaussian(2, 3, rng), test::gaussian(2, rng)};
    const HeadTrainResult r = train_head(x, y, 2, options, start);
    CHECK(r.head.weights == start.weights);
    CHECK(r.head.bias == start.bias);
    const std::vector<int> same(10, 0);
    CHECK_THROWS_AS(train_head(x, same, 2, {}), Error);
  }

  TEST_CASE("trained model: inference, channel check and checkpoint round trip") {
    std::mt19937_64 rng(31);
    std::vector<Matrix> windows;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
      Matrix w = test::gaussian(4, 250, rng);
      w.row(i % 2) *= 3.0;
      windows.push_back(w);
      labels.push_back(i % 2);
    }
    NativeBackboneModel model;
    model.classifier = train_csp_linear_model(windows, labels, 2, {1, {}});
    model.gate = model.classifier;
    model.class_names = {"a", "b"};
    WindowFrame frame;
    frame.samples = windows[0];
    const FeatureFrame out = infer(frame, model.classifier);
    CHECK(out.features.size() == 2);
    CHECK(out.logits.size() == 2);
    frame.samples = test::gaussian(5, 250, rng);
    CHECK_THROWS_AS(infer(frame, model.classifier), Error);

    const NativeBackboneModel back = model_from_json(model_to_json(model));
    const NativeBackboneModel again = model_from_json(model_to_json(back));
    CHECK(again.classifier.filters == back.classifier.filters);
    CHECK(again.classifier.head.weights == back.classifier.head.weights);
    CHECK(back.class_names == model.class_names);
  }

  TEST_CASE("untrained model refuses inference") {
    CspLinearModel m;
    WindowFrame frame;
    frame.samples = Matrix::Ones(2, 10);
    CHECK_THROWS_AS(infer(frame, m), Error);
  }
}
