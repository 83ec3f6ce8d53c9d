#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"
#include "tempdens/error.hpp"
#include "tempdens/scoring.hpp"

using namespace tempdens;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (const double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_SUITE("scoring") {
  TEST_CASE("energy examples") {
    CHECK(score_energy(vec({0, 0}), 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(score_energy(vec({1, 0}), 1.0) == doctest::Approx(-1.313261687518222834).epsilon(1e-15));
    const double big = score_energy(vec({1000, 0}), 1.0);
    CHECK(std::isfinite(big));
    CHECK(big == doctest::Approx(-1000.0).epsilon(1e-15));
    CHECK_THROWS_AS(score_energy(vec({1, 0}), 0.0), Error);
  }

  TEST_CASE("energy shift identity") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> shift(-50, 50);
    for (int i = 0; i < 200; ++i) {
      const Vector z = test::gaussian(4, rng, 5.0);
      const double c = shift(rng);
      for (const double t : {0.5, 1.0, 3.0}) {
        const Vector shifted = (z.array() + c).matrix();
        CHECK(std::abs(score_energy(shifted, t) - (score_energy(z, t) - c)) < 1e-9);
      }
    }
  }

  TEST_CASE("mahalanobis examples and oracle") {
    Matrix means(2, 2);
    means << 1, 2, -3, 0;
    CHECK(score_mahalanobis(vec({1, 2}), means, Matrix::Identity(2, 2)) == 0.0);
    CHECK(score_mahalanobis(vec({1, 0, 0}), Matrix::Zero(1, 3), Matrix::Identity(3, 3)) == 1.0);

    std::mt19937_64 rng(40);
    const Matrix a = test::gaussian(5, 5, rng);
    const Matrix inv = a * a.transpose() + Matrix::Identity(5, 5);
    const Matrix mu = test::gaussian(3, 5, rng);
    const Vector f = test::gaussian(5, rng);
    double best = INFINITY;
    for (Index c = 0; c < 3; ++c) {
      double q = 0.0;
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 5; ++j) q += (f(i) - mu(c, i)) * inv(i, j) * (f(j) - mu(c, j));
      best = std::min(best, q);
    }
    CHECK(std::abs(score_mahalanobis(f, mu, inv) - best) <= 1e-12 * std::max(1.0, best));
  }

  TEST_CASE("knn examples") {
    RowMatrix memory(2, 1);
    memory << 0, 10;
    CHECK(score_knn(vec({1}), memory, 1) == 1.0);
    CHECK(score_knn(vec({1}), memory, 2) == 5.0);
    CHECK(score_knn(vec({10}), memory, 1) == 0.0);
    CHECK(score_knn(vec({10}), memory, 1, Index{1}) == 10.0);
    CHECK_THROWS_AS(score_knn(vec({1}), memory, 3), Error);
    CHECK_THROWS_AS(score_knn(vec({1}), memory, 2, Index{0}), Error);
    CHECK_THROWS_AS(score_knn(vec({1, 2}), memory, 1), Error);
  }

  TEST_CASE("density endpoints and midpoint") {
    std::mt19937_64 rng(2);
    const Matrix means = test::gaussian(2, 3, rng);
    const Matrix inv = Matrix::Identity(3, 3) * 2.0;
    RowMatrix memory = test::gaussian(30, 3, rng);
    const Vector f = test::gaussian(3, rng);
    CHECK(score_density(f, means, inv, memory, 5, 1.0).density == score_mahalanobis(f, means, inv));
    CHECK(score_density(f, means, inv, memory, 5, 0.0).density == score_knn(f, memory, 5));
    CHECK(fuse_density(4.0, 2.0, 0.5) == 3.0);
    CHECK_THROWS_AS(score_density(f, means, inv, memory, 5, 1.5), Error);
  }

  TEST_CASE("temporal second-order examples") {
    FeatureHistory h;
    CHECK_FALSE(score_temporal(vec({2}), h, TemporalMetric::kSecondOrder).mature);
    CHECK(score_temporal(vec({2}), h, TemporalMetric::kSecondOrder).value == 0.0);
    h.push(0.0, vec({0}));
    CHECK_FALSE(score_temporal(vec({2}), h, TemporalMetric::kSecondOrder).mature);
    h.push(0.125, vec({1}));
    const TemporalScore linear = score_temporal(vec({2}), h, TemporalMetric::kSecondOrder);
    CHECK(linear.mature);
    CHECK(linear.value == 0.0);
    CHECK(score_temporal(vec({4}), h, TemporalMetric::kSecondOrder).value == 2.0);
  }

  TEST_CASE("affine trajectories have zero second difference") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
      const Vector a = test::gaussian(8, rng, 10.0);
      const Vector b = test::gaussian(8, rng);
      FeatureHistory h;
      h.push(0.0, a);
      h.push(1.0, a + b);
      CHECK(score_temporal(a + 2.0 * b, h, TemporalMetric::kSecondOrder).value < 1e-9);
    }
  }

  TEST_CASE("non-second-order metrics compare to the mean of the two previous frames") {
    FeatureHistory h;
    h.push(0.0, vec({1, 1}));
    h.push(1.0, vec({3, 1}));
    CHECK(score_temporal(vec({2, 4}), h, TemporalMetric::kManhattan).value == 3.0);
  }

  TEST_CASE("history ordering and capacity") {
    FeatureHistory h(3);
    h.push(0.0, vec({0}));
    CHECK_THROWS_AS(h.push(0.0, vec({1})), Error);
    for (int i = 1; i <= 5; ++i) h.push(i, vec({static_cast<double>(i)}));
    CHECK(h.size() == 3);
    CHECK(h.back(0)(0) == 5.0);
    CHECK(h.back(2)(0) == 3.0);
    CHECK(*h.latest_time() == 5.0);
    CHECK_THROWS(FeatureHistory(2));
  }

  TEST_CASE("online aggregation") {
    FeatureFrame a, b;
    a.features = vec({0});
    a.logits = vec({1, 1});
    b.features = vec({2});
    b.logits = vec({3, 1});
    b.start_s = 4.0;
    const std::vector<FeatureFrame> one{a};
    CHECK(online_aggregate(one).features == a.features);
    const std::vector<FeatureFrame> two{a, b};
    const FeatureFrame m = online_aggregate(two);
    CHECK(m.features(0) == 1.0);
    CHECK(m.logits(0) == 2.0);
    CHECK(m.start_s == 4.0);
    b.features = vec({1, 2});
    const std::vector<FeatureFrame> mixed{a, b};
    CHECK_THROWS_AS(online_aggregate(mixed), Error);
  }

  TEST_CASE("config validation") {
    ScoringConfig c;
    CHECK_NOTHROW(c.validate());
    c.weights.eta = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.knn_k = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }
}
