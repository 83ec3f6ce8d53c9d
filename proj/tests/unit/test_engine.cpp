#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "tempdens/engine.hpp"
#include "tempdens/error.hpp"

using namespace tempdens;

namespace {

CalibrationPack small_pack() {
  CalibrationPack p;
  p.class_means = Matrix(2, 1);
  p.class_means << -1.0, 1.0;
  p.inv_cov = Matrix::Identity(1, 1);
  p.id_memory = RowMatrix(4, 1);
  p.id_memory << -1.5, -0.5, 0.5, 1.5;
  p.scoring.knn_k = 2;
  p.tau = 2.0;
  return p;
}

FeatureFrame make_frame(double x, double z0, double z1) {
  FeatureFrame f;
  f.features = Vector::Constant(1, x);
  f.logits = Vector(2);
  f.logits << z0, z1;
  return f;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("rest gate: no action, no scoring, no history") {
    const CalibrationPack pack = small_pack();
    Engine engine(pack, {0.5});
    bool called = false;
    const DecisionRecord r = engine.step(0.0, 0, 0.2, [&] {
      called = true;
      return make_frame(0, 0, 0);
    });
    CHECK(r.decision == Decision::kNoAction);
    CHECK_FALSE(r.scored);
    CHECK_FALSE(called);
    CHECK(engine.history().size() == 0);
  }

  TEST_CASE("standardized (1,1,1) against tau 2 is rejected; S == tau is accepted") {
    CalibrationPack pack = small_pack();
    const FeatureFrame f = make_frame(0.3, 0.1, 0.9);
    FeatureHistory empty;
    const RawComponents raw = compute_components(f, empty, pack);
    pack.ebo = {raw.ebo - 1.0, 1.0};
    pack.dens = {raw.density.density - 1.0, 1.0};
    pack.temp = {-1.0, 1.0};  // immature temporal raw score is 0
    Engine engine(pack, {0.5});
    const DecisionRecord r = engine.step(0.0, 0, 0.9, [&] { return f; });
    CHECK(r.standardized.ebo == doctest::Approx(1.0));
    CHECK(r.standardized.dens == doctest::Approx(1.0));
    CHECK(r.standardized.temp == 1.0);
    CHECK(r.fused == doctest::Approx(3.0));
    CHECK(r.decision == Decision::kReject);
    CHECK(r.class_index == -1);

    pack.tau = r.fused;
    Engine at_tau(pack, {0.5});
    const DecisionRecord a = at_tau.step(0.0, 0, 0.9, [&] { return f; });
    CHECK(a.fused == pack.tau);
    CHECK(a.decision == Decision::kClass);
    CHECK(a.class_index == 1);
  }

  TEST_CASE("argmax ties go to the lowest index") {
    CalibrationPack pack = small_pack();
    pack.tau = 1e9;
    Engine engine(pack, {0.5});
    CHECK(engine.step(0.0, 0, 1.0, [] { return make_frame(0, 2, 2); }).class_index == 0);
  }

  TEST_CASE("cold start, maturity and gap reset") {
    CalibrationPack pack = small_pack();
    pack.temp = {0.5, 2.0};
    pack.tau = 1e9;
    Engine engine(pack, {0.5});
    std::vector<DecisionRecord> recs;
    for (int i = 0; i < 4; ++i)
      recs.push_back(engine.step(0.125 * i, static_cast<std::size_t>(i), 0.9,
                                 [&] { return make_frame(0.1 * i * i, 0, 1); }));
    CHECK_FALSE(recs[0].history_mature);
    CHECK_FALSE(recs[1].history_mature);
    CHECK(recs[0].standardized.temp == (0.0 - 0.5) / 2.0);
    CHECK(recs[2].history_mature);
    CHECK(recs[2].raw.temporal.value == doctest::Approx(0.2));
    // Rest frames in between do not touch history; a long gap clears it.
    engine.step(0.5, 4, 0.1, [] { return make_frame(0, 0, 0); });
    const auto after_short = engine.step(1.0, 5, 0.9, [] { return make_frame(0, 0, 1); });
    CHECK(after_short.history_mature);
    const auto after_gap = engine.step(2.5, 6, 0.9, [] { return make_frame(0, 0, 1); });
    CHECK_FALSE(after_gap.history_mature);
    CHECK(engine.history().size() == 1);
  }

  TEST_CASE("out-of-order frames are an error") {
    const CalibrationPack pack = small_pack();
    Engine engine(pack, {0.5});
    engine.step(1.0, 8, 0.1, [] { return make_frame(0, 0, 0); });
    try {
      engine.step(0.875, 7, 0.1, [] { return make_frame(0, 0, 0); });
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kOrder);
    }
  }

  TEST_CASE("faults become rejects with a reason and leave history alone") {
    const CalibrationPack pack = small_pack();
    Engine engine(pack, {0.5});
    const auto nan = engine.step(0.0, 0, std::numeric_limits<double>::quiet_NaN(), [] { return make_frame(0, 0, 0); });
    CHECK(nan.decision == Decision::kReject);
    CHECK(nan.fault.has_value());
    const auto bad = engine.step(0.125, 1, 0.9, [] {
      FeatureFrame f = make_frame(0, 0, 0);
      f.logits = Vector::Zero(3);
      return f;
    });
    CHECK(bad.decision == Decision::kReject);
    CHECK_FALSE(bad.scored);
    CHECK(bad.fault->find("logits") != std::string::npos);
    CHECK(engine.history().size() == 0);
    const auto json = record_to_json(bad);
    CHECK(json["s_ood"].is_null());
    CHECK(json["scores"].is_null());
    CHECK(json["decision"] == "reject");
  }

  TEST_CASE("all-rest stream yields only no-action records") {
    const CalibrationPack pack = small_pack();
    Engine engine(pack, {0.5});
    std::vector<DecisionRecord> recs;
    for (int i = 0; i < 50; ++i)
      recs.push_back(engine.step(0.125 * i, static_cast<std::size_t>(i), 0.49, [] { return make_frame(0, 0, 0); }));
    for (const auto& r : recs) CHECK(r.decision == Decision::kNoAction);
    const std::string jsonl = records_to_jsonl(recs);
    CHECK(jsonl == records_to_jsonl(recs));
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 50);
  }

  TEST_CASE("aggregation buffer keeps the last W task frames") {
    CalibrationPack pack = small_pack();
    pack.tau = 1e9;
    Engine engine(pack, {0.5});
    for (int i = 0; i < 5; ++i) engine.step(0.125 * i, static_cast<std::size_t>(i), 0.9, [&] { return make_frame(i, 0, 1); });
    REQUIRE(engine.recent_frames().size() == 3);
    CHECK(engine.recent_frames().front().features(0) == 2.0);
    CHECK(engine.last_frame()->features(0) == 4.0);
  }
}
