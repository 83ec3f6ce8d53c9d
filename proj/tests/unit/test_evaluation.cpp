#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tempdens/error.hpp"
#include "tempdens/evaluation.hpp"
#include "tempdens/synthetic.hpp"

using namespace tempdens;

namespace {

double pair_count_auroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0.0;
  for (const double o : ood)
    for (const double i : id) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

GateObservation obs(double coverage, StateKind kind, bool gated) {
  GateObservation o;
  o.coverage = coverage;
  o.truth.kind = kind;
  o.gated_task = gated;
  return o;
}

DatasetData small_dataset() {
  synth::FeatureStreamSpec spec;
  spec.episodes = 24;
  DatasetData d{"synthetic", {}};
  for (std::uint64_t s = 0; s < 2; ++s) {
    spec.seed = 100 + s;
    d.subjects.push_back(synth::make_subject("S" + std::to_string(s), spec, 30, {}));
  }
  return d;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("auroc examples") {
    CHECK(auroc(std::vector<double>{0, 1}, std::vector<double>{2, 3}) == 1.0);
    CHECK(auroc(std::vector<double>{2, 3}, std::vector<double>{0, 1}) == 0.0);
    CHECK(auroc(std::vector<double>{5, 5, 5}, std::vector<double>{5, 5}) == 0.5);
    CHECK_THROWS_AS(auroc(std::vector<double>{}, std::vector<double>{1}), Error);
  }

  TEST_CASE("auroc matches pair counting, with heavy ties") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> coarse(0, 20);
    std::normal_distribution<double> n(0, 1);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> id, ood;
      for (int i = 0; i < 300; ++i) id.push_back(rep % 2 ? coarse(rng) : n(rng));
      for (int i = 0; i < 200; ++i) ood.push_back(rep % 2 ? coarse(rng) + 3 : n(rng) + 0.5);
      CHECK(std::abs(auroc(id, ood) - pair_count_auroc(id, ood)) < 1e-12);
    }
  }

  TEST_CASE("coverage curves") {
    std::vector<GateObservation> perfect, rest, step;
    for (int i = 1; i <= 100; ++i) {
      const double c = i / 100.0;
      perfect.push_back(obs(c, StateKind::kId, true));
      rest.push_back(obs(c, StateKind::kId, false));
      step.push_back(obs(c, StateKind::kOod, c > 0.5));
    }
    perfect.push_back(obs(0.0, StateKind::kRest, false));
    for (const auto& b : coverage_recall_curve(perfect, 10)) CHECK(b.recall == 1.0);
    for (const auto& b : coverage_recall_curve(rest, 10)) CHECK(b.recall == 0.0);
    const auto curve = coverage_recall_curve(step, 10);
    REQUIRE(curve.size() == 10);
    for (const auto& b : curve) CHECK(b.recall == (b.lower >= 0.5 ? 1.0 : 0.0));
    CHECK(curve[4].count == 10);  // (0.4, 0.5] includes 0.5
  }

  TEST_CASE("gate accuracy") {
    std::vector<GateObservation> oracle, inverted, half;
    for (int i = 0; i < 10; ++i) {
      const bool task = i % 2 == 0;
      const auto kind = task ? StateKind::kId : StateKind::kRest;
      oracle.push_back(obs(task, kind, task));
      inverted.push_back(obs(task, kind, !task));
      half.push_back(obs(task, kind, i < 5 ? task : !task));
    }
    oracle.push_back(obs(0.0, StateKind::kExcluded, true));
    CHECK(gate_accuracy(oracle) == 1.0);
    CHECK(gate_accuracy(inverted) == 0.0);
    CHECK(gate_accuracy(half) == 0.5);
    oracle.push_back(obs(1.0, StateKind::kOod, false));
    CHECK(gate_accuracy(oracle, false) == 1.0);
    CHECK(gate_accuracy(oracle, true) < 1.0);
  }

  TEST_CASE("ablation grid: seven rows; EBO-only row equals the EBO baseline; duplicates warn") {
    const DatasetData d = small_dataset();
    const std::vector<DatasetData> ds{d};
    EvalOptions options;
    const auto masks = default_ablation_masks();
    REQUIRE(masks.size() == 7);
    const Grid grid = run_ablation(ds, masks, options);
    CHECK(grid.rows.size() == 7);
    const DatasetReport report = evaluate_dataset(d, options);
    const GridRow* ebo_row = nullptr;
    for (const auto& r : grid.rows)
      if (r.label == mask_label({true, false, false})) ebo_row = &r;
    REQUIRE(ebo_row != nullptr);
    CHECK(*ebo_row->dataset_average.at("synthetic") == doctest::Approx(*report.offline_average.at("ebo")).epsilon(1e-12));

    std::vector<ComponentMask> dup{{true, true, true}, {true, true, true}};
    const Grid deduped = run_ablation(ds, dup, options);
    CHECK(deduped.rows.size() == 1);
    CHECK(deduped.warnings.size() == 1);
    const std::vector<ComponentMask> none{{false, false, false}};
    CHECK_THROWS_AS(run_ablation(ds, none, options), Error);
  }

  TEST_CASE("metric sweep") {
    const DatasetData d = small_dataset();
    const std::vector<DatasetData> ds{d};
    EvalOptions options;
    const std::vector<std::string> second{"second-order"};
    const Grid one = run_metric_sweep(ds, second, options);
    const DatasetReport report = evaluate_dataset(d, options);
    CHECK(*one.rows.at(0).average == doctest::Approx(*report.tempdens_average).epsilon(1e-12));
    std::vector<std::string> all;
    for (const auto m : kAllTemporalMetrics) all.emplace_back(metric_name(m));
    CHECK(run_metric_sweep(ds, all, options).rows.size() == 7);
    const std::vector<std::string> bad{"chebyshev"};
    CHECK_THROWS_AS(run_metric_sweep(ds, bad, options), Error);
  }

  TEST_CASE("report serialization") {
    const DatasetData d = small_dataset();
    EvalReport report;
    report.datasets.push_back(evaluate_dataset(d, {}));
    const auto j = report_to_json(report);
    CHECK(j.contains("datasets"));
    const std::string csv = ood_table_csv(report.datasets[0]);
    CHECK(csv.find("tempdens") != std::string::npos);
    CHECK(gate_table_csv(report.datasets[0]).find("average") != std::string::npos);
  }
}
