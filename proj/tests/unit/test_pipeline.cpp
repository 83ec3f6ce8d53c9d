#include <doctest.h>

#include "support.hpp"
#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/pipeline.hpp"
#include "tempdens/synthetic.hpp"

using namespace tempdens;
namespace fs = std::filesystem;

namespace {

fs::path fixture() {
  static const fs::path dir = [] {
    const auto d = test::scratch("pipeline_fixture");
    synth::write_fixture(d, 2, 6, 8, 3);
    return d;
  }();
  return dir;
}

RunConfig config_for(const std::string& out) {
  RunConfig c;
  c.data_root = fixture();
  c.out = test::scratch(out);
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config json round trip, unknown keys and validation") {
    RunConfig c;
    c.data_root = "/data";
    c.fusion.alpha = 2.0;
    c.methods = {"msp", "ebo"};
    const RunConfig back = run_config_from_json(run_config_to_json(c));
    CHECK(run_config_to_json(back) == run_config_to_json(c));
    CHECK_THROWS_AS(run_config_from_json({{"gate_treshold", 0.4}}), Error);
    CHECK_THROWS_AS(run_config_from_json({{"knn_k", "ten"}}), Error);
    RunConfig bad = c;
    bad.band_low_hz = 40.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.temporal_metric = "chebyshev";
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.methods = {"gram"};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.gate_threshold = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("discovery groups manifests by subject and split") {
    RunConfig c = config_for("pipeline_discover");
    const auto subjects = discover_subjects(c);
    REQUIRE(subjects.size() == 2);
    CHECK(subjects[0].subject == "S1");
    CHECK(subjects[0].train.size() == 1);
    CHECK(subjects[0].test.size() == 1);
    c.subjects = {"S2"};
    CHECK(discover_subjects(c).size() == 1);
    c.data_root = "/nonexistent/tempdens";
    CHECK_THROWS_AS(discover_subjects(c), Error);
  }

  TEST_CASE("default config: full pipeline completes with provenance") {
    const RunConfig c = config_for("pipeline_eval");
    const CommandResult r = cmd_eval(c);
    CHECK(fs::exists(c.out / "eval" / "report.json"));
    const auto report = nlohmann::json::parse(codec::read_file(c.out / "eval" / "report.json"));
    CHECK(report["provenance"]["config"]["seed"] == 0);
    CHECK(report["provenance"]["config_sha256"].get<std::string>().size() == 64);
    CHECK(fs::exists(c.out / "eval" / (r.summary["datasets"].begin().key() + "_ood.csv.provenance.json")));
  }

  TEST_CASE("fusion weights 1,0,0: TempDens equals EBO") {
    RunConfig c = config_for("pipeline_ebo");
    c.fusion.beta = 0.0;
    c.fusion.gamma = 0.0;
    cmd_eval(c);
    const auto report = nlohmann::json::parse(codec::read_file(c.out / "eval" / "report.json"));
    const auto& d = report["datasets"][0];
    CHECK(d["average"]["tempdens"].get<double>() == d["average"]["offline"]["ebo"].get<double>());
  }

  TEST_CASE("replay is deterministic and independent of --jobs") {
    RunConfig a = config_for("pipeline_replay_a");
    RunConfig b = config_for("pipeline_replay_b");
    b.jobs = 2;
    const auto ra = cmd_replay(a);
    cmd_replay(b);
    int compared = 0;
    for (const auto& p : ra.written) {
      if (p.extension() != ".jsonl") continue;
      const auto rel = fs::relative(p, a.out);
      CHECK(codec::read_file(p) == codec::read_file(b.out / rel));
      ++compared;
    }
    CHECK(compared == 2);
  }

  TEST_CASE("cached artifacts are reused only for the same config") {
    RunConfig c = config_for("pipeline_cache");
    const auto first = cmd_calibrate(c);
    CHECK(first.written.size() == 4);
    CHECK(cmd_calibrate(c).written.empty());
    c.tau_quantile = 0.9;
    CHECK(cmd_calibrate(c).written.size() == 4);
  }

  TEST_CASE("replayed features: readout head is recovered from logits") {
    std::mt19937_64 rng(1);
    LinearHead truth{test::gaussian(2, 4, rng), test::gaussian(2, rng)};
    std::vector<FeatureFrame> frames(50);
    for (auto& f : frames) {
      f.features = test::gaussian(4, rng);
      f.logits = truth.logits(f.features);
    }
    const LinearHead fit = fit_linear_readout(frames);
    CHECK((fit.weights - truth.weights).norm() < 1e-9);
    CHECK((fit.bias - truth.bias).norm() < 1e-9);
  }
}
