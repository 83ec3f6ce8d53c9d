// tempdens: train / calibrate / replay / eval / ablate over a manifest data root.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/pipeline.hpp"
#include "tempdens/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int report_error(std::string_view code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
  return exit_code;
}

struct Overrides {
  std::string data_root;
  std::string out;
  std::string config;
  std::optional<double> gate_threshold;
  std::string fusion_weights;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::vector<std::string> subjects;
  std::string metric;
  std::optional<int> knn_k;
  std::optional<double> tau_quantile;
  std::string features_dir;
  std::string ood_population;
  std::vector<std::string> methods;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--data-root", o.data_root, "Directory holding session manifests");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--gate-threshold", o.gate_threshold, "Gate threshold lambda");
  cmd->add_option("--fusion-weights", o.fusion_weights, "alpha,beta,gamma");
  cmd->add_option("--seed", o.seed, "Seed for head init and memory reservoir");
  cmd->add_option("--jobs", o.jobs, "Subjects processed in parallel");
  cmd->add_option("--subjects", o.subjects, "Subject ids to include")->delimiter(',');
  cmd->add_option("--metric", o.metric, "Temporal metric");
  cmd->add_option("--knn-k", o.knn_k, "k for the kNN density term");
  cmd->add_option("--tau-quantile", o.tau_quantile, "Validation quantile for tau");
  cmd->add_option("--features-dir", o.features_dir, "Replay Stage-II outputs from <stem>.features files");
  cmd->add_option("--ood-population", o.ood_population, "gated | all-task");
  cmd->add_option("--methods", o.methods, "Baselines to report")->delimiter(',');
}

tempdens::RunConfig resolve(const Overrides& o) {
  using tempdens::ErrorCode;
  tempdens::RunConfig c;
  if (!o.config.empty()) {
    const json j = json::parse(tempdens::codec::read_file(o.config), nullptr, false);
    tempdens::require(!j.is_discarded(), ErrorCode::kConfig, "config " + o.config + " is not valid JSON");
    c = tempdens::run_config_from_json(j, c);
  }
  if (!o.data_root.empty()) c.data_root = o.data_root;
  if (!o.out.empty()) c.out = o.out;
  if (o.gate_threshold) c.gate_threshold = *o.gate_threshold;
  if (!o.fusion_weights.empty()) {
    std::stringstream in(o.fusion_weights);
    std::string part;
    std::vector<double> w;
    while (std::getline(in, part, ',')) {
      try {
        std::size_t used = 0;
        w.push_back(std::stod(part, &used));
        tempdens::require(used == part.size(), ErrorCode::kConfig, "bad number in --fusion-weights");
      } catch (const std::logic_error&) {
        tempdens::fail(ErrorCode::kConfig, "bad number in --fusion-weights: '" + part + "'");
      }
    }
    tempdens::require(w.size() == 3, ErrorCode::kConfig, "--fusion-weights takes alpha,beta,gamma");
    c.fusion.alpha = w[0];
    c.fusion.beta = w[1];
    c.fusion.gamma = w[2];
  }
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (!o.subjects.empty()) c.subjects = o.subjects;
  if (!o.metric.empty()) c.temporal_metric = o.metric;
  if (o.knn_k) c.knn_k = *o.knn_k;
  if (o.tau_quantile) c.tau_quantile = *o.tau_quantile;
  if (!o.features_dir.empty()) c.features_dir = o.features_dir;
  if (!o.ood_population.empty()) c.ood_population = o.ood_population;
  if (!o.methods.empty()) c.methods = o.methods;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming asynchronous-BCI decisions with temporal-density OOD rejection"};
  app.require_subcommand(1);
  Overrides o;

  using Command = tempdens::CommandResult (*)(const tempdens::RunConfig&);
  const std::pair<const char*, Command> commands[] = {
      {"train", tempdens::cmd_train},       {"calibrate", tempdens::cmd_calibrate},
      {"replay", tempdens::cmd_replay},     {"eval", tempdens::cmd_eval},
      {"ablate", tempdens::cmd_ablate}};
  const char* help[] = {"Train the rest/task gate and the Stage-II classifier",
                        "Fit class/score statistics and tau",
                        "Run the engine over test sessions, one JSONL per session",
                        "OOD and gate tables plus coverage curve data",
                        "Component ablation and temporal metric grids"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    subs.push_back(app.add_subcommand(commands[i].first, help[i]));
    add_run_flags(subs.back(), o);
  }

  std::string synth_out;
  int synth_subjects = 2, synth_channels = 8, synth_trials = 12;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write a synthetic manifest fixture");
  synth->add_option("--out", synth_out, "Fixture directory")->required();
  synth->add_option("--subjects", synth_subjects, "Number of subjects");
  synth->add_option("--channels", synth_channels, "Channels per session");
  synth->add_option("--trials", synth_trials, "Trials per class and session");
  synth->add_option("--seed", synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kExitUsage);
  }

  try {
    if (synth->parsed()) {
      fs::create_directories(synth_out);
      const auto written = tempdens::synth::write_fixture(synth_out, synth_subjects, synth_channels, synth_trials, synth_seed);
      json files = json::array();
      for (const auto& p : written) files.push_back(p.string());
      std::cout << json{{"command", "synth"}, {"written", files}}.dump(1) << "\n";
      return 0;
    }
    const tempdens::RunConfig config = resolve(o);
    if (!fs::is_directory(config.data_root))
      return report_error("missing_data_root", "data root " + config.data_root.string() + " does not exist",
                          kExitUsage);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      fs::create_directories(config.out);
      const auto result = commands[i].second(config);
      json files = json::array();
      for (const auto& p : result.written) files.push_back(p.string());
      std::cout << json{{"command", commands[i].first}, {"written", files}, {"summary", result.summary}}.dump(1)
                << "\n";
    }
    return 0;
  } catch (const tempdens::Error& e) {
    return report_error(tempdens::error_code_name(e.code()), e.what(),
                        e.code() == tempdens::ErrorCode::kConfig ? kExitUsage : kExitFailure);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitFailure);
  }
}
