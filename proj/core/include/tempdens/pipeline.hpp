#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/baselines.hpp"
#include "tempdens/evaluation.hpp"

namespace tempdens {

/// Fully resolved run configuration. Every field has a default; a JSON config
/// file and command-line flags override them in that order.
struct RunConfig {
  std::filesystem::path data_root;
  std::filesystem::path out = "out";
  std::string dataset;                // name when data_root holds manifests directly
  std::vector<std::string> subjects;  // empty = all discovered
  double window_len_s = 2.0;
  double hop_s = 0.125;
  double exclusion_s = 0.5;
  double band_low_hz = 8.0;
  double band_high_hz = 30.0;
  double gate_threshold = 0.5;
  FusionWeights fusion;
  int knn_k = 10;
  std::string temporal_metric = "second-order";
  int aggregation_window = 3;
  double reset_gap_s = 1.0;
  double tau_quantile = 0.95;
  double validation_fraction = 0.2;
  std::size_t memory_cap = 50000;
  std::vector<std::string> methods;  // baseline names; empty = all
  std::string ood_population = "gated";
  int n_pairs = 3;
  HeadTrainOptions head;
  double min_train_coverage = 0.5;
  std::filesystem::path features_dir;  // replayed Stage-II outputs, optional
  std::vector<std::string> ablation_metrics;  // empty = all seven
  BaselineConfig baselines;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& config);
/// Applies the keys present in `j` on top of `base`; unknown keys are errors.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

struct SubjectSessions {
  std::string dataset;
  std::string subject;
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};

/// Finds manifests under data_root (or under each of its sub-directories when
/// it holds none itself) and groups them by subject and split.
std::vector<SubjectSessions> discover_subjects(const RunConfig& config);

struct CommandResult {
  std::vector<std::filesystem::path> written;
  nlohmann::json summary;
};

CommandResult cmd_train(const RunConfig& config);
CommandResult cmd_calibrate(const RunConfig& config);
CommandResult cmd_replay(const RunConfig& config);
CommandResult cmd_eval(const RunConfig& config);
CommandResult cmd_ablate(const RunConfig& config);

/// Least-squares affine map features -> logits, used as the linear head when
/// Stage-II outputs come from a replayed external model.
LinearHead fit_linear_readout(const std::vector<FeatureFrame>& frames);

}  // namespace tempdens
