#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/baselines.hpp"
#include "tempdens/calibration.hpp"
#include "tempdens/engine.hpp"

namespace tempdens {

/// Rank-statistic AUROC with OOD as the positive class and ties credited 0.5.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct GateObservation {
  double coverage = 0.0;
  TrueState truth;
  bool gated_task = false;
};

struct CoverageBin {
  double lower = 0.0;
  double upper = 0.0;
  double center = 0.0;
  std::size_t count = 0;
  double recall = 0.0;
};

/// Task recall per equal-width coverage bin over (0, 1]; empty bins are omitted.
std::vector<CoverageBin> coverage_recall_curve(std::span<const GateObservation> observations, int n_bins);

/// Fraction of correct rest/task gate decisions; Excluded frames are skipped.
/// With `ood_counts_as_task` false, OOD frames are dropped instead of counted as task.
double gate_accuracy(std::span<const GateObservation> observations, bool ood_counts_as_task = true);

/// One test-stream step as seen by the evaluator.
struct TestStep {
  double start_s = 0.0;
  std::size_t index = 0;
  double p_task = 0.0;
  TrueState truth;
  double coverage = 0.0;
  std::optional<FeatureFrame> frame;  // present whenever the step may be scored
};

struct SubjectData {
  std::string subject;
  CalibrationPack pack;
  std::vector<FeatureFrame> calibration_stream;  // training ID frames in time order
  std::vector<TestStep> test;
};

struct DatasetData {
  std::string name;
  std::vector<SubjectData> subjects;
};

enum class OodPopulation {
  kGated,         // task-gated frames only
  kAllTaskTruth,  // every ID/OOD frame, gate replaced by ground truth
};

struct EvalOptions {
  GateConfig gate;
  OodPopulation population = OodPopulation::kGated;
  std::vector<BaselineMethod> methods{kAllBaselines.begin(), kAllBaselines.end()};
  BaselineConfig baselines;
  double validation_fraction = 0.2;
  int coverage_bins = 10;
};

/// Standardized components of every scored ID/OOD frame of one subject.
struct ScoredFrame {
  StandardizedComponents standardized;
  double fused = 0.0;
  bool is_ood = false;
  std::map<std::string, double> offline;  // baseline name -> score
  std::map<std::string, double> online;
};

std::vector<ScoredFrame> score_subject(const SubjectData& subject, const CalibrationPack& pack,
                                       const EvalOptions& options, bool with_baselines);

struct SubjectResult {
  std::string subject;
  std::size_t id_frames = 0;
  std::size_t ood_frames = 0;
  std::optional<double> tempdens;
  std::map<std::string, std::optional<double>> offline;
  std::map<std::string, std::optional<double>> online;
  std::optional<double> gate_accuracy;
  std::optional<double> gate_accuracy_id_only;
  std::vector<GateObservation> observations;
};

SubjectResult evaluate_subject(const SubjectData& subject, const EvalOptions& options);

struct ComponentMask {
  bool ebo = true;
  bool dens = true;
  bool temp = true;

  friend bool operator==(const ComponentMask&, const ComponentMask&) = default;
};

/// The seven non-empty masks in the conventional row order.
std::vector<ComponentMask> default_ablation_masks();

struct GridRow {
  std::string label;
  std::map<std::string, std::vector<std::optional<double>>> per_subject;  // dataset -> subject cells
  std::map<std::string, std::optional<double>> dataset_average;
  std::optional<double> average;  // mean of the dataset averages
};

struct Grid {
  std::vector<std::string> datasets;
  std::vector<GridRow> rows;
  std::vector<std::string> warnings;
};

std::string mask_label(const ComponentMask& mask);

Grid run_ablation(std::span<const DatasetData> datasets, std::span<const ComponentMask> masks,
                  const EvalOptions& options);

Grid run_metric_sweep(std::span<const DatasetData> datasets, std::span<const std::string> metric_names,
                      const EvalOptions& options);

struct DatasetReport {
  std::string name;
  std::vector<SubjectResult> subjects;
  std::map<std::string, std::optional<double>> offline_average;
  std::map<std::string, std::optional<double>> online_average;
  std::optional<double> tempdens_average;
  std::optional<double> gate_accuracy;
  std::optional<double> gate_accuracy_id_only;
  std::vector<CoverageBin> coverage_curve;
};

struct EvalReport {
  std::vector<DatasetReport> datasets;
  nlohmann::json config;
};

DatasetReport evaluate_dataset(const DatasetData& dataset, const EvalOptions& options);

/// Mean of the present values, or nullopt when none are present.
std::optional<double> mean_of(std::span<const std::optional<double>> values);

nlohmann::json report_to_json(const EvalReport& report);
std::string ood_table_csv(const DatasetReport& dataset);
std::string gate_table_csv(const DatasetReport& dataset);
std::string coverage_csv(const DatasetReport& dataset);
std::string grid_csv(const Grid& grid, const std::string& label_header);
nlohmann::json grid_to_json(const Grid& grid);

}  // namespace tempdens
