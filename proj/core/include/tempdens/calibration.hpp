#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/backbone.hpp"
#include "tempdens/baselines.hpp"
#include "tempdens/scoring.hpp"

namespace tempdens {

struct ScoreStats {
  double mean = 0.0;
  double std = 1.0;

  double standardize(double x) const { return (x - mean) / std; }
};

/// Mean and population standard deviation; zero spread is an error naming `component`.
ScoreStats fit_moments(std::span<const double> values, std::string_view component);

struct ClassStats {
  Matrix class_means;  // K x d
  Matrix covariance;   // pooled, class-centered, shrunk
  Matrix inv_cov;
};

/// Per-class means and the shared inverse of the shrunk pooled covariance.
/// `features` is n x d, one sample per row.
ClassStats fit_class_stats(const Matrix& features, std::span<const int> labels, int num_classes);

/// Nearest-rank quantile: the ceil(q * n)-th smallest score.
double calibrate_tau(std::span<const double> scores, double quantile = 0.95);

struct CalibrationPack {
  ScoringConfig scoring;
  std::vector<std::string> class_names;
  Matrix class_means;
  Matrix inv_cov;
  RowMatrix id_memory;
  ScoreStats ebo;
  ScoreStats dens;
  ScoreStats temp;
  double tau = 0.0;
  double tau_quantile = 0.95;
  double lambda = 0.5;
  BaselineStats baselines;

  int num_classes() const { return static_cast<int>(class_means.rows()); }
  Index dim() const { return class_means.cols(); }
};

struct RawComponents {
  double ebo = 0.0;
  DensityScore density;
  TemporalScore temporal;
};

struct StandardizedComponents {
  double ebo = 0.0;
  double dens = 0.0;
  double temp = 0.0;
};

/// Component scores of one frame against a history of the previous frames.
RawComponents compute_components(const FeatureFrame& frame, const FeatureHistory& history, const CalibrationPack& pack,
                                 std::optional<Index> exclude_memory_row = std::nullopt);

StandardizedComponents standardize(const RawComponents& raw, const CalibrationPack& pack);

inline double fuse(const StandardizedComponents& s, const FusionWeights& w) {
  return w.alpha * s.ebo + w.beta * s.dens + w.gamma * s.temp;
}

/// True when the gap since the previous task-gated frame resets temporal state.
bool history_gap_exceeded(double previous_s, double current_s, const ScoringConfig& config);

/// Fits (mean, std) of the ebo, dens and temp components along a time-ordered
/// training ID stream. Immature temporal frames are skipped. `memory_rows[i]`
/// names the memory row holding frame i (for leave-self-out kNN), if any.
struct ComponentStats {
  ScoreStats ebo, dens, temp;
};
ComponentStats fit_score_stats(std::span<const FeatureFrame> stream, const CalibrationPack& pack,
                               std::span<const std::optional<Index>> memory_rows = {});

/// Fused scores of a time-ordered stream, scored exactly as the engine would.
std::vector<double> fused_stream_scores(std::span<const FeatureFrame> stream, const CalibrationPack& pack);

struct CalibrationOptions {
  ScoringConfig scoring;
  BaselineConfig baselines;
  double validation_fraction = 0.2;
  double tau_quantile = 0.95;
  double lambda = 0.5;
  std::size_t memory_cap = 50000;
  std::uint64_t seed = 0;
};

/// Builds a pack from a time-ordered stream of training ID frames: the first
/// (1 - validation_fraction) fits class statistics, memory and score moments;
/// the chronologically last part calibrates tau.
CalibrationPack build_calibration(std::span<const FeatureFrame> training_id_stream, const LinearHead& head,
                                  const std::vector<std::string>& class_names, const CalibrationOptions& options);

/// Re-fits the temporal moments and tau for another temporal metric.
CalibrationPack with_temporal_metric(const CalibrationPack& pack, TemporalMetric metric,
                                     std::span<const FeatureFrame> training_id_stream, double validation_fraction);

nlohmann::json scoring_config_to_json(const ScoringConfig& config);
ScoringConfig scoring_config_from_json(const nlohmann::json& j);

nlohmann::json calibration_to_json(const CalibrationPack& pack);
CalibrationPack calibration_from_json(const nlohmann::json& j);

}  // namespace tempdens
