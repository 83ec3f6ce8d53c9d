#pragma once

#include <deque>
#include <optional>
#include <span>

#include "tempdens/backbone.hpp"
#include "tempdens/metrics.hpp"
#include "tempdens/types.hpp"

namespace tempdens {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FusionWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double temperature = 1.0;
  double eta = 0.5;

  void validate() const;
};

/// Everything the TempDens scorer needs besides calibration statistics.
struct ScoringConfig {
  FusionWeights weights;
  int knn_k = 10;
  TemporalMetric metric = TemporalMetric::kSecondOrder;
  double metric_epsilon = kDefaultMetricEpsilon;
  double reset_gap_s = 1.0;
  double hop_s = 0.125;
  int aggregation_window = 3;

  void validate() const;
};

/// Bounded queue of recent feature vectors; index 0 is the newest entry.
class FeatureHistory {
 public:
  explicit FeatureHistory(std::size_t capacity = 3);

  void push(double time_s, Vector features);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Vector& back(std::size_t age) const { return entries_.at(age).features; }
  std::optional<double> latest_time() const;

 private:
  struct Entry {
    double time_s;
    Vector features;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

/// -T log sum_k exp(z_k / T), evaluated with max-subtraction.
double score_energy(const Vector& logits, double temperature);

/// min_c (f - mu_c)^T inv_cov (f - mu_c); `class_means` holds one mean per row.
double score_mahalanobis(const Vector& f, const Matrix& class_means, const Matrix& inv_cov);

/// Mean of the k smallest Euclidean distances from f to the memory rows.
/// Distances accumulate coordinates in index order; the k selected distances
/// are summed in ascending order. `exclude_row` drops one memory row
/// (leave-self-out scoring of memory members).
double score_knn(const Vector& f, const RowMatrix& memory, int k, std::optional<Index> exclude_row = std::nullopt);

struct DensityScore {
  double mahalanobis = 0.0;
  double knn = 0.0;
  double density = 0.0;
};

inline double fuse_density(double mahalanobis, double knn, double eta) {
  return eta * mahalanobis + (1.0 - eta) * knn;
}

DensityScore score_density(const Vector& f, const Matrix& class_means, const Matrix& inv_cov, const RowMatrix& memory,
                           int k, double eta, std::optional<Index> exclude_row = std::nullopt);

struct TemporalScore {
  double value = 0.0;
  bool mature = false;
};

/// Temporal inconsistency of f_t against the history of previous features
/// (history.back(0) = f_{t-1}). Second-order: ||f_t - 2 f_{t-1} + f_{t-2}||;
/// other metrics: d(f_t, mean(f_{t-1}, f_{t-2})). Fewer than two entries
/// yields 0 flagged immature.
TemporalScore score_temporal(const Vector& f, const FeatureHistory& history, TemporalMetric metric,
                             double epsilon = kDefaultMetricEpsilon);

/// Element-wise mean of the logits and features of `frames`; metadata from the newest.
FeatureFrame online_aggregate(std::span<const FeatureFrame> frames);

}  // namespace tempdens
