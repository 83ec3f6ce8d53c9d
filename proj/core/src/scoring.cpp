#include "tempdens/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "tempdens/error.hpp"

namespace tempdens {

void FusionWeights::validate() const {
  require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0, ErrorCode::kInvalidArgument,
          "fusion weights must be non-negative");
  require(temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::kInvalidArgument, "eta must lie in [0, 1]");
}

void ScoringConfig::validate() const {
  weights.validate();
  require(knn_k >= 1, ErrorCode::kInvalidArgument, "k must be at least 1");
  require(metric_epsilon > 0.0, ErrorCode::kInvalidArgument, "metric epsilon must be positive");
  require(reset_gap_s >= 0.0 && hop_s > 0.0, ErrorCode::kInvalidArgument, "invalid reset gap or hop");
  require(aggregation_window >= 1, ErrorCode::kInvalidArgument, "aggregation window must be at least 1");
}

FeatureHistory::FeatureHistory(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 3, ErrorCode::kInvalidArgument, "feature history capacity must be at least 3");
}

void FeatureHistory::push(double time_s, Vector features) {
  if (!entries_.empty()) {
    require(time_s > entries_.front().time_s, ErrorCode::kOrder, "feature history timestamps must increase");
    require(features.size() == entries_.front().features.size(), ErrorCode::kShape,
            "feature history dimension mismatch");
  }
  entries_.push_front({time_s, std::move(features)});
  if (entries_.size() > capacity_) entries_.pop_back();
}

std::optional<double> FeatureHistory::latest_time() const {
  if (entries_.empty()) return std::nullopt;
  return entries_.front().time_s;
}

double score_energy(const Vector& logits, double temperature) {
  require(logits.size() >= 2, ErrorCode::kShape, "energy needs at least two logits");
  require(temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  require(logits.allFinite(), ErrorCode::kNonFinite, "non-finite logits");
  const Vector scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  return -temperature * (m + std::log((scaled.array() - m).exp().sum()));
}

double score_mahalanobis(const Vector& f, const Matrix& class_means, const Matrix& inv_cov) {
  require(class_means.rows() >= 1, ErrorCode::kPrecondition, "no class means");
  require(class_means.cols() == f.size() && inv_cov.rows() == f.size() && inv_cov.cols() == f.size(),
          ErrorCode::kShape, "mahalanobis dimension mismatch");
  require(f.allFinite(), ErrorCode::kNonFinite, "non-finite features");
  double best = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < class_means.rows(); ++c) {
    const Vector diff = f - class_means.row(c).transpose();
    best = std::min(best, diff.dot(inv_cov * diff));
  }
  return std::max(best, 0.0);
}

double score_knn(const Vector& f, const RowMatrix& memory, int k, std::optional<Index> exclude_row) {
  const Index available = memory.rows() - (exclude_row ? 1 : 0);
  require(k >= 1 && k <= available, ErrorCode::kPrecondition,
          "k=" + std::to_string(k) + " exceeds the memory size " + std::to_string(available));
  require(memory.cols() == f.size(), ErrorCode::kShape, "knn dimension mismatch");
  require(f.allFinite(), ErrorCode::kNonFinite, "non-finite features");

  const Index d = f.size();
  const double* query = f.data();
  std::priority_queue<double> nearest;  // max-heap of the k smallest squared distances
  for (Index i = 0; i < memory.rows(); ++i) {
    if (exclude_row && *exclude_row == i) continue;
    const double* row = memory.data() + i * d;
    double sq = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double diff = query[j] - row[j];
      sq += diff * diff;
    }
    if (static_cast<int>(nearest.size()) < k) {
      nearest.push(sq);
    } else if (sq < nearest.top()) {
      nearest.pop();
      nearest.push(sq);
    }
  }
  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(k));
  while (!nearest.empty()) {
    distances.push_back(std::sqrt(nearest.top()));
    nearest.pop();
  }
  std::sort(distances.begin(), distances.end());
  double sum = 0.0;
  for (const double x : distances) sum += x;
  return sum / static_cast<double>(k);
}

DensityScore score_density(const Vector& f, const Matrix& class_means, const Matrix& inv_cov, const RowMatrix& memory,
                           int k, double eta, std::optional<Index> exclude_row) {
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::kInvalidArgument, "eta must lie in [0, 1]");
  DensityScore s;
  s.mahalanobis = score_mahalanobis(f, class_means, inv_cov);
  s.knn = score_knn(f, memory, k, exclude_row);
  s.density = fuse_density(s.mahalanobis, s.knn, eta);
  return s;
}

TemporalScore score_temporal(const Vector& f, const FeatureHistory& history, TemporalMetric metric, double epsilon) {
  if (history.size() < 2) return {0.0, false};
  const Vector& prev1 = history.back(0);
  const Vector& prev2 = history.back(1);
  require(prev1.size() == f.size() && prev2.size() == f.size(), ErrorCode::kShape, "temporal dimension mismatch");
  if (metric == TemporalMetric::kSecondOrder) return {(f - 2.0 * prev1 + prev2).norm(), true};
  const Vector reference = 0.5 * (prev1 + prev2);
  return {metric_distance(metric, f, reference, epsilon), true};
}

FeatureFrame online_aggregate(std::span<const FeatureFrame> frames) {
  require(!frames.empty(), ErrorCode::kEmpty, "online aggregation over an empty buffer");
  FeatureFrame out = frames.back();
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    require(frames[i].features.size() == out.features.size() && frames[i].logits.size() == out.logits.size(),
            ErrorCode::kShape, "frames in the aggregation buffer have different shapes");
    out.features += frames[i].features;
    out.logits += frames[i].logits;
  }
  const double n = static_cast<double>(frames.size());
  out.features /= n;
  out.logits /= n;
  return out;
}

}  // namespace tempdens
