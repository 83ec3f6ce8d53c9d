#pragma once

#include <array>
#include <string>
#include <string_view>

#include "tempdens/types.hpp"

namespace tempdens {

enum class TemporalMetric {
  kBrayCurtis,
  kCanberra,
  kCorrelation,
  kCosine,
  kEuclidean,
  kManhattan,
  kSecondOrder,
};

inline constexpr std::array<TemporalMetric, 7> kAllTemporalMetrics = {
    TemporalMetric::kBrayCurtis, TemporalMetric::kCanberra,  TemporalMetric::kCorrelation,
    TemporalMetric::kCosine,     TemporalMetric::kEuclidean, TemporalMetric::kManhattan,
    TemporalMetric::kSecondOrder,
};

inline constexpr double kDefaultMetricEpsilon = 1e-8;

std::string_view metric_name(TemporalMetric metric);
TemporalMetric parse_metric(std::string_view name);

/// Pairwise distance between h and a reference c. Second-order is not pairwise
/// and is rejected here; it lives in score_temporal.
double metric_distance(TemporalMetric metric, const Vector& h, const Vector& c, double epsilon = kDefaultMetricEpsilon);
double metric_distance(std::string_view name, const Vector& h, const Vector& c, double epsilon = kDefaultMetricEpsilon);

}  // namespace tempdens
