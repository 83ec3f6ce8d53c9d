#include "tempdens/metrics.hpp"

#include <cmath>

#include "tempdens/error.hpp"

namespace tempdens {

std::string_view metric_name(TemporalMetric metric) {
  switch (metric) {
    case TemporalMetric::kBrayCurtis: return "braycurtis";
    case TemporalMetric::kCanberra: return "canberra";
    case TemporalMetric::kCorrelation: return "correlation";
    case TemporalMetric::kCosine: return "cosine";
    case TemporalMetric::kEuclidean: return "euclidean";
    case TemporalMetric::kManhattan: return "manhattan";
    case TemporalMetric::kSecondOrder: return "second-order";
  }
  return "second-order";
}

TemporalMetric parse_metric(std::string_view name) {
  for (const auto m : kAllTemporalMetrics)
    if (metric_name(m) == name) return m;
  if (name == "bray-curtis") return TemporalMetric::kBrayCurtis;
  if (name == "second-order-l2" || name == "l2-second-order") return TemporalMetric::kSecondOrder;
  if (name == "l2") return TemporalMetric::kEuclidean;
  if (name == "l1") return TemporalMetric::kManhattan;
  fail(ErrorCode::kUnknownName, "unknown temporal metric '" + std::string(name) + "'");
}

namespace {

double cosine_distance(const Vector& h, const Vector& c, const char* what) {
  const double nh = h.norm();
  const double nc = c.norm();
  require(nh > 0.0 && nc > 0.0, ErrorCode::kPrecondition, std::string(what) + " distance of a zero-norm vector");
  return 1.0 - h.dot(c) / (nh * nc);
}

}  // namespace

double metric_distance(TemporalMetric metric, const Vector& h, const Vector& c, double epsilon) {
  require(h.size() == c.size(), ErrorCode::kShape, "metric_distance dimension mismatch");
  switch (metric) {
    case TemporalMetric::kCosine:
      return cosine_distance(h, c, "cosine");
    case TemporalMetric::kCorrelation: {
      const Vector hc = h.array() - h.mean();
      const Vector cc = c.array() - c.mean();
      return cosine_distance(hc, cc, "correlation");
    }
    case TemporalMetric::kEuclidean:
      return (h - c).norm();
    case TemporalMetric::kManhattan:
      return (h - c).cwiseAbs().sum();
    case TemporalMetric::kCanberra:
      require(epsilon > 0.0, ErrorCode::kInvalidArgument, "canberra needs epsilon > 0");
      return ((h - c).array().abs() / (h.array().abs() + c.array().abs() + epsilon)).sum();
    case TemporalMetric::kBrayCurtis:
      require(epsilon > 0.0, ErrorCode::kInvalidArgument, "bray-curtis needs epsilon > 0");
      return (h - c).cwiseAbs().sum() / ((h.cwiseAbs() + c.cwiseAbs()).sum() + epsilon);
    case TemporalMetric::kSecondOrder:
      break;
  }
  fail(ErrorCode::kInvalidArgument, "second-order difference is not a pairwise metric");
}

double metric_distance(std::string_view name, const Vector& h, const Vector& c, double epsilon) {
  return metric_distance(parse_metric(name), h, c, epsilon);
}

}  // namespace tempdens
