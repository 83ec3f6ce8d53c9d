#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tempdens/backbone.hpp"

namespace tempdens {

struct CalibrationPack;

enum class BaselineMethod {
  kMsp,
  kMaxLogit,
  kOdinT,
  kEbo,
  kReact,
  kDice,
  kVim,
  kOpenMax,
  kGradNorm,
  kMahalanobis,
  kKnn,
};

inline constexpr std::array<BaselineMethod, 11> kAllBaselines = {
    BaselineMethod::kDice,        BaselineMethod::kEbo,      BaselineMethod::kGradNorm, BaselineMethod::kKnn,
    BaselineMethod::kMahalanobis, BaselineMethod::kMaxLogit, BaselineMethod::kMsp,      BaselineMethod::kOdinT,
    BaselineMethod::kOpenMax,     BaselineMethod::kReact,    BaselineMethod::kVim,
};

std::string_view baseline_name(BaselineMethod method);
BaselineMethod parse_baseline(std::string_view name);

struct BaselineConfig {
  double react_percentile = 90.0;
  double dice_percentile = 90.0;
  int vim_dim = 0;  // 0 -> ceil(d / 2)
  int openmax_tail = 20;
  int openmax_alpha = 0;  // revised top classes; 0 -> K
  double odin_temperature = 1000.0;
  double energy_temperature = 1.0;
  int knn_k = 10;

  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

/// Two-parameter Weibull, CDF 1 - exp(-(x / scale)^shape).
struct WeibullFit {
  double shape = 1.0;
  double scale = 1.0;

  double cdf(double x) const;
};

/// Maximum-likelihood Weibull fit; needs at least two positive, non-identical samples.
WeibullFit fit_weibull(std::span<const double> samples);

/// numpy-style linear-interpolation percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct VimStats {
  Vector origin;
  Matrix residual_basis;  // d x (d - d')
  double alpha = 1.0;
};

struct OpenMaxStats {
  Matrix mean_activations;  // K x K, row c = mean logit vector of correct class-c samples
  std::vector<WeibullFit> tails;
};

/// Baseline auxiliaries frozen from training ID features.
struct BaselineStats {
  std::optional<LinearHead> head;
  std::optional<double> react_clamp;
  std::optional<Matrix> dice_mask;  // K x d of 0/1
  std::optional<VimStats> vim;
  std::optional<OpenMaxStats> openmax;
};

/// Fits every auxiliary from training ID features (n x d) and their labels.
BaselineStats fit_baseline_stats(const Matrix& features, std::span<const int> labels, const LinearHead& head,
                                 const BaselineConfig& config);

nlohmann::json baseline_stats_to_json(const BaselineStats& stats);
BaselineStats baseline_stats_from_json(const nlohmann::json& j);

/// Post-hoc OOD score oriented so that higher means more OOD.
double score_baseline(BaselineMethod method, const FeatureFrame& frame, const CalibrationPack& pack,
                      const BaselineConfig& config);

}  // namespace tempdens
