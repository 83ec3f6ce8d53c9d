#include "tempdens/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"

namespace tempdens {

namespace {

constexpr double kCovShrinkage = 1e-3;
// Keeps the pooled covariance PD when every feature is identical (zero trace).
constexpr double kCovFloor = 1e-9;
constexpr char kFormatTag[] = "tempdens-calibration/1";

std::vector<int> id_labels(std::span<const FeatureFrame> frames) {
  std::vector<int> labels;
  labels.reserve(frames.size());
  for (const auto& f : frames) {
    require(f.true_state.kind == StateKind::kId, ErrorCode::kPrecondition,
            "calibration streams may only contain ID frames (frame " + std::to_string(f.index) + " is " +
                to_string(f.true_state.kind) + ")");
    labels.push_back(f.true_state.class_index);
  }
  return labels;
}

Matrix stack_features(std::span<const FeatureFrame> frames) {
  require(!frames.empty(), ErrorCode::kEmpty, "empty feature stream");
  Matrix m(static_cast<Index>(frames.size()), frames.front().features.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require(frames[i].features.size() == m.cols(), ErrorCode::kShape, "inconsistent feature dimension");
    m.row(static_cast<Index>(i)) = frames[i].features.transpose();
  }
  return m;
}

std::size_t validation_count(std::size_t n, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::kInvalidArgument, "validation fraction must lie in (0, 1)");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
}

}  // namespace

ScoreStats fit_moments(std::span<const double> values, std::string_view component) {
  require(values.size() >= 2, ErrorCode::kPrecondition,
          "need at least two scores to standardize '" + std::string(component) + "'");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / n);
  require(std > 0.0 && std::isfinite(std), ErrorCode::kZeroVariance,
          "score component '" + std::string(component) + "' has zero variance on the training ID stream");
  return {mean, std};
}

ClassStats fit_class_stats(const Matrix& features, std::span<const int> labels, int num_classes) {
  require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorCode::kShape,
          "feature rows and label count differ");
  require(num_classes >= 1, ErrorCode::kPrecondition, "need at least one class");
  const Index d = features.cols();
  ClassStats out;
  out.class_means = Matrix::Zero(num_classes, d);
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (Index i = 0; i < features.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < num_classes, ErrorCode::kPrecondition, "label out of range");
    out.class_means.row(y) += features.row(i);
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c) {
    require(counts[static_cast<std::size_t>(c)] >= 2, ErrorCode::kPrecondition,
            "class " + std::to_string(c) + " has fewer than two samples");
    out.class_means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  Matrix centered = features;
  for (Index i = 0; i < features.rows(); ++i) centered.row(i) -= out.class_means.row(labels[static_cast<std::size_t>(i)]);
  out.covariance = centered.transpose() * centered / static_cast<double>(features.rows());
  const double shrink = std::max(kCovShrinkage * out.covariance.trace() / static_cast<double>(d), kCovFloor);
  out.covariance.diagonal().array() += shrink;
  Eigen::LLT<Matrix> llt(out.covariance);
  require(llt.info() == Eigen::Success, ErrorCode::kSingular, "pooled covariance is not positive definite after shrinkage");
  out.inv_cov = llt.solve(Matrix::Identity(d, d));
  out.inv_cov = 0.5 * (out.inv_cov + out.inv_cov.transpose()).eval();
  return out;
}

double calibrate_tau(std::span<const double> scores, double quantile) {
  require(!scores.empty(), ErrorCode::kEmpty, "cannot calibrate tau on an empty score list");
  require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile must lie in (0, 1)");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(sorted.size()) - 1e-12));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

RawComponents compute_components(const FeatureFrame& frame, const FeatureHistory& history, const CalibrationPack& pack,
                                 std::optional<Index> exclude_memory_row) {
  const auto& cfg = pack.scoring;
  RawComponents raw;
  raw.ebo = score_energy(frame.logits, cfg.weights.temperature);
  raw.density = score_density(frame.features, pack.class_means, pack.inv_cov, pack.id_memory, cfg.knn_k,
                              cfg.weights.eta, exclude_memory_row);
  raw.temporal = score_temporal(frame.features, history, cfg.metric, cfg.metric_epsilon);
  return raw;
}

StandardizedComponents standardize(const RawComponents& raw, const CalibrationPack& pack) {
  return {pack.ebo.standardize(raw.ebo), pack.dens.standardize(raw.density.density),
          pack.temp.standardize(raw.temporal.value)};
}

bool history_gap_exceeded(double previous_s, double current_s, const ScoringConfig& config) {
  return current_s - previous_s - config.hop_s >= config.reset_gap_s - 1e-9;
}

ComponentStats fit_score_stats(std::span<const FeatureFrame> stream, const CalibrationPack& pack,
                               std::span<const std::optional<Index>> memory_rows) {
  require(stream.size() >= 2, ErrorCode::kPrecondition, "need at least two training ID windows");
  require(memory_rows.empty() || memory_rows.size() == stream.size(), ErrorCode::kShape,
          "memory row map does not match the stream");
  std::vector<double> ebo, dens, temp;
  ebo.reserve(stream.size());
  dens.reserve(stream.size());
  temp.reserve(stream.size());
  FeatureHistory history;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& frame = stream[i];
    if (auto last = history.latest_time(); last && history_gap_exceeded(*last, frame.start_s, pack.scoring))
      history.clear();
    const auto exclude = memory_rows.empty() ? std::nullopt : memory_rows[i];
    const auto raw = compute_components(frame, history, pack, exclude);
    ebo.push_back(raw.ebo);
    dens.push_back(raw.density.density);
    if (raw.temporal.mature) temp.push_back(raw.temporal.value);
    history.push(frame.start_s, frame.features);
  }
  return {fit_moments(ebo, "ebo"), fit_moments(dens, "dens"), fit_moments(temp, "temp")};
}

std::vector<double> fused_stream_scores(std::span<const FeatureFrame> stream, const CalibrationPack& pack) {
  std::vector<double> scores;
  scores.reserve(stream.size());
  FeatureHistory history;
  for (const auto& frame : stream) {
    if (auto last = history.latest_time(); last && history_gap_exceeded(*last, frame.start_s, pack.scoring))
      history.clear();
    scores.push_back(fuse(standardize(compute_components(frame, history, pack), pack), pack.scoring.weights));
    history.push(frame.start_s, frame.features);
  }
  return scores;
}

CalibrationPack build_calibration(std::span<const FeatureFrame> stream, const LinearHead& head,
                                  const std::vector<std::string>& class_names, const CalibrationOptions& options) {
  options.scoring.validate();
  const auto labels = id_labels(stream);
  const std::size_t n_val = validation_count(stream.size(), options.validation_fraction);
  require(n_val >= 1 && stream.size() - n_val >= 2, ErrorCode::kPrecondition,
          "too few training ID windows for a fit/validation split");
  const auto fit = stream.first(stream.size() - n_val);
  const auto val = stream.last(n_val);
  const std::span<const int> fit_labels(labels.data(), fit.size());

  const int k = static_cast<int>(head.classes());
  CalibrationPack pack;
  pack.scoring = options.scoring;
  pack.class_names = class_names;
  pack.tau_quantile = options.tau_quantile;
  pack.lambda = options.lambda;

  const Matrix features = stack_features(fit);
  auto stats = fit_class_stats(features, fit_labels, k);
  pack.class_means = std::move(stats.class_means);
  pack.inv_cov = std::move(stats.inv_cov);

  // Memory: every fit frame, or a seeded uniform reservoir beyond the cap.
  std::vector<std::size_t> chosen(fit.size());
  std::iota(chosen.begin(), chosen.end(), 0);
  if (fit.size() > options.memory_cap) {
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> reservoir(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(options.memory_cap));
    for (std::size_t i = options.memory_cap; i < fit.size(); ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      const std::size_t j = pick(rng);
      if (j < options.memory_cap) reservoir[j] = i;
    }
    std::sort(reservoir.begin(), reservoir.end());
    chosen = std::move(reservoir);
  }
  std::vector<std::optional<Index>> memory_rows(fit.size());
  pack.id_memory.resize(static_cast<Index>(chosen.size()), features.cols());
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    pack.id_memory.row(static_cast<Index>(r)) = features.row(static_cast<Index>(chosen[r]));
    memory_rows[chosen[r]] = static_cast<Index>(r);
  }
  require(pack.id_memory.rows() > options.scoring.knn_k, ErrorCode::kPrecondition,
          "ID memory smaller than k + 1; lower k or provide more training windows");

  // Serialized packs carry f32 blocks; fit everything downstream on the rounded values.
  codec::round_to_f32(pack.class_means);
  codec::round_to_f32(pack.inv_cov);
  pack.inv_cov = 0.5 * (pack.inv_cov + pack.inv_cov.transpose()).eval();
  pack.id_memory = pack.id_memory.cast<float>().cast<double>();

  const auto moments = fit_score_stats(fit, pack, memory_rows);
  pack.ebo = moments.ebo;
  pack.dens = moments.dens;
  pack.temp = moments.temp;

  const auto val_scores = fused_stream_scores(val, pack);
  pack.tau = calibrate_tau(val_scores, options.tau_quantile);

  pack.baselines = fit_baseline_stats(features, fit_labels, head, options.baselines);
  return pack;
}

CalibrationPack with_temporal_metric(const CalibrationPack& pack, TemporalMetric metric,
                                     std::span<const FeatureFrame> stream, double validation_fraction) {
  id_labels(stream);
  const std::size_t n_val = validation_count(stream.size(), validation_fraction);
  require(n_val >= 1 && stream.size() - n_val >= 2, ErrorCode::kPrecondition, "too few training ID windows");
  CalibrationPack out = pack;
  out.scoring.metric = metric;
  const auto fit = stream.first(stream.size() - n_val);
  std::vector<double> temp;
  FeatureHistory history;
  for (const auto& frame : fit) {
    if (auto last = history.latest_time(); last && history_gap_exceeded(*last, frame.start_s, out.scoring))
      history.clear();
    const auto t = score_temporal(frame.features, history, metric, out.scoring.metric_epsilon);
    if (t.mature) temp.push_back(t.value);
    history.push(frame.start_s, frame.features);
  }
  out.temp = fit_moments(temp, "temp");
  out.tau = calibrate_tau(fused_stream_scores(stream.last(n_val), out), out.tau_quantile);
  return out;
}

nlohmann::json scoring_config_to_json(const ScoringConfig& c) {
  return {{"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"gamma", c.weights.gamma},
          {"temperature", c.weights.temperature},
          {"eta", c.weights.eta},
          {"knn_k", c.knn_k},
          {"temporal_metric", std::string(metric_name(c.metric))},
          {"metric_epsilon", c.metric_epsilon},
          {"reset_gap_s", c.reset_gap_s},
          {"hop_s", c.hop_s},
          {"aggregation_window", c.aggregation_window}};
}

ScoringConfig scoring_config_from_json(const nlohmann::json& j) {
  ScoringConfig c;
  c.weights.alpha = j.at("alpha").get<double>();
  c.weights.beta = j.at("beta").get<double>();
  c.weights.gamma = j.at("gamma").get<double>();
  c.weights.temperature = j.at("temperature").get<double>();
  c.weights.eta = j.at("eta").get<double>();
  c.knn_k = j.at("knn_k").get<int>();
  c.metric = parse_metric(j.at("temporal_metric").get<std::string>());
  c.metric_epsilon = j.at("metric_epsilon").get<double>();
  c.reset_gap_s = j.at("reset_gap_s").get<double>();
  c.hop_s = j.at("hop_s").get<double>();
  c.aggregation_window = j.at("aggregation_window").get<int>();
  c.validate();
  return c;
}

nlohmann::json calibration_to_json(const CalibrationPack& p) {
  auto stats = [](const ScoreStats& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
  return {{"format", kFormatTag},
          {"scoring", scoring_config_to_json(p.scoring)},
          {"class_names", p.class_names},
          {"class_means", codec::matrix_to_json(p.class_means)},
          {"inv_cov", codec::matrix_to_json(p.inv_cov)},
          {"id_memory", codec::matrix_to_json(p.id_memory)},
          {"score_stats", {{"ebo", stats(p.ebo)}, {"dens", stats(p.dens)}, {"temp", stats(p.temp)}}},
          {"tau", p.tau},
          {"tau_quantile", p.tau_quantile},
          {"lambda", p.lambda},
          {"baselines", baseline_stats_to_json(p.baselines)}};
}

CalibrationPack calibration_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == kFormatTag, ErrorCode::kParse, "unsupported calibration format");
    CalibrationPack p;
    p.scoring = scoring_config_from_json(j.at("scoring"));
    p.class_names = j.at("class_names").get<std::vector<std::string>>();
    p.class_means = codec::matrix_from_json(j.at("class_means"));
    p.inv_cov = codec::matrix_from_json(j.at("inv_cov"));
    p.id_memory = codec::matrix_from_json(j.at("id_memory"));
    auto stats = [](const nlohmann::json& s) {
      ScoreStats out{s.at("mean").get<double>(), s.at("std").get<double>()};
      require(out.std > 0.0, ErrorCode::kParse, "calibration has a non-positive score std");
      return out;
    };
    const auto& ss = j.at("score_stats");
    p.ebo = stats(ss.at("ebo"));
    p.dens = stats(ss.at("dens"));
    p.temp = stats(ss.at("temp"));
    p.tau = j.at("tau").get<double>();
    p.tau_quantile = j.at("tau_quantile").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.baselines = baseline_stats_from_json(j.at("baselines"));
    require(p.inv_cov.rows() == p.dim() && p.inv_cov.cols() == p.dim() && p.id_memory.cols() == p.dim(),
            ErrorCode::kShape, "calibration blocks have inconsistent dimensions");
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed calibration pack: ") + e.what());
  }
}

}  // namespace tempdens
