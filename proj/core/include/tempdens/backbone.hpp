#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/stream_io.hpp"
#include "tempdens/types.hpp"

namespace tempdens {

/// Per-window backbone output: logits z_t over K ID classes and features f_t.
struct FeatureFrame {
  double start_s = 0.0;
  std::size_t index = 0;
  Vector logits;
  Vector features;
  TrueState true_state;
  double coverage = 0.0;
};

struct CspFilters {
  Matrix filters;      // (2 * n_pairs) x C, most discriminative first within each end
  Vector eigenvalues;  // generalized eigenvalue of each filter row
};

/// Two-class common spatial patterns on trace-normalized, shrunk average covariances.
/// Rows: top `n_pairs` eigenvectors (descending), then bottom `n_pairs` (ascending).
CspFilters fit_csp(std::span<const Matrix> class_a, std::span<const Matrix> class_b, int n_pairs);

/// Trace-normalized covariance of one centered window.
Matrix normalized_covariance(const Matrix& samples);

/// log(var(filters * samples)) per filter row.
Vector extract_features(const Matrix& samples, const Matrix& filters);

struct LinearHead {
  Matrix weights;  // K x d
  Vector bias;     // K

  Vector logits(const Vector& features) const { return weights * features + bias; }
  Index classes() const { return weights.rows(); }
  Index dim() const { return weights.cols(); }
};

struct HeadTrainOptions {
  int epochs = 500;
  double lr = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct HeadObjective {
  double loss = 0.0;
  Matrix grad_weights;
  Vector grad_bias;
};

/// Mean multinomial cross-entropy + (l2/2)||W||^2 and its analytic gradient.
/// `features` is n x d, one sample per row.
HeadObjective head_objective(const LinearHead& head, const Matrix& features, std::span<const int> labels,
                             double l2);

struct HeadTrainResult {
  LinearHead head;
  std::vector<double> loss_history;  // loss after each epoch, index 0 = initial
};

/// Full-batch gradient descent from a seeded small random initialization.
/// Each epoch backtracks (halving) from `lr` until the loss does not increase.
HeadTrainResult train_head(const Matrix& features, std::span<const int> labels, int num_classes,
                           const HeadTrainOptions& options);
HeadTrainResult train_head(const Matrix& features, std::span<const int> labels, int num_classes,
                           const HeadTrainOptions& options, LinearHead initial);

/// Spatial filters + linear head. Used for both the Stage-II classifier and the
/// rest/task gate (K = 2, class 1 = task).
struct CspLinearModel {
  Matrix filters;  // d x C
  Vector eigenvalues;
  LinearHead head;
  bool trained = false;

  Index channels() const { return filters.cols(); }
  Index dim() const { return filters.rows(); }
};

struct ModelTrainOptions {
  int n_pairs = 3;
  HeadTrainOptions head;
};

/// Fits spatial filters and the head. K = 2 uses plain two-class CSP; K > 2
/// concatenates one-vs-rest filter banks.
CspLinearModel train_csp_linear_model(std::span<const Matrix> windows, std::span<const int> labels,
                                      int num_classes, const ModelTrainOptions& options);

struct NativeBackboneModel {
  CspLinearModel classifier;
  CspLinearModel gate;
  std::vector<std::string> class_names;  // by ID index
};

nlohmann::json model_to_json(const NativeBackboneModel& model);
NativeBackboneModel model_from_json(const nlohmann::json& j);

/// Logits and features of one window.
FeatureFrame infer(const WindowFrame& window, const CspLinearModel& model);

/// Source of gate probabilities and Stage-II outputs for the engine.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual double task_probability(const WindowFrame& window) const = 0;
  virtual FeatureFrame features(const WindowFrame& window) const = 0;
};

class NativeBackbone final : public Backbone {
 public:
  explicit NativeBackbone(const NativeBackboneModel& model) : model_(&model) {}
  double task_probability(const WindowFrame& window) const override;
  FeatureFrame features(const WindowFrame& window) const override;

 private:
  const NativeBackboneModel* model_;
};

/// Native gate + Stage-II outputs replayed from an exported feature file.
class ReplayBackbone final : public Backbone {
 public:
  ReplayBackbone(const CspLinearModel& gate, std::vector<FeatureFrame> frames);
  double task_probability(const WindowFrame& window) const override;
  FeatureFrame features(const WindowFrame& window) const override;

 private:
  const CspLinearModel* gate_;
  std::vector<FeatureFrame> frames_;
};

}  // namespace tempdens
