#include "tempdens/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/gate.hpp"

namespace tempdens {

namespace {

constexpr double kCspShrinkage = 1e-3;

Matrix average_covariance(std::span<const Matrix> windows, Index channels) {
  Matrix sum = Matrix::Zero(channels, channels);
  for (const auto& w : windows) {
    require(w.rows() == channels, ErrorCode::kShape, "windows have inconsistent channel counts");
    sum += normalized_covariance(w);
  }
  sum /= static_cast<double>(windows.size());
  sum.diagonal().array() += kCspShrinkage * sum.trace() / static_cast<double>(channels);
  return sum;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

Matrix normalized_covariance(const Matrix& samples) {
  require(samples.cols() >= 2, ErrorCode::kPrecondition, "window needs at least two samples");
  const Matrix centered = samples.colwise() - samples.rowwise().mean();
  Matrix cov = centered * centered.transpose() / static_cast<double>(samples.cols() - 1);
  const double trace = cov.trace();
  require(trace > 0.0 && std::isfinite(trace), ErrorCode::kSingular, "window covariance has zero trace");
  return cov / trace;
}

CspFilters fit_csp(std::span<const Matrix> class_a, std::span<const Matrix> class_b, int n_pairs) {
  require(class_a.size() >= 2 && class_b.size() >= 2, ErrorCode::kPrecondition,
          "CSP needs at least two windows per class");
  const Index channels = class_a.front().rows();
  require(n_pairs >= 1 && 2 * n_pairs <= channels, ErrorCode::kInvalidArgument,
          "n_pairs must be in [1, C/2]");
  const Matrix cov_a = average_covariance(class_a, channels);
  const Matrix cov_b = average_covariance(class_b, channels);
  const Matrix composite = cov_a + cov_b;
  Eigen::LLT<Matrix> llt(composite);
  require(llt.info() == Eigen::Success, ErrorCode::kSingular, "composite covariance is singular after shrinkage");

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(cov_a, composite);
  require(solver.info() == Eigen::Success, ErrorCode::kSingular, "generalized eigensolve failed");
  const Vector& values = solver.eigenvalues();  // ascending
  const Matrix& vectors = solver.eigenvectors();

  CspFilters out;
  out.filters.resize(2 * n_pairs, channels);
  out.eigenvalues.resize(2 * n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    const Index top = channels - 1 - i;
    out.filters.row(i) = vectors.col(top).transpose();
    out.eigenvalues(i) = values(top);
    out.filters.row(n_pairs + i) = vectors.col(i).transpose();
    out.eigenvalues(n_pairs + i) = values(i);
  }
  return out;
}

Vector extract_features(const Matrix& samples, const Matrix& filters) {
  require(samples.rows() == filters.cols(), ErrorCode::kShape,
          "window has " + std::to_string(samples.rows()) + " channels, filters expect " +
              std::to_string(filters.cols()));
  require(samples.cols() >= 2, ErrorCode::kPrecondition, "window needs at least two samples");
  const Matrix projected = filters * samples;
  Vector f(filters.rows());
  for (Index i = 0; i < projected.rows(); ++i) {
    const double mean = projected.row(i).mean();
    const double var = (projected.row(i).array() - mean).square().sum() / static_cast<double>(samples.cols() - 1);
    require(var > 0.0, ErrorCode::kZeroVariance, "zero variance on projected filter " + std::to_string(i));
    f(i) = std::log(var);
  }
  require(f.allFinite(), ErrorCode::kNonFinite, "non-finite log-variance features");
  return f;
}

HeadObjective head_objective(const LinearHead& head, const Matrix& features, std::span<const int> labels, double l2) {
  const Index n = features.rows();
  const Matrix logits = (features * head.weights.transpose()).rowwise() + head.bias.transpose();
  Matrix residual = softmax_rows(logits);
  double nll = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    nll += lse - logits(i, y);
    residual(i, y) -= 1.0;
  }
  HeadObjective out;
  out.loss = nll / static_cast<double>(n) + 0.5 * l2 * head.weights.squaredNorm();
  out.grad_weights = residual.transpose() * features / static_cast<double>(n) + l2 * head.weights;
  out.grad_bias = residual.colwise().sum().transpose() / static_cast<double>(n);
  return out;
}

HeadTrainResult train_head(const Matrix& features, std::span<const int> labels, int num_classes,
                           const HeadTrainOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  LinearHead init;
  init.weights = Matrix::NullaryExpr(num_classes, features.cols(), [&] { return normal(rng); });
  init.bias = Vector::Zero(num_classes);
  return train_head(features, labels, num_classes, options, std::move(init));
}

HeadTrainResult train_head(const Matrix& features, std::span<const int> labels, int num_classes,
                           const HeadTrainOptions& options, LinearHead initial) {
  require(num_classes >= 2, ErrorCode::kPrecondition, "head needs at least two classes");
  require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorCode::kShape,
          "feature rows and label count differ");
  require(initial.weights.rows() == num_classes && initial.weights.cols() == features.cols() &&
              initial.bias.size() == num_classes,
          ErrorCode::kShape, "initial head shape does not match data");
  require(options.epochs >= 0 && options.lr >= 0.0 && options.l2 >= 0.0, ErrorCode::kInvalidArgument,
          "epochs, lr and l2 must be non-negative");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const int y : labels) {
    require(y >= 0 && y < num_classes, ErrorCode::kPrecondition, "label " + std::to_string(y) + " out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c)
    require(counts[static_cast<std::size_t>(c)] > 0, ErrorCode::kPrecondition,
            "class " + std::to_string(c) + " has no training samples");

  HeadTrainResult result;
  result.head = std::move(initial);
  auto current = head_objective(result.head, features, labels, options.l2);
  require(std::isfinite(current.loss), ErrorCode::kNonFinite, "non-finite initial training loss");
  result.loss_history.push_back(current.loss);

  for (int epoch = 0; epoch < options.epochs && options.lr > 0.0; ++epoch) {
    double step = options.lr;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      LinearHead trial{result.head.weights - step * current.grad_weights, result.head.bias - step * current.grad_bias};
      auto next = head_objective(trial, features, labels, options.l2);
      if (std::isfinite(next.loss) && next.loss <= current.loss) {
        result.head = std::move(trial);
        current = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // stationary to machine precision
    result.loss_history.push_back(current.loss);
  }
  require(std::isfinite(current.loss), ErrorCode::kNonFinite, "non-finite training loss");
  return result;
}

CspLinearModel train_csp_linear_model(std::span<const Matrix> windows, std::span<const int> labels, int num_classes,
                                      const ModelTrainOptions& options) {
  require(windows.size() == labels.size(), ErrorCode::kShape, "window and label counts differ");
  require(num_classes >= 2, ErrorCode::kPrecondition, "need at least two classes");
  require(!windows.empty(), ErrorCode::kEmpty, "no training windows");

  auto split = [&](auto&& in_a) {
    std::vector<Matrix> a, b;
    for (std::size_t i = 0; i < windows.size(); ++i) (in_a(labels[i]) ? a : b).push_back(windows[i]);
    return std::pair{std::move(a), std::move(b)};
  };

  CspLinearModel model;
  if (num_classes == 2) {
    auto [a, b] = split([](int y) { return y == 0; });
    auto csp = fit_csp(a, b, options.n_pairs);
    model.filters = std::move(csp.filters);
    model.eigenvalues = std::move(csp.eigenvalues);
  } else {
    std::vector<Matrix> banks;
    std::vector<Vector> values;
    for (int c = 0; c < num_classes; ++c) {
      auto [a, b] = split([c](int y) { return y == c; });
      auto csp = fit_csp(a, b, options.n_pairs);
      banks.push_back(std::move(csp.filters));
      values.push_back(std::move(csp.eigenvalues));
    }
    const Index rows = banks.front().rows();
    model.filters.resize(rows * num_classes, banks.front().cols());
    model.eigenvalues.resize(rows * num_classes);
    for (int c = 0; c < num_classes; ++c) {
      model.filters.middleRows(c * rows, rows) = banks[static_cast<std::size_t>(c)];
      model.eigenvalues.segment(c * rows, rows) = values[static_cast<std::size_t>(c)];
    }
  }

  Matrix features(static_cast<Index>(windows.size()), model.filters.rows());
  for (std::size_t i = 0; i < windows.size(); ++i)
    features.row(static_cast<Index>(i)) = extract_features(windows[i], model.filters).transpose();
  model.head = train_head(features, labels, num_classes, options.head).head;
  model.trained = true;
  return model;
}

namespace {

nlohmann::json csp_model_to_json(const CspLinearModel& m) {
  return {{"trained", m.trained},
          {"filters", codec::matrix_to_json(m.filters)},
          {"eigenvalues", codec::vector_to_json(m.eigenvalues)},
          {"head_weights", codec::matrix_to_json(m.head.weights)},
          {"head_bias", codec::vector_to_json(m.head.bias)}};
}

CspLinearModel csp_model_from_json(const nlohmann::json& j) {
  CspLinearModel m;
  m.trained = j.at("trained").get<bool>();
  m.filters = codec::matrix_from_json(j.at("filters"));
  m.eigenvalues = codec::vector_from_json(j.at("eigenvalues"));
  m.head.weights = codec::matrix_from_json(j.at("head_weights"));
  m.head.bias = codec::vector_from_json(j.at("head_bias"));
  require(m.head.weights.cols() == m.filters.rows() && m.head.bias.size() == m.head.weights.rows(),
          ErrorCode::kShape, "checkpoint head shape does not match its filters");
  return m;
}

}  // namespace

nlohmann::json model_to_json(const NativeBackboneModel& model) {
  return {{"format", "tempdens-model/1"},
          {"class_names", model.class_names},
          {"classifier", csp_model_to_json(model.classifier)},
          {"gate", csp_model_to_json(model.gate)}};
}

NativeBackboneModel model_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "tempdens-model/1", ErrorCode::kParse,
            "unsupported model checkpoint format");
    NativeBackboneModel m;
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.classifier = csp_model_from_json(j.at("classifier"));
    m.gate = csp_model_from_json(j.at("gate"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed model checkpoint: ") + e.what());
  }
}

FeatureFrame infer(const WindowFrame& window, const CspLinearModel& model) {
  require(model.trained, ErrorCode::kUntrained, "model is not trained");
  FeatureFrame out;
  out.start_s = window.start_s;
  out.index = window.index;
  out.true_state = window.true_state;
  out.coverage = window.coverage;
  out.features = extract_features(window.samples, model.filters);
  out.logits = model.head.logits(out.features);
  return out;
}

double NativeBackbone::task_probability(const WindowFrame& window) const {
  return gate_probability(window, model_->gate);
}

FeatureFrame NativeBackbone::features(const WindowFrame& window) const {
  return infer(window, model_->classifier);
}

ReplayBackbone::ReplayBackbone(const CspLinearModel& gate, std::vector<FeatureFrame> frames)
    : gate_(&gate), frames_(std::move(frames)) {}

double ReplayBackbone::task_probability(const WindowFrame& window) const {
  return gate_probability(window, *gate_);
}

FeatureFrame ReplayBackbone::features(const WindowFrame& window) const {
  require(window.index < frames_.size(), ErrorCode::kSizeMismatch,
          "no replayed features for frame " + std::to_string(window.index));
  FeatureFrame f = frames_[window.index];
  f.start_s = window.start_s;
  f.true_state = window.true_state;
  f.coverage = window.coverage;
  return f;
}

}  // namespace tempdens
