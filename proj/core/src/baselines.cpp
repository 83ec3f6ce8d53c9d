#include "tempdens/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tempdens/calibration.hpp"
#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"

namespace tempdens {

std::string_view baseline_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::kMsp: return "msp";
    case BaselineMethod::kMaxLogit: return "maxlogit";
    case BaselineMethod::kOdinT: return "odin-t";
    case BaselineMethod::kEbo: return "ebo";
    case BaselineMethod::kReact: return "react";
    case BaselineMethod::kDice: return "dice";
    case BaselineMethod::kVim: return "vim";
    case BaselineMethod::kOpenMax: return "openmax";
    case BaselineMethod::kGradNorm: return "gradnorm";
    case BaselineMethod::kMahalanobis: return "mahalanobis";
    case BaselineMethod::kKnn: return "knn";
  }
  return "msp";
}

BaselineMethod parse_baseline(std::string_view name) {
  for (const auto m : kAllBaselines)
    if (baseline_name(m) == name) return m;
  if (name == "odin") return BaselineMethod::kOdinT;
  fail(ErrorCode::kUnknownName, "unknown baseline method '" + std::string(name) + "'");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"react_percentile", react_percentile}, {"dice_percentile", dice_percentile},
          {"vim_dim", vim_dim},                   {"openmax_tail", openmax_tail},
          {"openmax_alpha", openmax_alpha},       {"odin_temperature", odin_temperature},
          {"energy_temperature", energy_temperature}, {"knn_k", knn_k}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.react_percentile = j.value("react_percentile", c.react_percentile);
  c.dice_percentile = j.value("dice_percentile", c.dice_percentile);
  c.vim_dim = j.value("vim_dim", c.vim_dim);
  c.openmax_tail = j.value("openmax_tail", c.openmax_tail);
  c.openmax_alpha = j.value("openmax_alpha", c.openmax_alpha);
  c.odin_temperature = j.value("odin_temperature", c.odin_temperature);
  c.energy_temperature = j.value("energy_temperature", c.energy_temperature);
  c.knn_k = j.value("knn_k", c.knn_k);
  return c;
}

double WeibullFit::cdf(double x) const {
  if (x <= 0.0) return 0.0;
  return 1.0 - std::exp(-std::pow(x / scale, shape));
}

WeibullFit fit_weibull(std::span<const double> samples) {
  require(samples.size() >= 2, ErrorCode::kPrecondition, "Weibull fit needs at least two samples");
  const double top = *std::max_element(samples.begin(), samples.end());
  std::vector<double> x;
  x.reserve(samples.size());
  for (const double s : samples) {
    require(s > 0.0 && std::isfinite(s), ErrorCode::kPrecondition, "Weibull samples must be positive and finite");
    x.push_back(s / top);  // scale-free shape equation
  }
  const double mean_log = std::accumulate(x.begin(), x.end(), 0.0,
                                          [](double acc, double v) { return acc + std::log(v); }) /
                          static_cast<double>(x.size());
  require(mean_log < 0.0, ErrorCode::kPrecondition, "Weibull samples are all identical");

  // Profile-likelihood equation in the shape k, increasing in k:
  //   sum x^k ln x / sum x^k - 1/k - mean(ln x) = 0
  auto equation = [&](double k) {
    double num = 0.0, den = 0.0;
    for (const double v : x) {
      const double p = std::pow(v, k);
      num += p * std::log(v);
      den += p;
    }
    return num / den - 1.0 / k - mean_log;
  };
  double lo = std::log(1e-3), hi = std::log(1e4);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (equation(std::exp(mid)) < 0.0 ? lo : hi) = mid;
  }
  WeibullFit fit;
  fit.shape = std::exp(0.5 * (lo + hi));
  double moment = 0.0;
  for (const double v : x) moment += std::pow(v, fit.shape);
  fit.scale = top * std::pow(moment / static_cast<double>(x.size()), 1.0 / fit.shape);
  return fit;
}

double percentile(std::vector<double> values, double p) {
  require(!values.empty(), ErrorCode::kEmpty, "percentile of an empty set");
  require(p >= 0.0 && p <= 100.0, ErrorCode::kInvalidArgument, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vector& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Index argmax(const Vector& z) {
  Index best = 0;
  for (Index i = 1; i < z.size(); ++i)
    if (z(i) > z(best)) best = i;
  return best;
}

template <typename T>
const T& need(const std::optional<T>& value, const char* what) {
  require(value.has_value(), ErrorCode::kMissingStatistic, std::string("calibration lacks ") + what);
  return *value;
}

}  // namespace

BaselineStats fit_baseline_stats(const Matrix& features, std::span<const int> labels, const LinearHead& head,
                                 const BaselineConfig& config) {
  require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorCode::kShape,
          "feature rows and label count differ");
  require(features.rows() >= 2, ErrorCode::kPrecondition, "baseline statistics need at least two samples");
  require(head.dim() == features.cols(), ErrorCode::kShape, "head dimension differs from features");
  const Index n = features.rows();
  const Index d = features.cols();
  const Index k = head.classes();

  BaselineStats stats;
  stats.head = head;

  std::vector<double> all(features.data(), features.data() + features.size());
  stats.react_clamp = percentile(all, config.react_percentile);

  const Vector mean_feature = features.colwise().mean().transpose();
  Matrix mask = Matrix::Zero(k, d);
  for (Index c = 0; c < k; ++c) {
    const Vector contribution = head.weights.row(c).transpose().cwiseProduct(mean_feature);
    const double threshold = percentile(std::vector<double>(contribution.data(), contribution.data() + d),
                                        config.dice_percentile);
    for (Index j = 0; j < d; ++j) mask(c, j) = contribution(j) >= threshold ? 1.0 : 0.0;
  }
  stats.dice_mask = mask;

  // VIM: residual of features (relative to the head's null origin) outside the
  // principal ID subspace, scaled to the typical max logit.
  {
    VimStats vim;
    const Matrix pinv = head.weights.completeOrthogonalDecomposition().pseudoInverse();
    vim.origin = -pinv * head.bias;
    const Matrix centered = features.rowwise() - vim.origin.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Index principal = config.vim_dim > 0 ? std::min<Index>(config.vim_dim, d) : (d + 1) / 2;
    vim.residual_basis = eig.eigenvectors().leftCols(d - principal);  // ascending eigenvalues
    double residual_sum = 0.0, max_logit_sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      residual_sum += (vim.residual_basis.transpose() * centered.row(i).transpose()).norm();
      max_logit_sum += head.logits(features.row(i).transpose()).maxCoeff();
    }
    vim.alpha = residual_sum > 0.0 ? max_logit_sum / residual_sum : 1.0;
    stats.vim = vim;
  }

  // OpenMax: per-class mean logit vectors over correctly classified samples,
  // and Weibull tails of their distances.
  {
    OpenMaxStats om;
    om.mean_activations = Matrix::Zero(k, k);
    std::vector<std::vector<Vector>> correct(static_cast<std::size_t>(k));
    for (Index i = 0; i < n; ++i) {
      const Vector z = head.logits(features.row(i).transpose());
      const int y = labels[static_cast<std::size_t>(i)];
      if (argmax(z) == y) correct[static_cast<std::size_t>(y)].push_back(z);
    }
    bool complete = true;
    for (Index c = 0; c < k; ++c) {
      const auto& members = correct[static_cast<std::size_t>(c)];
      if (members.size() < 3) {
        complete = false;
        break;
      }
      Vector mav = Vector::Zero(k);
      for (const auto& z : members) mav += z;
      mav /= static_cast<double>(members.size());
      om.mean_activations.row(c) = mav.transpose();
      std::vector<double> distances;
      for (const auto& z : members) distances.push_back((z - mav).norm());
      std::sort(distances.begin(), distances.end(), std::greater<>());
      distances.resize(std::min<std::size_t>(distances.size(), static_cast<std::size_t>(config.openmax_tail)));
      std::erase_if(distances, [](double v) { return v <= 0.0; });
      if (distances.size() < 2 || distances.front() == distances.back()) {
        complete = false;
        break;
      }
      om.tails.push_back(fit_weibull(distances));
    }
    if (complete) stats.openmax = std::move(om);
  }
  return stats;
}

nlohmann::json baseline_stats_to_json(const BaselineStats& s) {
  nlohmann::json j = nlohmann::json::object();
  if (s.head) j["head"] = {{"weights", codec::matrix_to_json(s.head->weights)}, {"bias", codec::vector_to_json(s.head->bias)}};
  if (s.react_clamp) j["react_clamp"] = *s.react_clamp;
  if (s.dice_mask) j["dice_mask"] = codec::matrix_to_json(*s.dice_mask);
  if (s.vim)
    j["vim"] = {{"origin", codec::vector_to_json(s.vim->origin)},
                {"residual_basis", codec::matrix_to_json(s.vim->residual_basis)},
                {"alpha", s.vim->alpha}};
  if (s.openmax) {
    nlohmann::json tails = nlohmann::json::array();
    for (const auto& t : s.openmax->tails) tails.push_back({{"shape", t.shape}, {"scale", t.scale}});
    j["openmax"] = {{"mean_activations", codec::matrix_to_json(s.openmax->mean_activations)}, {"tails", tails}};
  }
  return j;
}

BaselineStats baseline_stats_from_json(const nlohmann::json& j) {
  BaselineStats s;
  if (j.contains("head"))
    s.head = LinearHead{codec::matrix_from_json(j["head"].at("weights")), codec::vector_from_json(j["head"].at("bias"))};
  if (j.contains("react_clamp")) s.react_clamp = j["react_clamp"].get<double>();
  if (j.contains("dice_mask")) s.dice_mask = codec::matrix_from_json(j["dice_mask"]);
  if (j.contains("vim")) {
    VimStats v;
    v.origin = codec::vector_from_json(j["vim"].at("origin"));
    v.residual_basis = codec::matrix_from_json(j["vim"].at("residual_basis"));
    v.alpha = j["vim"].at("alpha").get<double>();
    s.vim = std::move(v);
  }
  if (j.contains("openmax")) {
    OpenMaxStats o;
    o.mean_activations = codec::matrix_from_json(j["openmax"].at("mean_activations"));
    for (const auto& t : j["openmax"].at("tails")) o.tails.push_back({t.at("shape").get<double>(), t.at("scale").get<double>()});
    s.openmax = std::move(o);
  }
  return s;
}

double score_baseline(BaselineMethod method, const FeatureFrame& frame, const CalibrationPack& pack,
                      const BaselineConfig& config) {
  const Vector& z = frame.logits;
  const Vector& f = frame.features;
  require(z.size() >= 2, ErrorCode::kShape, "baseline scoring needs at least two logits");
  require(z.allFinite() && f.allFinite(), ErrorCode::kNonFinite, "non-finite frame");

  switch (method) {
    case BaselineMethod::kMsp:
      return 1.0 - softmax(z).maxCoeff();
    case BaselineMethod::kMaxLogit:
      return -z.maxCoeff();
    case BaselineMethod::kOdinT:
      return 1.0 - softmax(z / config.odin_temperature).maxCoeff();
    case BaselineMethod::kEbo:
      return score_energy(z, config.energy_temperature);
    case BaselineMethod::kReact: {
      const auto& head = need(pack.baselines.head, "the linear head");
      const double clamp = need(pack.baselines.react_clamp, "the ReAct clamp");
      return score_energy(head.logits(f.cwiseMin(clamp)), config.energy_temperature);
    }
    case BaselineMethod::kDice: {
      const auto& head = need(pack.baselines.head, "the linear head");
      const auto& mask = need(pack.baselines.dice_mask, "the DICE mask");
      return score_energy(head.weights.cwiseProduct(mask) * f + head.bias, config.energy_temperature);
    }
    case BaselineMethod::kVim: {
      const auto& vim = need(pack.baselines.vim, "VIM statistics");
      require(vim.origin.size() == f.size(), ErrorCode::kShape, "VIM dimension mismatch");
      const double residual = (vim.residual_basis.transpose() * (f - vim.origin)).norm();
      return vim.alpha * residual - log_sum_exp(z);
    }
    case BaselineMethod::kOpenMax: {
      const auto& om = need(pack.baselines.openmax, "OpenMax statistics");
      const Index k = z.size();
      require(om.mean_activations.rows() == k, ErrorCode::kShape, "OpenMax class count mismatch");
      const Index alpha = config.openmax_alpha > 0 ? std::min<Index>(config.openmax_alpha, k) : k;
      std::vector<Index> order(static_cast<std::size_t>(k));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return z(a) > z(b); });
      Vector revised(k + 1);
      double unknown = 0.0;
      for (Index rank = 0; rank < k; ++rank) {
        const Index c = order[static_cast<std::size_t>(rank)];
        const double rank_weight = rank < alpha ? static_cast<double>(alpha - rank) / static_cast<double>(alpha) : 0.0;
        const double distance = (z - om.mean_activations.row(c).transpose()).norm();
        const double w = 1.0 - rank_weight * om.tails[static_cast<std::size_t>(c)].cdf(distance);
        revised(c + 1) = z(c) * w;
        unknown += z(c) * (1.0 - w);
      }
      revised(0) = unknown;
      return softmax(revised)(0);
    }
    case BaselineMethod::kGradNorm: {
      // || d KL(u || softmax(Wf + b)) / dW ||_1 = sum_k |p_k - 1/K| * sum_j |f_j|
      const Vector p = softmax(z);
      const double k = static_cast<double>(z.size());
      return -((p.array() - 1.0 / k).abs().sum() * f.cwiseAbs().sum());
    }
    case BaselineMethod::kMahalanobis:
      return score_mahalanobis(f, pack.class_means, pack.inv_cov);
    case BaselineMethod::kKnn:
      return score_knn(f, pack.id_memory, config.knn_k);
  }
  fail(ErrorCode::kUnknownName, "unknown baseline method");
}

}  // namespace tempdens
