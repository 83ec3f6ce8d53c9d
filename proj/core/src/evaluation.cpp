#include "tempdens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "tempdens/error.hpp"

namespace tempdens {

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require(!id_scores.empty() && !ood_scores.empty(), ErrorCode::kEmpty, "AUROC needs both ID and OOD scores");
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> items;
  items.reserve(id_scores.size() + ood_scores.size());
  for (const double s : id_scores) items.push_back({s, false});
  for (const double s : ood_scores) items.push_back({s, true});
  for (const auto& it : items) require(!std::isnan(it.score), ErrorCode::kNonFinite, "NaN score in AUROC input");
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the Mann-Whitney statistic, kept integral so ties stay exact.
  std::uint64_t twice_u = 0;
  std::uint64_t id_below = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::uint64_t id_tied = 0, ood_tied = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].ood ? ood_tied : id_tied) += 1;
      ++j;
    }
    twice_u += ood_tied * (2 * id_below + id_tied);
    id_below += id_tied;
    i = j;
  }
  const double pairs = static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

std::vector<CoverageBin> coverage_recall_curve(std::span<const GateObservation> observations, int n_bins) {
  require(n_bins >= 1, ErrorCode::kInvalidArgument, "coverage curve needs at least one bin");
  std::vector<std::size_t> members(static_cast<std::size_t>(n_bins), 0), hits(static_cast<std::size_t>(n_bins), 0);
  for (const auto& o : observations) {
    if (!o.truth.is_task() || o.coverage <= 0.0) continue;
    const auto bin = std::clamp<long>(static_cast<long>(std::ceil(o.coverage * n_bins)) - 1, 0, n_bins - 1);
    ++members[static_cast<std::size_t>(bin)];
    if (o.gated_task) ++hits[static_cast<std::size_t>(bin)];
  }
  std::vector<CoverageBin> out;
  for (int b = 0; b < n_bins; ++b) {
    const auto count = members[static_cast<std::size_t>(b)];
    if (count == 0) continue;
    CoverageBin bin;
    bin.lower = static_cast<double>(b) / n_bins;
    bin.upper = static_cast<double>(b + 1) / n_bins;
    bin.center = 0.5 * (bin.lower + bin.upper);
    bin.count = count;
    bin.recall = static_cast<double>(hits[static_cast<std::size_t>(b)]) / static_cast<double>(count);
    out.push_back(bin);
  }
  return out;
}

double gate_accuracy(std::span<const GateObservation> observations, bool ood_counts_as_task) {
  std::size_t total = 0, correct = 0;
  for (const auto& o : observations) {
    if (o.truth.kind == StateKind::kExcluded) continue;
    if (o.truth.kind == StateKind::kOod && !ood_counts_as_task) continue;
    ++total;
    if (o.truth.is_task() == o.gated_task) ++correct;
  }
  require(total > 0, ErrorCode::kEmpty, "gate accuracy over an empty evaluation set");
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<ScoredFrame> score_subject(const SubjectData& subject, const CalibrationPack& pack,
                                       const EvalOptions& options, bool with_baselines) {
  Engine engine(pack, options.gate);
  std::vector<ScoredFrame> out;
  for (const auto& step : subject.test) {
    double p_task = step.p_task;
    if (options.population == OodPopulation::kAllTaskTruth) p_task = step.truth.is_task() ? 1.0 : 0.0;
    const auto rec = engine.step(step.start_s, step.index, p_task, [&step] {
      require(step.frame.has_value(), ErrorCode::kPrecondition,
              "test step " + std::to_string(step.index) + " has no features");
      return *step.frame;
    });
    if (!rec.scored || !step.truth.is_task()) continue;
    ScoredFrame sf;
    sf.standardized = rec.standardized;
    sf.fused = rec.fused;
    sf.is_ood = step.truth.kind == StateKind::kOod;
    if (with_baselines) {
      const auto& frame = *engine.last_frame();
      const auto& recent = engine.recent_frames();
      const std::vector<FeatureFrame> window(recent.begin(), recent.end());
      const FeatureFrame aggregated = online_aggregate(window);
      for (const auto method : options.methods) {
        const std::string name(baseline_name(method));
        sf.offline[name] = score_baseline(method, frame, pack, options.baselines);
        sf.online[name] = score_baseline(method, aggregated, pack, options.baselines);
      }
    }
    out.push_back(std::move(sf));
  }
  return out;
}

namespace {

template <typename Extract>
std::optional<double> auroc_of(const std::vector<ScoredFrame>& frames, Extract extract) {
  std::vector<double> id, ood;
  for (const auto& f : frames) (f.is_ood ? ood : id).push_back(extract(f));
  if (id.empty() || ood.empty()) return std::nullopt;
  return auroc(id, ood);
}

}  // namespace

SubjectResult evaluate_subject(const SubjectData& subject, const EvalOptions& options) {
  SubjectResult r;
  r.subject = subject.subject;
  const auto frames = score_subject(subject, subject.pack, options, true);
  for (const auto& f : frames) (f.is_ood ? r.ood_frames : r.id_frames) += 1;
  r.tempdens = auroc_of(frames, [](const ScoredFrame& f) { return f.fused; });
  for (const auto method : options.methods) {
    const std::string name(baseline_name(method));
    r.offline[name] = auroc_of(frames, [&](const ScoredFrame& f) { return f.offline.at(name); });
    r.online[name] = auroc_of(frames, [&](const ScoredFrame& f) { return f.online.at(name); });
  }
  for (const auto& step : subject.test)
    r.observations.push_back({step.coverage, step.truth, gate_decide(step.p_task, options.gate.lambda) == GateDecision::kTask});
  auto safe = [&](bool with_ood) -> std::optional<double> {
    try {
      return gate_accuracy(r.observations, with_ood);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  r.gate_accuracy = safe(true);
  r.gate_accuracy_id_only = safe(false);
  return r;
}

std::optional<double> mean_of(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

DatasetReport evaluate_dataset(const DatasetData& dataset, const EvalOptions& options) {
  DatasetReport rep;
  rep.name = dataset.name;
  std::vector<GateObservation> pooled;
  for (const auto& s : dataset.subjects) {
    rep.subjects.push_back(evaluate_subject(s, options));
    const auto& obs = rep.subjects.back().observations;
    pooled.insert(pooled.end(), obs.begin(), obs.end());
  }
  auto column = [&](auto get) {
    std::vector<std::optional<double>> v;
    for (const auto& s : rep.subjects) v.push_back(get(s));
    return mean_of(v);
  };
  rep.tempdens_average = column([](const SubjectResult& s) { return s.tempdens; });
  for (const auto method : options.methods) {
    const std::string name(baseline_name(method));
    rep.offline_average[name] = column([&](const SubjectResult& s) { return s.offline.at(name); });
    rep.online_average[name] = column([&](const SubjectResult& s) { return s.online.at(name); });
  }
  rep.gate_accuracy = column([](const SubjectResult& s) { return s.gate_accuracy; });
  rep.gate_accuracy_id_only = column([](const SubjectResult& s) { return s.gate_accuracy_id_only; });
  rep.coverage_curve = coverage_recall_curve(pooled, options.coverage_bins);
  return rep;
}

std::vector<ComponentMask> default_ablation_masks() {
  return {{true, false, false}, {false, true, false}, {false, false, true}, {true, true, false},
          {true, false, true},  {false, true, true},  {true, true, true}};
}

std::string mask_label(const ComponentMask& m) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += name;
  };
  add(m.ebo, "ebo");
  add(m.dens, "dens");
  add(m.temp, "temp");
  return out;
}

namespace {

void finish_row(GridRow& row, const std::vector<std::string>& datasets) {
  std::vector<std::optional<double>> averages;
  for (const auto& name : datasets) {
    row.dataset_average[name] = mean_of(row.per_subject[name]);
    averages.push_back(row.dataset_average[name]);
  }
  row.average = mean_of(averages);
}

}  // namespace

Grid run_ablation(std::span<const DatasetData> datasets, std::span<const ComponentMask> masks,
                  const EvalOptions& options) {
  require(!masks.empty(), ErrorCode::kEmpty, "ablation grid is empty");
  Grid grid;
  std::vector<ComponentMask> unique;
  for (const auto& m : masks) {
    require(m.ebo || m.dens || m.temp, ErrorCode::kInvalidArgument, "the all-zero component mask is not allowed");
    if (std::find(unique.begin(), unique.end(), m) != unique.end()) {
      grid.warnings.push_back("duplicate mask '" + mask_label(m) + "' ignored");
      continue;
    }
    unique.push_back(m);
  }
  for (const auto& ds : datasets) grid.datasets.push_back(ds.name);
  grid.rows.resize(unique.size());
  for (std::size_t r = 0; r < unique.size(); ++r) grid.rows[r].label = mask_label(unique[r]);

  for (const auto& ds : datasets) {
    for (const auto& subject : ds.subjects) {
      const auto frames = score_subject(subject, subject.pack, options, false);
      const auto& w = subject.pack.scoring.weights;
      for (std::size_t r = 0; r < unique.size(); ++r) {
        const auto& m = unique[r];
        grid.rows[r].per_subject[ds.name].push_back(auroc_of(frames, [&](const ScoredFrame& f) {
          return (m.ebo ? w.alpha : 0.0) * f.standardized.ebo + (m.dens ? w.beta : 0.0) * f.standardized.dens +
                 (m.temp ? w.gamma : 0.0) * f.standardized.temp;
        }));
      }
    }
  }
  for (auto& row : grid.rows) finish_row(row, grid.datasets);
  return grid;
}

Grid run_metric_sweep(std::span<const DatasetData> datasets, std::span<const std::string> metric_names,
                      const EvalOptions& options) {
  require(!metric_names.empty(), ErrorCode::kEmpty, "metric sweep is empty");
  std::vector<TemporalMetric> metrics;
  for (const auto& name : metric_names) metrics.push_back(parse_metric(name));
  Grid grid;
  for (const auto& ds : datasets) grid.datasets.push_back(ds.name);
  grid.rows.resize(metrics.size());
  for (std::size_t r = 0; r < metrics.size(); ++r) grid.rows[r].label = std::string(metric_name(metrics[r]));

  for (const auto& ds : datasets) {
    for (const auto& subject : ds.subjects) {
      for (std::size_t r = 0; r < metrics.size(); ++r) {
        const auto pack =
            with_temporal_metric(subject.pack, metrics[r], subject.calibration_stream, options.validation_fraction);
        const auto frames = score_subject(subject, pack, options, false);
        grid.rows[r].per_subject[ds.name].push_back(auroc_of(frames, [](const ScoredFrame& f) { return f.fused; }));
      }
    }
  }
  for (auto& row : grid.rows) finish_row(row, grid.datasets);
  return grid;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << *v;
  return os.str();
}

nlohmann::json opt_map(const std::map<std::string, std::optional<double>>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[k] = opt(v);
  return j;
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["config"] = report.config;
  j["datasets"] = nlohmann::json::array();
  for (const auto& ds : report.datasets) {
    nlohmann::json d;
    d["name"] = ds.name;
    d["subjects"] = nlohmann::json::array();
    for (const auto& s : ds.subjects) {
      d["subjects"].push_back({{"subject", s.subject},
                               {"id_frames", s.id_frames},
                               {"ood_frames", s.ood_frames},
                               {"tempdens", opt(s.tempdens)},
                               {"offline", opt_map(s.offline)},
                               {"online", opt_map(s.online)},
                               {"gate_accuracy", opt(s.gate_accuracy)},
                               {"gate_accuracy_id_only", opt(s.gate_accuracy_id_only)}});
    }
    d["average"] = {{"tempdens", opt(ds.tempdens_average)},
                    {"offline", opt_map(ds.offline_average)},
                    {"online", opt_map(ds.online_average)},
                    {"gate_accuracy", opt(ds.gate_accuracy)},
                    {"gate_accuracy_id_only", opt(ds.gate_accuracy_id_only)}};
    d["coverage_curve"] = nlohmann::json::array();
    for (const auto& b : ds.coverage_curve)
      d["coverage_curve"].push_back(
          {{"lower", b.lower}, {"upper", b.upper}, {"center", b.center}, {"count", b.count}, {"recall", b.recall}});
    j["datasets"].push_back(d);
  }
  return j;
}

std::string ood_table_csv(const DatasetReport& ds) {
  std::ostringstream os;
  os << "setting,approach";
  for (const auto& s : ds.subjects) os << "," << s.subject;
  os << ",average\n";
  for (const auto& [name, avg] : ds.offline_average) {
    os << "offline," << name;
    for (const auto& s : ds.subjects) os << "," << cell(s.offline.at(name));
    os << "," << cell(avg) << "\n";
  }
  for (const auto& [name, avg] : ds.online_average) {
    os << "online," << name;
    for (const auto& s : ds.subjects) os << "," << cell(s.online.at(name));
    os << "," << cell(avg) << "\n";
  }
  os << "online,tempdens";
  for (const auto& s : ds.subjects) os << "," << cell(s.tempdens);
  os << "," << cell(ds.tempdens_average) << "\n";
  return os.str();
}

std::string gate_table_csv(const DatasetReport& ds) {
  std::ostringstream os;
  os << "subject,gate_accuracy,gate_accuracy_id_only\n";
  for (const auto& s : ds.subjects)
    os << s.subject << "," << cell(s.gate_accuracy) << "," << cell(s.gate_accuracy_id_only) << "\n";
  os << "average," << cell(ds.gate_accuracy) << "," << cell(ds.gate_accuracy_id_only) << "\n";
  return os.str();
}

std::string coverage_csv(const DatasetReport& ds) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,bin_center,count,recall\n";
  for (const auto& b : ds.coverage_curve)
    os << b.lower << "," << b.upper << "," << b.center << "," << b.count << "," << cell(b.recall) << "\n";
  return os.str();
}

std::string grid_csv(const Grid& grid, const std::string& label_header) {
  std::ostringstream os;
  os << label_header;
  for (const auto& d : grid.datasets) os << "," << d;
  os << ",average\n";
  for (const auto& row : grid.rows) {
    os << row.label;
    for (const auto& d : grid.datasets) os << "," << cell(row.dataset_average.at(d));
    os << "," << cell(row.average) << "\n";
  }
  return os.str();
}

nlohmann::json grid_to_json(const Grid& grid) {
  nlohmann::json j;
  j["datasets"] = grid.datasets;
  j["warnings"] = grid.warnings;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : grid.rows) {
    nlohmann::json r;
    r["label"] = row.label;
    r["average"] = opt(row.average);
    r["datasets"] = nlohmann::json::object();
    for (const auto& d : grid.datasets) {
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& c : row.per_subject.at(d)) cells.push_back(opt(c));
      r["datasets"][d] = {{"average", opt(row.dataset_average.at(d))}, {"subjects", cells}};
    }
    j["rows"].push_back(r);
  }
  return j;
}

}  // namespace tempdens
