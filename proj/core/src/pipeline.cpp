#include "tempdens/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/feature_file.hpp"
#include "tempdens/filter.hpp"
#include "tempdens/gate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tempdens {

namespace {

const std::vector<std::string> kConfigKeys{
    "data_root", "out", "dataset", "subjects", "window_len_s", "hop_s", "exclusion_s", "band",
    "gate_threshold", "fusion", "knn_k", "temporal_metric", "aggregation_window", "reset_gap_s",
    "tau_quantile", "validation_fraction", "memory_cap", "methods", "ood_population", "n_pairs", "head",
    "min_train_coverage", "features_dir", "ablation_metrics", "baselines", "seed", "jobs"};

// Sessions seen by one run are laid end to end on a single clock with a gap
// wide enough to force a history reset between them.
constexpr double kSessionGapS = 10.0;

SegmentConfig segment_config(const RunConfig& c) { return {c.window_len_s, c.hop_s, c.exclusion_s}; }

ScoringConfig scoring_config(const RunConfig& c) {
  ScoringConfig s;
  s.weights = c.fusion;
  s.knn_k = c.knn_k;
  s.metric = parse_metric(c.temporal_metric);
  s.reset_gap_s = c.reset_gap_s;
  s.hop_s = c.hop_s;
  s.aggregation_window = c.aggregation_window;
  return s;
}

std::vector<BaselineMethod> methods_of(const RunConfig& c) {
  if (c.methods.empty()) return {kAllBaselines.begin(), kAllBaselines.end()};
  std::vector<BaselineMethod> out;
  for (const auto& name : c.methods) out.push_back(parse_baseline(name));
  return out;
}

EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o;
  o.gate.lambda = c.gate_threshold;
  o.population = c.ood_population == "gated" ? OodPopulation::kGated : OodPopulation::kAllTaskTruth;
  o.methods = methods_of(c);
  o.baselines = c.baselines;
  o.baselines.knn_k = c.knn_k;
  o.baselines.energy_temperature = c.fusion.temperature;
  o.validation_fraction = c.validation_fraction;
  return o;
}

/// Config fields that do not change any output are left out of the hash.
json hashed_config(const RunConfig& c) {
  json j = run_config_to_json(c);
  j.erase("out");
  j.erase("jobs");
  return j;
}

json provenance(const RunConfig& c, const std::string& content) {
  const json cfg = hashed_config(c);
  return {{"config", run_config_to_json(c)},
          {"config_sha256", codec::sha256_hex(cfg.dump())},
          {"content_sha256", codec::sha256_hex(content)}};
}

void write_json_artifact(const fs::path& path, json payload, const RunConfig& c, CommandResult& result,
                         std::mutex* lock = nullptr) {
  const std::string body = payload.dump();
  payload["provenance"] = provenance(c, body);
  codec::write_file_atomic(path, payload.dump(1) + "\n");
  if (lock) {
    std::lock_guard<std::mutex> g(*lock);
    result.written.push_back(path);
  } else {
    result.written.push_back(path);
  }
}

/// Text artifacts (CSV, JSONL) carry provenance in a `<name>.provenance.json` sidecar.
void write_text_artifact(const fs::path& path, const std::string& text, const RunConfig& c, CommandResult& result,
                         std::mutex* lock = nullptr) {
  codec::write_file_atomic(path, text);
  fs::path sidecar = path;
  sidecar += ".provenance.json";
  codec::write_file_atomic(sidecar, provenance(c, text).dump(1) + "\n");
  std::unique_lock<std::mutex> g;
  if (lock) g = std::unique_lock<std::mutex>(*lock);
  result.written.push_back(path);
  result.written.push_back(sidecar);
}

std::optional<json> load_if_current(const fs::path& path, const RunConfig& c) {
  if (!fs::exists(path)) return std::nullopt;
  json j = json::parse(codec::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("provenance")) return std::nullopt;
  if (j["provenance"].value("config_sha256", "") != codec::sha256_hex(hashed_config(c).dump())) return std::nullopt;
  j.erase("provenance");
  return j;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_lock;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(error_lock);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct LoadedSession {
  fs::path manifest_path;
  SessionManifest manifest;
  Matrix filtered;
};

LoadedSession load_filtered(const fs::path& path, const RunConfig& c) {
  Session s = load_session(path);
  LoadedSession out;
  out.manifest_path = path;
  out.filtered = bandpass(s.signal, c.band_low_hz, c.band_high_hz, s.manifest.sampling_rate);
  out.manifest = std::move(s.manifest);
  return out;
}

std::vector<std::string> id_class_names(const SessionManifest& m) {
  std::vector<std::string> names(static_cast<std::size_t>(m.id_class_count()));
  for (const auto& [name, a] : m.class_map)
    if (a.role == ClassRole::kId) names[static_cast<std::size_t>(a.index)] = name;
  return names;
}

fs::path feature_file_for(const RunConfig& c, const fs::path& manifest_path) {
  return c.features_dir / (manifest_path.stem().string() + ".features");
}

/// Stage-II outputs for every frame of a session, replayed or computed natively.
std::vector<FeatureFrame> session_features(const LoadedSession& s, const WindowStream& stream,
                                           const NativeBackboneModel& model, const RunConfig& c,
                                           const std::vector<bool>& wanted) {
  std::vector<FeatureFrame> frames(stream.size());
  if (!c.features_dir.empty()) {
    auto replayed = replay_provider(feature_file_for(c, s.manifest_path), stream.labels());
    for (std::size_t i = 0; i < frames.size(); ++i)
      if (wanted[i]) frames[i] = std::move(replayed[i]);
    return frames;
  }
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (wanted[i]) frames[i] = infer(stream.frame(i), model.classifier);
  return frames;
}

bool usable_for_training(const FrameLabel& l, const RunConfig& c) {
  return l.true_state.kind == StateKind::kId && l.coverage >= c.min_train_coverage;
}

NativeBackboneModel train_subject(const SubjectSessions& subject, const RunConfig& c) {
  require(!subject.train.empty(), ErrorCode::kConfig, "subject " + subject.subject + " has no training sessions");
  std::vector<Matrix> gate_windows, class_windows;
  std::vector<int> gate_labels, class_labels;
  std::vector<std::string> names;
  std::vector<FeatureFrame> replay_frames;
  for (const auto& path : subject.train) {
    const LoadedSession s = load_filtered(path, c);
    const auto these = id_class_names(s.manifest);
    if (names.empty()) names = these;
    require(names == these, ErrorCode::kConfig, "training sessions of " + subject.subject + " disagree on ID classes");
    WindowStream stream(s.filtered, s.manifest, segment_config(c));
    std::vector<bool> wanted(stream.size(), false);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const FrameLabel& l = stream.labels()[i];
      if (l.true_state.kind == StateKind::kRest) {
        gate_windows.push_back(stream.frame(i).samples);
        gate_labels.push_back(0);
      } else if (usable_for_training(l, c)) {
        Matrix w = stream.frame(i).samples;
        gate_windows.push_back(w);
        gate_labels.push_back(1);
        class_labels.push_back(l.true_state.class_index);
        class_windows.push_back(std::move(w));
        wanted[i] = true;
      }
    }
    if (!c.features_dir.empty()) {
      auto frames = session_features(s, stream, {}, c, wanted);
      for (std::size_t i = 0; i < frames.size(); ++i)
        if (wanted[i]) replay_frames.push_back(std::move(frames[i]));
    }
  }
  ModelTrainOptions options;
  options.n_pairs = c.n_pairs;
  options.head = c.head;
  options.head.seed = c.seed;
  NativeBackboneModel model;
  model.class_names = names;
  model.gate = train_csp_linear_model(gate_windows, gate_labels, 2, options);
  if (c.features_dir.empty()) {
    model.classifier =
        train_csp_linear_model(class_windows, class_labels, static_cast<int>(names.size()), options);
  } else {
    // No spatial filters: the classifier slot only carries the replayed model's readout.
    model.classifier.head = fit_linear_readout(replay_frames);
    model.classifier.filters = Matrix(model.classifier.head.dim(), 0);
    model.classifier.eigenvalues = Vector(0);
    model.classifier.trained = false;
  }
  return model;
}

std::string subject_key(const SubjectSessions& s) { return s.dataset + "/" + s.subject; }

fs::path model_path(const RunConfig& c, const SubjectSessions& s) {
  return c.out / "models" / s.dataset / (s.subject + ".json");
}
fs::path calibration_path(const RunConfig& c, const SubjectSessions& s) {
  return c.out / "calibration" / s.dataset / (s.subject + ".json");
}

NativeBackboneModel ensure_model(const SubjectSessions& s, const RunConfig& c, CommandResult& result,
                                 std::mutex& lock) {
  const auto path = model_path(c, s);
  if (auto j = load_if_current(path, c)) return model_from_json(*j);
  NativeBackboneModel model = train_subject(s, c);
  fs::create_directories(path.parent_path());
  write_json_artifact(path, model_to_json(model), c, result, &lock);
  return model_from_json(model_to_json(model));  // f32-rounded, identical to a reload
}

/// Training ID frames (coverage >= min_train_coverage) on one clock.
std::vector<FeatureFrame> calibration_stream(const SubjectSessions& s, const NativeBackboneModel& model,
                                             const RunConfig& c) {
  std::vector<FeatureFrame> out;
  double offset = 0.0;
  for (const auto& path : s.train) {
    const LoadedSession session = load_filtered(path, c);
    WindowStream stream(session.filtered, session.manifest, segment_config(c));
    std::vector<bool> wanted(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) wanted[i] = usable_for_training(stream.labels()[i], c);
    auto frames = session_features(session, stream, model, c, wanted);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!wanted[i]) continue;
      frames[i].start_s += offset;
      out.push_back(std::move(frames[i]));
    }
    offset += static_cast<double>(session.filtered.cols()) / session.manifest.sampling_rate + kSessionGapS;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

CalibrationOptions calibration_options(const RunConfig& c) {
  CalibrationOptions o;
  o.scoring = scoring_config(c);
  o.baselines = eval_options(c).baselines;
  o.validation_fraction = c.validation_fraction;
  o.tau_quantile = c.tau_quantile;
  o.lambda = c.gate_threshold;
  o.memory_cap = c.memory_cap;
  o.seed = c.seed;
  return o;
}

struct SubjectState {
  NativeBackboneModel model;
  CalibrationPack pack;
  std::vector<FeatureFrame> stream;
};

SubjectState ensure_calibrated(const SubjectSessions& s, const RunConfig& c, CommandResult& result,
                               std::mutex& lock, bool need_stream) {
  SubjectState st;
  st.model = ensure_model(s, c, result, lock);
  const auto path = calibration_path(c, s);
  auto cached = load_if_current(path, c);
  if (cached && !need_stream) {
    st.pack = calibration_from_json(*cached);
    return st;
  }
  st.stream = calibration_stream(s, st.model, c);
  if (cached) {
    st.pack = calibration_from_json(*cached);
    return st;
  }
  st.pack = build_calibration(st.stream, st.model.classifier.head, st.model.class_names, calibration_options(c));
  fs::create_directories(path.parent_path());
  write_json_artifact(path, calibration_to_json(st.pack), c, result, &lock);
  st.pack = calibration_from_json(calibration_to_json(st.pack));
  return st;
}

struct TestSession {
  fs::path manifest_path;
  std::vector<TestStep> steps;
};

/// Gate probability and Stage-II outputs for every non-excluded frame of each test session.
std::vector<TestSession> test_sessions(const SubjectSessions& s, const NativeBackboneModel& model,
                                       const RunConfig& c) {
  std::vector<TestSession> out;
  for (const auto& path : s.test) {
    const LoadedSession session = load_filtered(path, c);
    const auto names = id_class_names(session.manifest);
    require(names == model.class_names, ErrorCode::kConfig,
            "test session " + path.filename().string() + " disagrees with the trained ID classes");
    WindowStream stream(session.filtered, session.manifest, segment_config(c));
    std::vector<bool> wanted(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i)
      wanted[i] = stream.labels()[i].true_state.kind != StateKind::kExcluded;
    auto frames = session_features(session, stream, model, c, wanted);
    TestSession ts;
    ts.manifest_path = path;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const FrameLabel& l = stream.labels()[i];
      TestStep step;
      step.start_s = l.start_s;
      step.index = l.index;
      step.truth = l.true_state;
      step.coverage = l.coverage;
      if (wanted[i]) {
        step.p_task = gate_probability(stream.frame(i), model.gate);
        step.frame = std::move(frames[i]);
      }
      ts.steps.push_back(std::move(step));
    }
    out.push_back(std::move(ts));
  }
  return out;
}

std::vector<DatasetData> build_datasets(const std::vector<SubjectSessions>& subjects, const RunConfig& c,
                                        CommandResult& result) {
  std::vector<SubjectData> data(subjects.size());
  std::mutex lock;
  parallel_for(subjects.size(), c.jobs, [&](std::size_t i) {
    const auto& s = subjects[i];
    require(!s.test.empty(), ErrorCode::kConfig, "subject " + subject_key(s) + " has no test sessions");
    SubjectState st = ensure_calibrated(s, c, result, lock, true);
    SubjectData d;
    d.subject = s.subject;
    d.pack = std::move(st.pack);
    d.calibration_stream = std::move(st.stream);
    double offset = 0.0;
    std::size_t index = 0;
    for (auto& ts : test_sessions(s, st.model, c)) {
      double end = 0.0;
      for (auto& step : ts.steps) {
        end = step.start_s;
        step.start_s += offset;
        step.index = index++;
        if (step.frame) {
          step.frame->start_s = step.start_s;
          step.frame->index = step.index;
        }
        d.test.push_back(std::move(step));
      }
      offset += end + c.window_len_s + kSessionGapS;
    }
    data[i] = std::move(d);
  });
  std::vector<DatasetData> datasets;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (datasets.empty() || datasets.back().name != subjects[i].dataset)
      datasets.push_back({subjects[i].dataset, {}});
    datasets.back().subjects.push_back(std::move(data[i]));
  }
  return datasets;
}

std::vector<SubjectSessions> selected_subjects(const RunConfig& c) {
  c.validate();
  auto subjects = discover_subjects(c);
  require(!subjects.empty(), ErrorCode::kConfig, "no subjects found under " + c.data_root.string());
  return subjects;
}

}  // namespace

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kConfig, what); };
  check(!data_root.empty(), "data_root is required");
  check(window_len_s > 0.0 && hop_s > 0.0 && exclusion_s >= 0.0, "window_len_s and hop_s must be positive");
  check(band_low_hz > 0.0 && band_low_hz < band_high_hz, "band must satisfy 0 < low < high");
  check(gate_threshold >= 0.0 && gate_threshold <= 1.0, "gate_threshold must lie in [0, 1]");
  check(tau_quantile > 0.0 && tau_quantile <= 1.0, "tau_quantile must lie in (0, 1]");
  check(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must lie in (0, 1)");
  check(memory_cap > static_cast<std::size_t>(std::max(knn_k, 0)), "memory_cap must exceed knn_k");
  check(ood_population == "gated" || ood_population == "all-task", "ood_population must be gated or all-task");
  check(n_pairs >= 1, "n_pairs must be at least 1");
  check(head.epochs >= 0 && head.lr > 0.0 && head.l2 >= 0.0, "head options must satisfy epochs >= 0, lr > 0, l2 >= 0");
  check(min_train_coverage > 0.0 && min_train_coverage <= 1.0, "min_train_coverage must lie in (0, 1]");
  check(jobs >= 1, "jobs must be at least 1");
  scoring_config(*this).validate();
  for (const auto& m : methods) parse_baseline(m);
  for (const auto& m : ablation_metrics) parse_metric(m);
}

json run_config_to_json(const RunConfig& c) {
  return {{"data_root", c.data_root.string()},
          {"out", c.out.string()},
          {"dataset", c.dataset},
          {"subjects", c.subjects},
          {"window_len_s", c.window_len_s},
          {"hop_s", c.hop_s},
          {"exclusion_s", c.exclusion_s},
          {"band", {c.band_low_hz, c.band_high_hz}},
          {"gate_threshold", c.gate_threshold},
          {"fusion",
           {{"alpha", c.fusion.alpha},
            {"beta", c.fusion.beta},
            {"gamma", c.fusion.gamma},
            {"temperature", c.fusion.temperature},
            {"eta", c.fusion.eta}}},
          {"knn_k", c.knn_k},
          {"temporal_metric", c.temporal_metric},
          {"aggregation_window", c.aggregation_window},
          {"reset_gap_s", c.reset_gap_s},
          {"tau_quantile", c.tau_quantile},
          {"validation_fraction", c.validation_fraction},
          {"memory_cap", c.memory_cap},
          {"methods", c.methods},
          {"ood_population", c.ood_population},
          {"n_pairs", c.n_pairs},
          {"head", {{"epochs", c.head.epochs}, {"lr", c.head.lr}, {"l2", c.head.l2}}},
          {"min_train_coverage", c.min_train_coverage},
          {"features_dir", c.features_dir.string()},
          {"ablation_metrics", c.ablation_metrics},
          {"baselines", c.baselines.to_json()},
          {"seed", c.seed},
          {"jobs", c.jobs}};
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  require(j.is_object(), ErrorCode::kConfig, "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(std::find(kConfigKeys.begin(), kConfigKeys.end(), key) != kConfigKeys.end(), ErrorCode::kConfig,
            "unknown config key '" + key + "'");
  try {
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("subjects")) c.subjects = j["subjects"].get<std::vector<std::string>>();
    c.window_len_s = j.value("window_len_s", c.window_len_s);
    c.hop_s = j.value("hop_s", c.hop_s);
    c.exclusion_s = j.value("exclusion_s", c.exclusion_s);
    if (j.contains("band")) {
      const auto band = j["band"].get<std::vector<double>>();
      require(band.size() == 2, ErrorCode::kConfig, "band must be [low, high]");
      c.band_low_hz = band[0];
      c.band_high_hz = band[1];
    }
    c.gate_threshold = j.value("gate_threshold", c.gate_threshold);
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      c.fusion.alpha = f.value("alpha", c.fusion.alpha);
      c.fusion.beta = f.value("beta", c.fusion.beta);
      c.fusion.gamma = f.value("gamma", c.fusion.gamma);
      c.fusion.temperature = f.value("temperature", c.fusion.temperature);
      c.fusion.eta = f.value("eta", c.fusion.eta);
    }
    c.knn_k = j.value("knn_k", c.knn_k);
    c.temporal_metric = j.value("temporal_metric", c.temporal_metric);
    c.aggregation_window = j.value("aggregation_window", c.aggregation_window);
    c.reset_gap_s = j.value("reset_gap_s", c.reset_gap_s);
    c.tau_quantile = j.value("tau_quantile", c.tau_quantile);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.memory_cap = j.value("memory_cap", c.memory_cap);
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    c.ood_population = j.value("ood_population", c.ood_population);
    c.n_pairs = j.value("n_pairs", c.n_pairs);
    if (j.contains("head")) {
      c.head.epochs = j["head"].value("epochs", c.head.epochs);
      c.head.lr = j["head"].value("lr", c.head.lr);
      c.head.l2 = j["head"].value("l2", c.head.l2);
    }
    c.min_train_coverage = j.value("min_train_coverage", c.min_train_coverage);
    if (j.contains("features_dir")) c.features_dir = j["features_dir"].get<std::string>();
    if (j.contains("ablation_metrics")) c.ablation_metrics = j["ablation_metrics"].get<std::vector<std::string>>();
    if (j.contains("baselines")) {
      json merged = c.baselines.to_json();
      merged.update(j["baselines"]);
      c.baselines = BaselineConfig::from_json(merged);
    }
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
  }
  return c;
}

std::vector<SubjectSessions> discover_subjects(const RunConfig& c) {
  require(fs::is_directory(c.data_root), ErrorCode::kIo, "data root " + c.data_root.string() + " does not exist");
  auto manifests_in = [](const fs::path& dir) {
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
      const json j = json::parse(codec::read_file(entry.path()), nullptr, false);
      if (j.is_object() && j.contains("subject_id") && j.contains("class_map")) found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    return found;
  };
  std::vector<std::pair<std::string, std::vector<fs::path>>> groups;
  if (auto top = manifests_in(c.data_root); !top.empty()) {
    const std::string name = c.dataset.empty() ? fs::absolute(c.data_root).lexically_normal().filename().string()
                                               : c.dataset;
    groups.emplace_back(name.empty() ? "dataset" : name, std::move(top));
  } else {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(c.data_root))
      if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
      if (auto found = manifests_in(d); !found.empty()) groups.emplace_back(d.filename().string(), std::move(found));
  }

  std::vector<SubjectSessions> out;
  for (const auto& [dataset, paths] : groups) {
    std::map<std::string, SubjectSessions> by_subject;
    for (const auto& p : paths) {
      const SessionManifest m = manifest_from_json(json::parse(codec::read_file(p)));
      if (!c.subjects.empty() &&
          std::find(c.subjects.begin(), c.subjects.end(), m.subject_id) == c.subjects.end())
        continue;
      auto& s = by_subject[m.subject_id];
      s.dataset = dataset;
      s.subject = m.subject_id;
      if (m.split == "train")
        s.train.push_back(p);
      else if (m.split == "test")
        s.test.push_back(p);
      else
        fail(ErrorCode::kConfig, "manifest " + p.string() + " has no train/test split");
    }
    for (auto& [_, s] : by_subject) out.push_back(std::move(s));
  }
  return out;
}

LinearHead fit_linear_readout(const std::vector<FeatureFrame>& frames) {
  require(!frames.empty(), ErrorCode::kEmpty, "no frames to fit a readout on");
  const Index d = frames.front().features.size();
  const Index k = frames.front().logits.size();
  Matrix x(static_cast<Index>(frames.size()), d + 1);
  Matrix z(static_cast<Index>(frames.size()), k);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto r = static_cast<Index>(i);
    x.row(r).head(d) = frames[i].features.transpose();
    x(r, d) = 1.0;
    z.row(r) = frames[i].logits.transpose();
  }
  const Matrix coef = x.completeOrthogonalDecomposition().solve(z);  // (d+1) x K
  LinearHead head;
  head.weights = coef.topRows(d).transpose();
  head.bias = coef.row(d).transpose();
  return head;
}

CommandResult cmd_train(const RunConfig& c) {
  const auto subjects = selected_subjects(c);
  CommandResult result;
  std::mutex lock;
  parallel_for(subjects.size(), c.jobs, [&](std::size_t i) { ensure_model(subjects[i], c, result, lock); });
  result.summary = {{"subjects", subjects.size()}};
  return result;
}

CommandResult cmd_calibrate(const RunConfig& c) {
  const auto subjects = selected_subjects(c);
  CommandResult result;
  std::mutex lock;
  std::vector<double> taus(subjects.size());
  parallel_for(subjects.size(), c.jobs,
               [&](std::size_t i) { taus[i] = ensure_calibrated(subjects[i], c, result, lock, false).pack.tau; });
  json per = json::object();
  for (std::size_t i = 0; i < subjects.size(); ++i) per[subject_key(subjects[i])] = {{"tau", taus[i]}};
  result.summary = {{"subjects", per}};
  return result;
}

CommandResult cmd_replay(const RunConfig& c) {
  const auto subjects = selected_subjects(c);
  CommandResult result;
  std::mutex lock;
  GateConfig gate;
  gate.lambda = c.gate_threshold;
  std::vector<json> summaries(subjects.size());
  parallel_for(subjects.size(), c.jobs, [&](std::size_t i) {
    const auto& s = subjects[i];
    const SubjectState st = ensure_calibrated(s, c, result, lock, false);
    json per = json::object();
    for (const auto& ts : test_sessions(s, st.model, c)) {
      Engine engine(st.pack, gate);
      std::vector<DecisionRecord> records;
      std::map<std::string, std::size_t> counts;
      for (const auto& step : ts.steps) {
        if (step.truth.kind == StateKind::kExcluded) continue;
        records.push_back(engine.step(step.start_s, step.index, step.p_task, [&] { return *step.frame; }));
        ++counts[std::string(decision_name(records.back().decision))];
      }
      const auto path = c.out / "decisions" / s.dataset / (s.subject + "_" + ts.manifest_path.stem().string() + ".jsonl");
      fs::create_directories(path.parent_path());
      write_text_artifact(path, records_to_jsonl(records), c, result, &lock);
      per[ts.manifest_path.stem().string()] = counts;
    }
    summaries[i] = per;
  });
  json summary = json::object();
  for (std::size_t i = 0; i < subjects.size(); ++i) summary[subject_key(subjects[i])] = summaries[i];
  result.summary = {{"decisions", summary}};
  return result;
}

CommandResult cmd_eval(const RunConfig& c) {
  const auto subjects = selected_subjects(c);
  CommandResult result;
  const auto datasets = build_datasets(subjects, c, result);
  const EvalOptions options = eval_options(c);
  EvalReport report;
  report.config = run_config_to_json(c);
  for (const auto& d : datasets) report.datasets.push_back(evaluate_dataset(d, options));

  const fs::path dir = c.out / "eval";
  fs::create_directories(dir);
  write_json_artifact(dir / "report.json", report_to_json(report), c, result);
  json summary = json::object();
  for (const auto& d : report.datasets) {
    write_text_artifact(dir / (d.name + "_ood.csv"), ood_table_csv(d), c, result);
    write_text_artifact(dir / (d.name + "_gate.csv"), gate_table_csv(d), c, result);
    write_text_artifact(dir / (d.name + "_coverage.csv"), coverage_csv(d), c, result);
    summary[d.name] = {{"tempdens", d.tempdens_average ? json(*d.tempdens_average) : json(nullptr)},
                       {"gate_accuracy", d.gate_accuracy ? json(*d.gate_accuracy) : json(nullptr)}};
  }
  result.summary = {{"datasets", summary}};
  return result;
}

CommandResult cmd_ablate(const RunConfig& c) {
  const auto subjects = selected_subjects(c);
  CommandResult result;
  const auto datasets = build_datasets(subjects, c, result);
  const EvalOptions options = eval_options(c);
  const auto masks = default_ablation_masks();
  const Grid ablation = run_ablation(datasets, masks, options);
  std::vector<std::string> metrics = c.ablation_metrics;
  if (metrics.empty())
    for (const auto m : kAllTemporalMetrics) metrics.emplace_back(metric_name(m));
  const Grid sweep = run_metric_sweep(datasets, metrics, options);

  const fs::path dir = c.out / "ablate";
  fs::create_directories(dir);
  write_json_artifact(dir / "ablation.json", grid_to_json(ablation), c, result);
  write_text_artifact(dir / "ablation.csv", grid_csv(ablation, "components"), c, result);
  write_json_artifact(dir / "metrics.json", grid_to_json(sweep), c, result);
  write_text_artifact(dir / "metrics.csv", grid_csv(sweep, "metric"), c, result);
  auto averages = [](const Grid& g) {
    json j = json::object();
    for (const auto& r : g.rows) j[r.label] = r.average ? json(*r.average) : json(nullptr);
    return j;
  };
  result.summary = {{"ablation", averages(ablation)}, {"metrics", averages(sweep)}};
  return result;
}

}  // namespace tempdens
