#include "tempdens/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tempdens/error.hpp"

namespace tempdens::synth {

namespace {

struct Rhythm {
  double frequency;
  double phase;
  double drift_phase;
};

}  // namespace

Session generate_session(const SessionSpec& spec) {
  require(spec.channels >= 3, ErrorCode::kInvalidArgument, "synthetic sessions need at least three channels");
  require(spec.id_classes.size() >= 2, ErrorCode::kInvalidArgument, "need at least two ID classes");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::string> classes = spec.id_classes;
  classes.insert(classes.end(), spec.ood_classes.begin(), spec.ood_classes.end());

  // Trial order and timeline.
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (int t = 0; t < spec.trials_per_class; ++t) order.push_back(c);
  std::shuffle(order.begin(), order.end(), rng);

  SessionManifest m;
  m.subject_id = spec.subject_id;
  m.session_id = spec.session_id;
  m.split = spec.split;
  m.channel_count = spec.channels;
  m.sampling_rate = spec.sampling_rate;
  for (std::size_t c = 0; c < spec.id_classes.size(); ++c)
    m.class_map[spec.id_classes[c]] = {ClassRole::kId, static_cast<int>(c)};
  for (const auto& name : spec.ood_classes) m.class_map[name] = {ClassRole::kOod, -1};

  double t = spec.lead_in_s;
  std::vector<std::size_t> event_class;
  for (const auto c : order) {
    m.events.push_back({t, spec.trial_len_s, classes[c]});
    event_class.push_back(c);
    t += spec.trial_len_s + spec.rest_min_s + (spec.rest_max_s - spec.rest_min_s) * unit(rng);
    t = std::round(t * spec.sampling_rate) / spec.sampling_rate;
  }
  const auto n = static_cast<Index>(std::llround(t * spec.sampling_rate));
  m.sample_count = static_cast<std::size_t>(n);
  m.data_path = spec.subject_id + "_" + spec.split + ".f32";
  for (int c = 0; c < spec.channels; ++c) m.channel_names.push_back("ch" + std::to_string(c));

  // Each class desynchronizes its own contiguous channel group.
  const int group = std::max(1, spec.channels / static_cast<int>(classes.size()));
  std::vector<double> gain(static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.channels), 1.0);
  const int ramp = static_cast<int>(0.3 * spec.sampling_rate);
  for (std::size_t e = 0; e < m.events.size(); ++e) {
    const auto begin = static_cast<Index>(std::llround(m.events[e].onset_s * spec.sampling_rate));
    const auto end = static_cast<Index>(std::llround((m.events[e].onset_s + m.events[e].duration_s) * spec.sampling_rate));
    const int first = static_cast<int>(event_class[e]) * group;
    for (Index s = begin; s < end; ++s) {
      const double edge = std::min<double>(1.0, static_cast<double>(std::min(s - begin, end - 1 - s)) / ramp);
      const double g = 1.0 - (1.0 - spec.desync) * edge;
      for (int ch = first; ch < std::min(spec.channels, first + group); ++ch)
        gain[static_cast<std::size_t>(ch) * static_cast<std::size_t>(n) + static_cast<std::size_t>(s)] = g;
    }
  }

  Session session;
  session.manifest = m;
  session.signal.resize(spec.channels, n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int ch = 0; ch < spec.channels; ++ch) {
    const Rhythm mu{9.0 + 3.0 * unit(rng), two_pi * unit(rng), two_pi * unit(rng)};
    const Rhythm beta{18.0 + 6.0 * unit(rng), two_pi * unit(rng), two_pi * unit(rng)};
    for (Index s = 0; s < n; ++s) {
      const double time = static_cast<double>(s) / spec.sampling_rate;
      const double g = gain[static_cast<std::size_t>(ch) * static_cast<std::size_t>(n) + static_cast<std::size_t>(s)];
      const double envelope = 1.0 + 0.2 * std::sin(two_pi * 0.1 * time + mu.drift_phase);
      const double rhythm = std::sin(two_pi * mu.frequency * time + mu.phase) +
                            0.5 * std::sin(two_pi * beta.frequency * time + beta.phase);
      session.signal(ch, s) = spec.rhythm_uv * envelope * g * rhythm + spec.noise_uv * normal(rng);
    }
  }
  return session;
}

std::vector<std::filesystem::path> write_fixture(const std::filesystem::path& root, int subjects, int channels,
                                                 int trials_per_class, std::uint64_t seed) {
  std::vector<std::filesystem::path> written;
  for (int s = 1; s <= subjects; ++s) {
    for (const char* split : {"train", "test"}) {
      SessionSpec spec;
      spec.subject_id = "S" + std::to_string(s);
      spec.session_id = std::string(split) == "train" ? "1" : "2";
      spec.split = split;
      spec.channels = channels;
      spec.trials_per_class = trials_per_class;
      spec.seed = seed * 1000 + static_cast<std::uint64_t>(s) * 10 + (std::string(split) == "train" ? 1 : 2);
      const auto path = root / (spec.subject_id + "_" + split + ".json");
      save_session(path, generate_session(spec));
      written.push_back(path);
    }
  }
  return written;
}

std::vector<SyntheticStep> generate_feature_stream(const FeatureStreamSpec& spec) {
  require(spec.dim >= 2 && spec.episodes >= 1 && spec.episode_frames >= 3, ErrorCode::kInvalidArgument,
          "invalid synthetic feature stream spec");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  constexpr int kComponents = 3;

  std::vector<SyntheticStep> steps;
  std::size_t index = 0;
  auto emit_rest = [&](int frames) {
    for (int i = 0; i < frames; ++i) {
      SyntheticStep st;
      st.index = index++;
      st.start_s = static_cast<double>(st.index) * spec.hop_s;
      st.truth.kind = StateKind::kRest;
      st.p_task = 0.05 + 0.3 * unit(rng);
      st.frame.start_s = st.start_s;
      st.frame.index = st.index;
      st.frame.true_state = st.truth;
      st.frame.features = Vector::Zero(spec.dim);
      steps.push_back(std::move(st));
    }
  };

  emit_rest(spec.rest_frames);
  for (int e = 0; e < spec.episodes; ++e) {
    TrueState truth;
    if (unit(rng) < spec.ood_fraction) {
      truth.kind = StateKind::kOod;
      truth.class_name = "ood";
    } else {
      truth.kind = StateKind::kId;
      truth.class_index = unit(rng) < 0.5 ? 0 : 1;
      truth.class_name = truth.class_index == 0 ? "class0" : "class1";
    }
    Vector mean = Vector::Zero(spec.dim);
    if (truth.kind == StateKind::kId)
      mean(0) = truth.class_index == 0 ? spec.class_offset : -spec.class_offset;
    else
      mean(1) = spec.ood_shift;

    // Smooth unit-variance trajectory: a few slow random-phase sinusoids per axis.
    Matrix freq(spec.dim, kComponents), phase(spec.dim, kComponents);
    for (int j = 0; j < spec.dim; ++j)
      for (int c = 0; c < kComponents; ++c) {
        const double period = spec.min_period_s + (spec.max_period_s - spec.min_period_s) * unit(rng);
        freq(j, c) = two_pi / period;
        phase(j, c) = two_pi * unit(rng);
      }
    const double amplitude = std::sqrt(2.0 / kComponents);
    for (int i = 0; i < spec.episode_frames; ++i) {
      SyntheticStep st;
      st.index = index++;
      st.start_s = static_cast<double>(st.index) * spec.hop_s;
      st.truth = truth;
      st.p_task = 0.65 + 0.35 * unit(rng);
      const double time = static_cast<double>(i) * spec.hop_s;
      Vector f = mean;
      for (int j = 0; j < spec.dim; ++j)
        for (int c = 0; c < kComponents; ++c) f(j) += amplitude * std::cos(freq(j, c) * time + phase(j, c));
      if (truth.kind == StateKind::kOod)
        for (int j = 0; j < spec.dim; ++j) f(j) += spec.ood_jitter * normal(rng);
      st.frame.start_s = st.start_s;
      st.frame.index = st.index;
      st.frame.true_state = truth;
      st.frame.coverage = 1.0;
      st.frame.features = std::move(f);
      steps.push_back(std::move(st));
    }
    emit_rest(spec.rest_frames);
  }
  return steps;
}

void attach_logits(std::vector<SyntheticStep>& steps, const LinearHead& head) {
  for (auto& st : steps) st.frame.logits = head.logits(st.frame.features);
}

std::vector<FeatureFrame> id_frames(const std::vector<SyntheticStep>& steps) {
  std::vector<FeatureFrame> out;
  for (const auto& st : steps)
    if (st.truth.kind == StateKind::kId) out.push_back(st.frame);
  return out;
}

SubjectData make_subject(const std::string& name, const FeatureStreamSpec& test_spec, int train_episodes,
                         const CalibrationOptions& options) {
  FeatureStreamSpec train_spec = test_spec;
  train_spec.ood_fraction = 0.0;
  train_spec.episodes = train_episodes;
  train_spec.seed = test_spec.seed + 1000;
  auto train = generate_feature_stream(train_spec);
  std::vector<FeatureFrame> id = id_frames(train);
  Matrix x(static_cast<Index>(id.size()), train_spec.dim);
  std::vector<int> y;
  for (std::size_t i = 0; i < id.size(); ++i) {
    x.row(static_cast<Index>(i)) = id[i].features.transpose();
    y.push_back(id[i].true_state.class_index);
  }
  HeadTrainOptions head_options;
  head_options.seed = options.seed;
  const LinearHead head = train_head(x, y, 2, head_options).head;
  attach_logits(train, head);

  SubjectData subject;
  subject.subject = name;
  subject.calibration_stream = id_frames(train);
  subject.pack = build_calibration(subject.calibration_stream, head, {"class0", "class1"}, options);

  auto test = generate_feature_stream(test_spec);
  attach_logits(test, head);
  for (auto& st : test) {
    TestStep step;
    step.start_s = st.start_s;
    step.index = st.index;
    step.p_task = st.p_task;
    step.truth = st.truth;
    step.coverage = st.truth.is_task() ? 1.0 : 0.0;
    step.frame = std::move(st.frame);
    subject.test.push_back(std::move(step));
  }
  return subject;
}

}  // namespace tempdens::synth
