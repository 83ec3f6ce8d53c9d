#include "tempdens/stream_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"

namespace tempdens {

namespace {

ClassRole role_from_string(const std::string& s) {
  if (s == "id") return ClassRole::kId;
  if (s == "ood") return ClassRole::kOod;
  if (s == "rest") return ClassRole::kRest;
  fail(ErrorCode::kParse, "unknown class role '" + s + "' (expected id, ood or rest)");
}

std::string role_to_string(ClassRole role) {
  switch (role) {
    case ClassRole::kId: return "id";
    case ClassRole::kOod: return "ood";
    case ClassRole::kRest: return "rest";
  }
  return "rest";
}

// Converts a duration to a whole number of samples, rejecting fractional counts.
std::size_t exact_samples(double seconds, double rate, const char* what) {
  const double raw = seconds * rate;
  const double rounded = std::round(raw);
  require(rounded >= 0.0 && std::abs(raw - rounded) < 1e-6, ErrorCode::kInvalidArgument,
          std::string(what) + " of " + std::to_string(seconds) + " s is not a whole number of samples at " +
              std::to_string(rate) + " Hz");
  return static_cast<std::size_t>(rounded);
}

std::size_t to_sample(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(std::max(0.0, seconds) * rate));
}

}  // namespace

int SessionManifest::id_class_count() const {
  int k = 0;
  for (const auto& [name, a] : class_map)
    if (a.role == ClassRole::kId) k = std::max(k, a.index + 1);
  return k;
}

nlohmann::json manifest_to_json(const SessionManifest& m) {
  nlohmann::json j;
  j["subject_id"] = m.subject_id;
  if (!m.session_id.empty()) j["session_id"] = m.session_id;
  if (!m.split.empty()) j["split"] = m.split;
  j["channel_count"] = m.channel_count;
  j["sampling_rate"] = m.sampling_rate;
  if (m.sample_count) j["sample_count"] = *m.sample_count;
  if (!m.channel_names.empty()) j["channel_names"] = m.channel_names;
  j["events"] = nlohmann::json::array();
  for (const auto& e : m.events)
    j["events"].push_back({{"onset_s", e.onset_s}, {"duration_s", e.duration_s}, {"class_name", e.class_name}});
  j["class_map"] = nlohmann::json::object();
  for (const auto& [name, a] : m.class_map) {
    nlohmann::json entry{{"role", role_to_string(a.role)}};
    if (a.role == ClassRole::kId) entry["index"] = a.index;
    j["class_map"][name] = entry;
  }
  j["data_path"] = m.data_path;
  return j;
}

SessionManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SessionManifest m;
    m.subject_id = j.at("subject_id").get<std::string>();
    m.session_id = j.value("session_id", std::string{});
    m.split = j.value("split", std::string{});
    m.channel_count = j.at("channel_count").get<int>();
    m.sampling_rate = j.at("sampling_rate").get<double>();
    if (j.contains("sample_count")) m.sample_count = j.at("sample_count").get<std::size_t>();
    if (j.contains("channel_names")) m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("events")) {
      m.events.push_back({e.at("onset_s").get<double>(), e.at("duration_s").get<double>(),
                          e.at("class_name").get<std::string>()});
    }
    for (const auto& [name, entry] : j.at("class_map").items()) {
      ClassAssignment a;
      a.role = role_from_string(entry.at("role").get<std::string>());
      if (a.role == ClassRole::kId) a.index = entry.at("index").get<int>();
      m.class_map[name] = a;
    }
    m.data_path = j.at("data_path").get<std::string>();
    require(m.channel_count > 0, ErrorCode::kParse, "channel_count must be positive");
    require(m.sampling_rate > 0.0, ErrorCode::kParse, "sampling_rate must be positive");
    require(m.channel_names.empty() || static_cast<int>(m.channel_names.size()) == m.channel_count,
            ErrorCode::kParse, "channel_names length differs from channel_count");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed manifest: ") + e.what());
  }
}

void validate_manifest(const SessionManifest& m, std::size_t sample_count) {
  std::vector<int> seen_indices;
  for (const auto& [name, a] : m.class_map) {
    if (a.role != ClassRole::kId) continue;
    require(a.index >= 0, ErrorCode::kParse, "ID class '" + name + "' has a negative index");
    require(std::find(seen_indices.begin(), seen_indices.end(), a.index) == seen_indices.end(),
            ErrorCode::kParse, "duplicate ID class index " + std::to_string(a.index));
    seen_indices.push_back(a.index);
  }
  const double length_s = static_cast<double>(sample_count) / m.sampling_rate;
  constexpr double kSlack = 1e-9;
  for (std::size_t i = 0; i < m.events.size(); ++i) {
    const auto& e = m.events[i];
    require(m.class_map.contains(e.class_name), ErrorCode::kParse,
            "event " + std::to_string(i) + " has class '" + e.class_name + "' missing from class_map");
    require(e.onset_s >= 0.0 && e.duration_s > 0.0, ErrorCode::kParse,
            "event " + std::to_string(i) + " has negative onset or non-positive duration");
    require(e.onset_s + e.duration_s <= length_s + kSlack, ErrorCode::kParse,
            "event " + std::to_string(i) + " ends past the recording length");
    if (i > 0) {
      const auto& prev = m.events[i - 1];
      require(prev.onset_s <= e.onset_s, ErrorCode::kParse, "events are not sorted by onset");
      require(prev.onset_s + prev.duration_s <= e.onset_s + kSlack, ErrorCode::kParse,
              "events " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
    }
  }
}

Session load_session(const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(codec::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  Session session;
  session.manifest = manifest_from_json(j);
  const auto& m = session.manifest;
  const auto data_file = manifest_path.parent_path() / m.data_path;
  require(std::filesystem::exists(data_file), ErrorCode::kIo, "raw signal file not found: " + data_file.string());

  const auto bytes = std::filesystem::file_size(data_file);
  const std::size_t channels = static_cast<std::size_t>(m.channel_count);
  const std::size_t row_bytes = channels * sizeof(float);
  std::size_t n = 0;
  if (m.sample_count) {
    n = *m.sample_count;
    require(bytes == channels * n * sizeof(float), ErrorCode::kSizeMismatch,
            data_file.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                std::to_string(channels * n * sizeof(float)) + " (C x N x 4)");
  } else {
    require(bytes % row_bytes == 0, ErrorCode::kSizeMismatch,
            data_file.string() + " holds " + std::to_string(bytes) + " bytes, not a multiple of C x 4 = " +
                std::to_string(row_bytes));
    n = bytes / row_bytes;
  }

  std::vector<float> raw(channels * n);
  {
    std::ifstream in(data_file, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + data_file.string());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    require(static_cast<bool>(in), ErrorCode::kIo, "short read on " + data_file.string());
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      fail(ErrorCode::kNonFinite, "non-finite sample at byte offset " + std::to_string(i * sizeof(float)) +
                                      " (channel " + std::to_string(i / n) + ", sample " +
                                      std::to_string(i % n) + ") in " + data_file.string());
    }
  }
  session.signal.resize(m.channel_count, static_cast<Index>(n));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t s = 0; s < n; ++s)
      session.signal(static_cast<Index>(c), static_cast<Index>(s)) = raw[c * n + s];
  validate_manifest(m, n);
  return session;
}

void save_session(const std::filesystem::path& manifest_path, const Session& session) {
  const auto& m = session.manifest;
  require(session.signal.rows() == m.channel_count, ErrorCode::kShape, "signal rows differ from channel_count");
  const std::size_t n = session.sample_count();
  std::string raw(static_cast<std::size_t>(session.signal.size()) * sizeof(float), '\0');
  for (Index c = 0; c < session.signal.rows(); ++c) {
    for (Index s = 0; s < session.signal.cols(); ++s) {
      const float f = static_cast<float>(session.signal(c, s));
      std::memcpy(raw.data() + (static_cast<std::size_t>(c) * n + static_cast<std::size_t>(s)) * sizeof(float), &f,
                  sizeof(float));
    }
  }
  codec::write_file_atomic(manifest_path.parent_path() / m.data_path, raw);
  codec::write_file_atomic(manifest_path, manifest_to_json(m).dump(2) + "\n");
}

SegmentGeometry segment_geometry(const SegmentConfig& config, double rate) {
  SegmentGeometry g;
  g.window_samples = exact_samples(config.window_len_s, rate, "window length");
  g.hop_samples = config.strict_hop ? static_cast<double>(exact_samples(config.hop_s, rate, "hop"))
                                    : config.hop_s * rate;
  g.exclusion_samples = to_sample(config.exclusion_s, rate);
  require(g.window_samples > 0 && g.hop_samples >= 1.0 - 1e-9, ErrorCode::kInvalidArgument,
          "window and hop must be at least one sample");
  return g;
}

std::size_t frame_count(std::size_t sample_count, const SegmentGeometry& g) {
  if (sample_count < g.window_samples) return 0;
  const double span = static_cast<double>(sample_count - g.window_samples);
  return static_cast<std::size_t>(std::floor(span / g.hop_samples + 1e-9)) + 1;
}

std::size_t SegmentGeometry::start_sample(std::size_t frame) const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(frame) * hop_samples + 1e-9));
}

std::vector<FrameLabel> label_frames(const SessionManifest& m, std::size_t sample_count,
                                     const SegmentConfig& config) {
  const auto g = segment_geometry(config, m.sampling_rate);

  struct TaskSpan {
    std::size_t begin, end;
    const Event* event;
    ClassAssignment assignment;
  };
  std::vector<TaskSpan> spans;
  for (const auto& e : m.events) {
    const auto it = m.class_map.find(e.class_name);
    require(it != m.class_map.end(), ErrorCode::kParse, "class '" + e.class_name + "' missing from class_map");
    if (it->second.role == ClassRole::kRest) continue;
    spans.push_back({to_sample(e.onset_s, m.sampling_rate), to_sample(e.onset_s + e.duration_s, m.sampling_rate),
                     &e, it->second});
  }

  const std::size_t count = frame_count(sample_count, g);
  std::vector<FrameLabel> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    FrameLabel& label = labels[i];
    label.index = i;
    label.start_sample = g.start_sample(i);
    label.start_s = static_cast<double>(i) * g.hop_samples / m.sampling_rate;
    const std::size_t begin = label.start_sample;
    const std::size_t end = begin + g.window_samples;

    std::size_t covered = 0;
    std::size_t best_overlap = 0;
    const TaskSpan* best = nullptr;
    bool in_exclusion = false;
    for (const auto& span : spans) {
      const std::size_t lo = std::max(begin, span.begin);
      const std::size_t hi = std::min(end, span.end);
      if (hi > lo) {
        const std::size_t overlap = hi - lo;
        covered += overlap;
        if (overlap > best_overlap) {  // strict: earlier event wins ties
          best_overlap = overlap;
          best = &span;
        }
      }
      const std::size_t ex_lo = std::max(begin, span.end);
      const std::size_t ex_hi = std::min(end, span.end + g.exclusion_samples);
      if (ex_hi > ex_lo) in_exclusion = true;
    }
    label.coverage = static_cast<double>(covered) / static_cast<double>(g.window_samples);
    if (best != nullptr) {
      label.true_state.class_name = best->event->class_name;
      if (best->assignment.role == ClassRole::kId) {
        label.true_state.kind = StateKind::kId;
        label.true_state.class_index = best->assignment.index;
      } else {
        label.true_state.kind = StateKind::kOod;
      }
    } else {
      label.true_state.kind = in_exclusion ? StateKind::kExcluded : StateKind::kRest;
    }
  }
  return labels;
}

WindowStream::WindowStream(const Matrix& signal, const SessionManifest& manifest, const SegmentConfig& config)
    : signal_(&signal),
      geometry_(segment_geometry(config, manifest.sampling_rate)),
      labels_(label_frames(manifest, static_cast<std::size_t>(signal.cols()), config)) {
  require(signal.rows() == manifest.channel_count, ErrorCode::kShape,
          "signal has " + std::to_string(signal.rows()) + " channels, manifest declares " +
              std::to_string(manifest.channel_count));
}

WindowFrame WindowStream::frame(std::size_t i) const {
  const auto& label = labels_.at(i);
  WindowFrame f;
  f.start_s = label.start_s;
  f.index = label.index;
  f.true_state = label.true_state;
  f.coverage = label.coverage;
  f.samples = signal_->middleCols(static_cast<Index>(label.start_sample), static_cast<Index>(geometry_.window_samples));
  return f;
}

std::optional<WindowFrame> WindowStream::next() {
  if (cursor_ >= labels_.size()) return std::nullopt;
  return frame(cursor_++);
}

std::vector<WindowFrame> segment(const Matrix& signal, const SessionManifest& manifest, const SegmentConfig& config) {
  WindowStream stream(signal, manifest, config);
  std::vector<WindowFrame> frames;
  frames.reserve(stream.size());
  while (auto f = stream.next()) frames.push_back(std::move(*f));
  return frames;
}

}  // namespace tempdens
