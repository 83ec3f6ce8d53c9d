#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/types.hpp"

namespace tempdens {

enum class ClassRole { kId, kOod, kRest };

struct ClassAssignment {
  ClassRole role = ClassRole::kRest;
  int index = -1;  // 0..K-1 for ID classes
};

struct Event {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string class_name;
};

struct SessionManifest {
  std::string subject_id;
  std::string session_id;  // optional, informational
  std::string split;       // "train" | "test" | "" (used for discovery)
  int channel_count = 0;
  double sampling_rate = 0.0;
  std::vector<Event> events;
  std::map<std::string, ClassAssignment> class_map;
  std::string data_path;  // relative to the manifest's directory
  std::optional<std::size_t> sample_count;
  std::vector<std::string> channel_names;

  /// Number of ID classes (K), i.e. 1 + max ID index.
  int id_class_count() const;
};

nlohmann::json manifest_to_json(const SessionManifest& manifest);
SessionManifest manifest_from_json(const nlohmann::json& j);

/// Checks ordering, class coverage and that events fit inside `sample_count` samples.
void validate_manifest(const SessionManifest& manifest, std::size_t sample_count);

struct Session {
  SessionManifest manifest;
  Matrix signal;  // C x N, microvolts

  std::size_t sample_count() const { return static_cast<std::size_t>(signal.cols()); }
  double duration_s() const { return static_cast<double>(signal.cols()) / manifest.sampling_rate; }
};

/// Loads a JSON manifest and its channel-major little-endian f32 signal file.
Session load_session(const std::filesystem::path& manifest_path);

/// Writes manifest + raw file; `manifest.data_path` is resolved against the manifest directory.
void save_session(const std::filesystem::path& manifest_path, const Session& session);

struct WindowFrame {
  double start_s = 0.0;
  std::size_t index = 0;
  Matrix samples;  // C x T_w
  TrueState true_state;
  double coverage = 0.0;
};

/// Labels of one window without its samples.
struct FrameLabel {
  double start_s = 0.0;
  std::size_t index = 0;
  std::size_t start_sample = 0;
  TrueState true_state;
  double coverage = 0.0;
};

struct SegmentConfig {
  double window_len_s = 2.0;
  double hop_s = 0.125;
  double exclusion_s = 0.5;
  // A hop of 0.125 s is 31.25 samples at 250 Hz. By default frame k then starts
  // at sample floor(k * hop * rate); strict_hop rejects such hops instead.
  bool strict_hop = false;
};

struct SegmentGeometry {
  std::size_t window_samples = 0;
  double hop_samples = 0.0;  // may be fractional unless strict_hop
  std::size_t exclusion_samples = 0;

  std::size_t start_sample(std::size_t frame) const;
};

/// Converts lengths to sample counts; the window must land on whole samples.
SegmentGeometry segment_geometry(const SegmentConfig& config, double sampling_rate);

/// floor((N - W) / H) + 1 with H possibly fractional, or 0 when the recording is shorter than a window.
std::size_t frame_count(std::size_t sample_count, const SegmentGeometry& geometry);

/// Labels every window of a session of `sample_count` samples.
std::vector<FrameLabel> label_frames(const SessionManifest& manifest, std::size_t sample_count,
                                     const SegmentConfig& config = {});

/// Pull-based window iterator over a (typically band-passed) signal.
class WindowStream {
 public:
  WindowStream(const Matrix& signal, const SessionManifest& manifest,
               const SegmentConfig& config = {});

  std::optional<WindowFrame> next();
  std::size_t size() const { return labels_.size(); }
  const std::vector<FrameLabel>& labels() const { return labels_; }
  WindowFrame frame(std::size_t i) const;

 private:
  const Matrix* signal_;
  SegmentGeometry geometry_;
  std::vector<FrameLabel> labels_;
  std::size_t cursor_ = 0;
};

/// Materializes the whole window stream.
std::vector<WindowFrame> segment(const Matrix& signal, const SessionManifest& manifest,
                                 const SegmentConfig& config = {});

}  // namespace tempdens
