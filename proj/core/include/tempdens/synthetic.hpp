#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tempdens/backbone.hpp"
#include "tempdens/calibration.hpp"
#include "tempdens/evaluation.hpp"
#include "tempdens/stream_io.hpp"

namespace tempdens::synth {

/// Motor-imagery-like recording: per-channel mu/beta rhythms over white noise,
/// with class-specific desynchronization of one channel group per class.
struct SessionSpec {
  std::string subject_id = "S1";
  std::string session_id = "1";
  std::string split = "train";
  int channels = 8;
  double sampling_rate = 250.0;
  int trials_per_class = 12;
  double trial_len_s = 4.0;
  double rest_min_s = 3.0;
  double rest_max_s = 5.0;
  double lead_in_s = 3.0;
  std::vector<std::string> id_classes{"left_hand", "right_hand"};
  std::vector<std::string> ood_classes{"feet"};
  double rhythm_uv = 8.0;
  double noise_uv = 2.0;
  double desync = 0.25;  // rhythm gain inside the class's channel group during imagery
  std::uint64_t seed = 1;
};

Session generate_session(const SessionSpec& spec);

/// Writes `<subject>_<split>.json` + `.f32` for a train and a test session per subject.
std::vector<std::filesystem::path> write_fixture(const std::filesystem::path& root, int subjects, int channels,
                                                 int trials_per_class, std::uint64_t seed);

/// Feature-level stream: ID episodes are smooth trajectories around per-class
/// means; OOD episodes sit at a shifted mean and carry frame-to-frame jitter.
struct FeatureStreamSpec {
  int dim = 8;
  int episodes = 60;
  double ood_fraction = 1.0 / 3.0;  // 0 -> ID only
  int episode_frames = 24;
  int rest_frames = 12;
  double hop_s = 0.125;
  double class_offset = 2.5;  // ID means at +/- offset on axis 0
  double ood_shift = 2.0;     // OOD mean on axis 1
  double ood_jitter = 0.6;    // per-frame iid std added to OOD features
  double min_period_s = 3.0;
  double max_period_s = 8.0;
  std::uint64_t seed = 7;
};

struct SyntheticStep {
  double start_s = 0.0;
  std::size_t index = 0;
  TrueState truth;
  double p_task = 0.0;
  FeatureFrame frame;  // features set; logits set by attach_logits
};

std::vector<SyntheticStep> generate_feature_stream(const FeatureStreamSpec& spec);

void attach_logits(std::vector<SyntheticStep>& steps, const LinearHead& head);

/// ID frames of the stream, in time order.
std::vector<FeatureFrame> id_frames(const std::vector<SyntheticStep>& steps);

/// A complete synthetic subject: a head trained on an ID-only training stream,
/// a calibration pack built from that stream, and a labeled test stream.
/// The training stream uses `test_spec` with ood_fraction = 0, `train_episodes`
/// episodes and seed `test_spec.seed + 1000`.
SubjectData make_subject(const std::string& name, const FeatureStreamSpec& test_spec, int train_episodes,
                         const CalibrationOptions& options);

}  // namespace tempdens::synth
