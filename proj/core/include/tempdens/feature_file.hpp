#pragma once

#include <filesystem>
#include <vector>

#include "tempdens/backbone.hpp"

namespace tempdens {

/// Replay format: one JSON header line {"d", "K", "frame_count"} followed by
/// frame_count packed little-endian f32 records of [logits || features].
struct FeatureFileHeader {
  int d = 0;
  int k = 0;
  std::size_t frame_count = 0;
};

struct FeatureRecord {
  Vector logits;
  Vector features;
};

void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureFrame>& frames, int d, int k);
std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path, FeatureFileHeader* header = nullptr);

/// Replays a feature file against the labeled frames of its session.
std::vector<FeatureFrame> replay_provider(const std::filesystem::path& path, const std::vector<FrameLabel>& labels);

}  // namespace tempdens
