#include "tempdens/feature_file.hpp"

#include <cstring>

#include <json.hpp>

#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"

namespace tempdens {

void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureFrame>& frames, int d, int k) {
  require(d >= 1 && k >= 2, ErrorCode::kShape, "feature file needs d >= 1 and K >= 2");
  std::string out = nlohmann::json{{"d", d}, {"K", k}, {"frame_count", frames.size()}}.dump() + "\n";
  const std::size_t record_bytes = static_cast<std::size_t>(d + k) * sizeof(float);
  out.reserve(out.size() + frames.size() * record_bytes);
  for (const auto& f : frames) {
    require(f.logits.size() == k && f.features.size() == d, ErrorCode::kShape,
            "frame " + std::to_string(f.index) + " does not match header shape (d=" + std::to_string(d) +
                ", K=" + std::to_string(k) + ")");
    for (const Vector* v : {&f.logits, &f.features}) {
      for (Index i = 0; i < v->size(); ++i) {
        const float x = static_cast<float>((*v)(i));
        char bytes[sizeof(float)];
        std::memcpy(bytes, &x, sizeof(float));
        out.append(bytes, sizeof(float));
      }
    }
  }
  codec::write_file_atomic(path, out);
}

std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path, FeatureFileHeader* header_out) {
  const std::string content = codec::read_file(path);
  const auto newline = content.find('\n');
  require(newline != std::string::npos, ErrorCode::kParse, "feature file has no header line: " + path.string());
  FeatureFileHeader header;
  try {
    const auto j = nlohmann::json::parse(content.substr(0, newline));
    header.d = j.at("d").get<int>();
    header.k = j.at("K").get<int>();
    header.frame_count = j.at("frame_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed feature file header: ") + e.what());
  }
  require(header.d >= 1 && header.k >= 2, ErrorCode::kShape, "feature file header needs d >= 1 and K >= 2");
  const std::size_t record_bytes = static_cast<std::size_t>(header.d + header.k) * sizeof(float);
  const std::size_t payload = content.size() - newline - 1;
  require(payload % record_bytes == 0, ErrorCode::kShape,
          "feature payload of " + std::to_string(payload) + " bytes is not a whole number of " +
              std::to_string(header.d + header.k) + "-value records");
  require(payload / record_bytes == header.frame_count, ErrorCode::kSizeMismatch,
          "feature file holds " + std::to_string(payload / record_bytes) + " records, header declares " +
              std::to_string(header.frame_count));

  std::vector<FeatureRecord> records(header.frame_count);
  const char* cursor = content.data() + newline + 1;
  auto read_vector = [&cursor](int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) {
      float x;
      std::memcpy(&x, cursor, sizeof(float));
      cursor += sizeof(float);
      v(i) = x;
    }
    return v;
  };
  for (auto& r : records) {
    r.logits = read_vector(header.k);
    r.features = read_vector(header.d);
    require(r.logits.allFinite() && r.features.allFinite(), ErrorCode::kNonFinite,
            "non-finite value in feature file " + path.string());
  }
  if (header_out != nullptr) *header_out = header;
  return records;
}

std::vector<FeatureFrame> replay_provider(const std::filesystem::path& path, const std::vector<FrameLabel>& labels) {
  auto records = read_feature_file(path);
  require(records.size() == labels.size(), ErrorCode::kSizeMismatch,
          "feature file holds " + std::to_string(records.size()) + " frames, session segments into " +
              std::to_string(labels.size()));
  std::vector<FeatureFrame> frames(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    frames[i].start_s = labels[i].start_s;
    frames[i].index = labels[i].index;
    frames[i].true_state = labels[i].true_state;
    frames[i].coverage = labels[i].coverage;
    frames[i].logits = std::move(records[i].logits);
    frames[i].features = std::move(records[i].features);
  }
  return frames;
}

}  // namespace tempdens
