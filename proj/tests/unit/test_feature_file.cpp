#include <doctest.h>

#include "support.hpp"
#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/feature_file.hpp"
#include "tempdens/stream_io.hpp"

using namespace tempdens;

TEST_SUITE("feature_file") {
  TEST_CASE("export then replay is bit-identical on f32 values") {
    const auto dir = test::scratch("feature_file");
    std::mt19937_64 rng(2);
    SessionManifest m;
    m.channel_count = 2;
    m.sampling_rate = 250.0;
    const auto labels = label_frames(m, 2500);
    REQUIRE(labels.size() == 65);
    std::vector<FeatureFrame> frames(labels.size());
    for (auto& f : frames) {
      f.logits = test::gaussian(2, rng);
      f.features = test::gaussian(6, rng);
      codec::round_to_f32(f.logits);
      codec::round_to_f32(f.features);
    }
    write_feature_file(dir / "s.features", frames, 6, 2);
    FeatureFileHeader header;
    const auto records = read_feature_file(dir / "s.features", &header);
    CHECK(header.frame_count == 65);
    CHECK(header.d == 6);
    CHECK(header.k == 2);
    const auto replayed = replay_provider(dir / "s.features", labels);
    REQUIRE(replayed.size() == 65);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(records[i].logits == frames[i].logits);
      CHECK(replayed[i].features == frames[i].features);
      CHECK(replayed[i].start_s == labels[i].start_s);
    }
    // Frame count must match the session arithmetic.
    const std::vector<FrameLabel> fewer(labels.begin(), labels.begin() + 10);
    CHECK_THROWS_AS(replay_provider(dir / "s.features", fewer), Error);
  }

  TEST_CASE("record shape mismatch refuses to write") {
    const auto dir = test::scratch("feature_file_shape");
    std::vector<FeatureFrame> frames(1);
    frames[0].logits = Vector::Zero(3);
    frames[0].features = Vector::Zero(4);
    CHECK_THROWS_AS(write_feature_file(dir / "bad.features", frames, 4, 2), Error);
    CHECK_FALSE(std::filesystem::exists(dir / "bad.features"));
  }

  TEST_CASE("header K=2 with 3-logit records is a shape error on read") {
    const auto dir = test::scratch("feature_file_read");
    std::vector<FeatureFrame> frames(2);
    for (auto& f : frames) {
      f.logits = Vector::Zero(3);
      f.features = Vector::Zero(4);
    }
    write_feature_file(dir / "k3.features", frames, 4, 3);
    std::string text = codec::read_file(dir / "k3.features");
    const auto newline = text.find('\n');
    text.replace(0, newline, R"({"K":2,"d":4,"frame_count":2})");
    codec::write_file_atomic(dir / "k3.features", text);
    CHECK_THROWS_AS(read_feature_file(dir / "k3.features"), Error);
  }

  TEST_CASE("zero-frame session gives an empty file and an empty stream") {
    const auto dir = test::scratch("feature_file_empty");
    write_feature_file(dir / "e.features", {}, 4, 2);
    FeatureFileHeader header;
    CHECK(read_feature_file(dir / "e.features", &header).empty());
    CHECK(header.frame_count == 0);
    CHECK(replay_provider(dir / "e.features", {}).empty());
  }
}
