#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "support.hpp"
#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"
#include "tempdens/stream_io.hpp"

using namespace tempdens;

namespace {

SessionManifest manifest(int channels, double rate, std::vector<Event> events) {
  SessionManifest m;
  m.subject_id = "S1";
  m.split = "train";
  m.channel_count = channels;
  m.sampling_rate = rate;
  m.events = std::move(events);
  m.class_map = {{"left_hand", {ClassRole::kId, 0}},
                 {"right_hand", {ClassRole::kId, 1}},
                 {"feet", {ClassRole::kOod, -1}}};
  m.data_path = "S1.f32";
  return m;
}

}  // namespace

TEST_SUITE("stream_io") {
  TEST_CASE("BNCI-like manifest loads a 22-row matrix and round-trips bit-exactly") {
    const auto dir = test::scratch("stream_io_load");
    std::mt19937_64 rng(1);
    Session s;
    s.manifest = manifest(22, 250.0, {{1.0, 4.0, "left_hand"}});
    s.signal = test::gaussian(22, 2500, rng, 10.0);
    for (Index i = 0; i < s.signal.size(); ++i) s.signal.data()[i] = static_cast<float>(s.signal.data()[i]);
    save_session(dir / "S1.json", s);
    const Session back = load_session(dir / "S1.json");
    CHECK(back.signal.rows() == 22);
    CHECK(back.signal.cols() == 2500);
    CHECK(back.signal == s.signal);
    CHECK(back.manifest.events.size() == 1);
  }

  TEST_CASE("file 4 bytes short is a size mismatch") {
    const auto dir = test::scratch("stream_io_short");
    Session s;
    s.manifest = manifest(2, 250.0, {});
    s.signal = Matrix::Ones(2, 600);
    save_session(dir / "S1.json", s);
    std::string raw = codec::read_file(dir / "S1.f32");
    raw.resize(raw.size() - 4);
    codec::write_file_atomic(dir / "S1.f32", raw);
    try {
      load_session(dir / "S1.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSizeMismatch);
    }
  }

  TEST_CASE("non-finite sample is reported") {
    const auto dir = test::scratch("stream_io_nan");
    Session s;
    s.manifest = manifest(2, 250.0, {});
    s.signal = Matrix::Ones(2, 600);
    s.signal(1, 5) = std::numeric_limits<double>::quiet_NaN();
    save_session(dir / "S1.json", s);
    try {
      load_session(dir / "S1.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNonFinite);
    }
  }

  TEST_CASE("empty events: every window is rest") {
    const auto labels = label_frames(manifest(2, 250.0, {}), 2500);
    REQUIRE(labels.size() == 65);
    for (const auto& l : labels) {
      CHECK(l.true_state.kind == StateKind::kRest);
      CHECK(l.coverage == 0.0);
    }
  }

  TEST_CASE("10 s at 2 s / 0.125 s gives 65 frames") {
    const auto g = segment_geometry({}, 250.0);
    CHECK(frame_count(2500, g) == 65);
    const auto g128 = segment_geometry({}, 128.0);  // 16-sample hop
    CHECK(frame_count(1280, g128) == 65);
  }

  TEST_CASE("frame count formula holds across lengths and rates") {
    for (const double rate : {128.0, 160.0, 250.0, 256.0, 512.0}) {
      const auto g = segment_geometry({}, rate);
      for (std::size_t n = 0; n < 6000; n += 37) {
        const double duration = static_cast<double>(n) / rate;
        const std::size_t expected =
            duration < 2.0 ? 0 : static_cast<std::size_t>(std::floor((duration - 2.0) / 0.125 + 1e-9)) + 1;
        CHECK(frame_count(n, g) == expected);
      }
    }
  }

  TEST_CASE("fractional hop starts on the floor sample; strict mode rejects it") {
    const auto g = segment_geometry({}, 250.0);
    CHECK(g.start_sample(1) == 31);
    CHECK(g.start_sample(4) == 125);
    SegmentConfig strict;
    strict.strict_hop = true;
    CHECK_THROWS_AS(segment_geometry(strict, 250.0), Error);
    SegmentConfig odd_window;
    odd_window.window_len_s = 2.001;
    CHECK_THROWS_AS(segment_geometry(odd_window, 250.0), Error);
  }

  TEST_CASE("window inside a left-hand event is ID(left) with full coverage") {
    const auto labels = label_frames(manifest(2, 250.0, {{1.0, 4.0, "left_hand"}}), 2500);
    const auto& l = labels[16];  // starts at 2.0 s, ends at 4.0 s
    CHECK(l.start_s == doctest::Approx(2.0));
    CHECK(l.coverage == 1.0);
    CHECK(l.true_state.kind == StateKind::kId);
    CHECK(l.true_state.class_index == 0);
    CHECK(l.true_state.class_name == "left_hand");
  }

  TEST_CASE("window starting 0.2 s after offset is excluded") {
    // Event ends at 3.0 s; frame starting at 3.2 s.
    const auto labels = label_frames(manifest(2, 250.0, {{1.0, 2.0, "right_hand"}}), 2500);
    const auto& l = labels[static_cast<std::size_t>(std::lround(3.2 / 0.125))];
    CHECK(l.coverage == 0.0);
    CHECK(l.true_state.kind == StateKind::kExcluded);
    // Past the exclusion zone it is rest again.
    CHECK(labels[static_cast<std::size_t>(std::lround(3.5 / 0.125))].true_state.kind == StateKind::kRest);
  }

  TEST_CASE("OOD events label OOD; majority event wins, earlier on ties") {
    const auto labels = label_frames(manifest(2, 250.0, {{2.0, 1.0, "left_hand"}, {3.0, 1.0, "feet"}}), 2500);
    const auto& tie = labels[16];  // [2, 4): one second of each
    CHECK(tie.true_state.class_name == "left_hand");
    CHECK(tie.coverage == 1.0);
    const auto& later = labels[20];  // [2.5, 4.5): 0.5 s left, 1 s feet
    CHECK(later.true_state.kind == StateKind::kOod);
  }

  TEST_CASE("coverage is monotone sliding into and out of a single event") {
    const auto labels = label_frames(manifest(2, 250.0, {{4.0, 4.0, "left_hand"}}), 4000);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i].coverage > labels[peak].coverage) peak = i;
    for (std::size_t i = 1; i <= peak; ++i) CHECK(labels[i].coverage >= labels[i - 1].coverage);
    for (std::size_t i = peak + 1; i < labels.size(); ++i) CHECK(labels[i].coverage <= labels[i - 1].coverage);
  }

  TEST_CASE("segmentation is deterministic and windows carry the right samples") {
    std::mt19937_64 rng(9);
    const Matrix signal = test::gaussian(3, 1500, rng);
    const auto m = manifest(3, 250.0, {{1.0, 2.0, "left_hand"}});
    const auto a = segment(signal, m);
    const auto b = segment(signal, m);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].samples == b[i].samples);
      CHECK(a[i].true_state == b[i].true_state);
    }
    const auto g = segment_geometry({}, 250.0);
    CHECK(a[3].samples == signal.middleCols(static_cast<Index>(g.start_sample(3)), 500));
    WindowStream stream(signal, m);
    std::size_t n = 0;
    while (auto w = stream.next()) ++n;
    CHECK(n == a.size());
  }

  TEST_CASE("manifest json round trip and validation") {
    auto m = manifest(4, 250.0, {{1.0, 2.0, "left_hand"}});
    m.channel_names = {"C3", "Cz", "C4", "Pz"};
    m.sample_count = 1000;
    const auto back = manifest_from_json(manifest_to_json(m));
    CHECK(back.channel_names == m.channel_names);
    CHECK(back.sample_count == m.sample_count);
    CHECK(back.id_class_count() == 2);
    CHECK_THROWS_AS(validate_manifest(m, 400), Error);  // event past the end
    auto unknown = m;
    unknown.events.push_back({2.5, 1.0, "tongue"});
    CHECK_THROWS_AS(validate_manifest(unknown, 1000), Error);
  }
}
