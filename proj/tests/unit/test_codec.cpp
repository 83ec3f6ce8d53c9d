#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tempdens/codec.hpp"
#include "tempdens/error.hpp"

using namespace tempdens;

TEST_SUITE("codec") {
  TEST_CASE("base64 known vectors") {
    auto enc = [](std::string s) {
      return codec::base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foobar") == "Zm9vYmFy");
    const auto back = codec::base64_decode("Zm9vYg==");
    CHECK(std::string(back.begin(), back.end()) == "foob");
    CHECK_THROWS_AS(codec::base64_decode("Zm9v*"), Error);
  }

  TEST_CASE("sha256 of abc") {
    CHECK(codec::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("matrix json round trip is exact after f32 rounding") {
    std::mt19937_64 rng(3);
    Matrix m = test::gaussian(4, 7, rng);
    codec::round_to_f32(m);
    const Matrix back = codec::matrix_from_json(codec::matrix_to_json(m));
    CHECK(back.rows() == 4);
    CHECK(back.cols() == 7);
    CHECK(back == m);
    const Matrix empty(3, 0);
    CHECK(codec::matrix_from_json(codec::matrix_to_json(empty)).rows() == 3);
  }

  TEST_CASE("atomic write replaces contents") {
    const auto dir = test::scratch("codec");
    codec::write_file_atomic(dir / "a.txt", "one");
    codec::write_file_atomic(dir / "a.txt", "two");
    CHECK(codec::read_file(dir / "a.txt") == "two");
    CHECK_THROWS_AS(codec::read_file(dir / "missing.txt"), Error);
  }
}
