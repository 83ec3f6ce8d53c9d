#include "tempdens/codec.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tempdens/error.hpp"

namespace tempdens {

std::string to_string(StateKind kind) {
  switch (kind) {
    case StateKind::kRest: return "rest";
    case StateKind::kId: return "id";
    case StateKind::kOod: return "ood";
    case StateKind::kExcluded: return "excluded";
  }
  return "rest";
}

StateKind state_kind_from_string(const std::string& name) {
  if (name == "rest") return StateKind::kRest;
  if (name == "id") return StateKind::kId;
  if (name == "ood") return StateKind::kOod;
  if (name == "excluded") return StateKind::kExcluded;
  fail(ErrorCode::kParse, "unknown state kind '" + name + "'");
}

}  // namespace tempdens

namespace tempdens::codec {

static_assert(std::endian::native == std::endian::little,
              "packed f32 blocks assume a little-endian host");

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.empty()) return {};
  require(text.size() % 4 == 0, ErrorCode::kParse, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  require(n >= 0, ErrorCode::kParse, "invalid base64 payload");
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::vector<std::uint8_t> pack_f32(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + i * sizeof(float), &f, sizeof(float));
  }
  return out;
}

std::vector<double> unpack_f32(std::span<const std::uint8_t> bytes) {
  require(bytes.size() % sizeof(float) == 0, ErrorCode::kSizeMismatch,
          "packed f32 block length is not a multiple of 4");
  std::vector<double> out(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    out[i] = f;
  }
  return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> row_major(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      row_major[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"f32", base64_encode(pack_f32(row_major))}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto values = unpack_f32(base64_decode(j.at("f32").get<std::string>()));
  require(static_cast<Index>(values.size()) == rows * cols, ErrorCode::kSizeMismatch,
          "matrix block holds " + std::to_string(values.size()) + " values, expected " +
              std::to_string(rows * cols));
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  return {{"size", v.size()},
          {"f32", base64_encode(pack_f32(std::span<const double>(v.data(), v.size())))}};
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto size = j.at("size").get<Index>();
  const auto values = unpack_f32(base64_decode(j.at("f32").get<std::string>()));
  require(static_cast<Index>(values.size()) == size, ErrorCode::kSizeMismatch,
          "vector block size mismatch");
  return Eigen::Map<const Vector>(values.data(), size);
}

void round_to_f32(Matrix& m) {
  m = m.cast<float>().cast<double>();
}

void round_to_f32(Vector& v) {
  v = v.cast<float>().cast<double>();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace tempdens::codec
