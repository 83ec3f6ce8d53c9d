#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tempdens/types.hpp"

namespace tempdens::codec {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian f32 packing of doubles (values are rounded to float).
std::vector<std::uint8_t> pack_f32(std::span<const double> values);
std::vector<double> unpack_f32(std::span<const std::uint8_t> bytes);

/// Row-major matrix block: {"rows", "cols", "f32": base64}.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// Rounds every entry through float so in-memory values match a saved copy.
void round_to_f32(Matrix& m);
void round_to_f32(Vector& v);

std::string sha256_hex(std::string_view data);

/// Writes to a sibling temporary file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace tempdens::codec
