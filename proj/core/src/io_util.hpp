#pragma once

// Internal helpers shared by the on-disk formats: raw little-endian arrays and
// JSON encodings of the geometry types.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "xloc/errors.hpp"
#include "xloc/geometry.hpp"

namespace xloc::io {

using json = nlohmann::json;

template <typename T>
void write_array(const std::filesystem::path& path, std::span<const T> data) {
  static_assert(sizeof(T) == 4 && std::is_trivially_copyable_v<T>);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size_bytes()));
  } else {
    for (const T& v : data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) | (bits >> 24);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) fail(ErrorCategory::kIo, "short write to " + path.string());
}

// Reads exactly `count` 4-byte little-endian values. A missing file is
// kCorruptStore; a size mismatch is kTruncatedArray.
template <typename T>
std::vector<T> read_array(const std::filesystem::path& path, std::size_t count) {
  static_assert(sizeof(T) == 4 && std::is_trivially_copyable_v<T>);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    fail(ErrorCategory::kCorruptStore, "missing array file " + path.string());
  }
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size != count * 4) {
    fail(ErrorCategory::kTruncatedArray,
         path.string() + ": expected " + std::to_string(count * 4) + " bytes, found " +
             std::to_string(ec ? 0 : size));
  }
  std::vector<T> data(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4));
  if (!in) fail(ErrorCategory::kTruncatedArray, "short read from " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) | (bits >> 24);
      std::memcpy(&v, &bits, 4);
    }
  }
  return data;
}

// Parses a JSON file. Unreadable or malformed files raise `on_error`.
json read_json(const std::filesystem::path& path, ErrorCategory on_error);
void write_json(const std::filesystem::path& path, const json& doc);

json to_json(const Pose& pose);
Pose pose_from_json(const json& j);
json to_json(const CameraIntrinsics& K);
CameraIntrinsics intrinsics_from_json(const json& j);

// Typed field access that raises `category` instead of nlohmann exceptions.
template <typename T>
T get_field(const json& j, const char* key, ErrorCategory category) {
  if (!j.is_object() || !j.contains(key)) {
    fail(category, std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(category, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace xloc::io
