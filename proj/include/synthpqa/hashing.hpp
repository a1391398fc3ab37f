#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace synthpqa {

/// 64-bit FNV-1a over the raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents; throws IoError when unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace synthpqa
