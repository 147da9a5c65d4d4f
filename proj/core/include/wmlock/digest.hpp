#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wmlock {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view bytes);
std::string to_hex(const Sha256& digest);

// Lowercase hex SHA-256 of the raw bytes of a file.
std::string sha256_file_hex(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws DecodeError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace wmlock
