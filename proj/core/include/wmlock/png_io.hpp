#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wmlock/raster.hpp"

namespace wmlock {

// 8-bit PNG codec. Gray, gray+alpha, palette and RGB inputs are promoted to
// RGBA with opaque alpha where the source has none. 16-bit inputs and
// malformed or truncated files raise DecodeError.
RgbaImage load_png(const std::filesystem::path& path);
RgbaImage decode_png(std::span<const std::uint8_t> bytes);

void save_png(const RgbaImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RgbaImage& image);

}  // namespace wmlock
