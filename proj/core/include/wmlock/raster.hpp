#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wmlock {

// 8-bit RGBA raster, row-major, 4 interleaved channels per pixel.
class RgbaImage {
 public:
  static constexpr int kChannels = 4;

  // Zero-filled image. Throws ParameterError unless width, height >= 1.
  RgbaImage(int width, int height);
  // Takes ownership of `pixels`; its size must be width * height * 4.
  RgbaImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  std::uint8_t at(int x, int y, int c) const noexcept {
    return pixels_[index(x, y, c)];
  }
  std::uint8_t& at(int x, int y, int c) noexcept {
    return pixels_[index(x, y, c)];
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  // Sets every pixel to (r, g, b, a).
  void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a);

  friend bool operator==(const RgbaImage&, const RgbaImage&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               kChannels +
           static_cast<std::size_t>(c);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

// A watermark logo. `content_hash` is the lowercase hex SHA-256 of the logo
// file bytes and survives rescaling, so it always identifies the source file.
struct WatermarkLogo {
  RgbaImage image;
  std::string logo_id;
  std::string content_hash;

  int width() const noexcept { return image.width(); }
  int height() const noexcept { return image.height(); }
};

// Loads a logo from a PNG file and hashes its bytes.
WatermarkLogo load_logo(const std::string& path);

// Logo placement: scalar transparency plus the logo's top-left corner in host
// coordinates. scaled_w/scaled_h are the dimensions of the logo actually
// composited.
struct Placement {
  int alpha = 255;
  int x = 0;
  int y = 0;
  int scaled_w = 0;
  int scaled_h = 0;
};

// Bilinear resample of all four channels using pixel-center alignment.
// Resizing to the source dimensions returns an identical image.
RgbaImage resize_bilinear(const RgbaImage& src, int out_w, int out_h);

// Target size of a logo on a host image for scaling factor `sl`:
// factor = min(host_w / (sl * M), host_h / (sl * N)), each side rounded to
// nearest with a floor of 1.
struct ScaledSize {
  int width;
  int height;
};
ScaledSize scaled_logo_size(int logo_w, int logo_h, int host_w, int host_h,
                            double sl);

WatermarkLogo scale_logo(const WatermarkLogo& logo, int host_w, int host_h,
                         double sl);

// Effective per-pixel alpha of a placed logo: round(alpha * A_logo / 255),
// row-major over the logo footprint.
std::vector<std::uint8_t> effective_alpha_map(const RgbaImage& logo, int alpha);

// Throws GeometryError when the placement does not fit `host` or disagrees
// with the logo dimensions, ParameterError when alpha is outside [0, 255].
void check_placement(const RgbaImage& host, const RgbaImage& logo,
                     const Placement& placement);

// Alpha-blends `logo` (already scaled) into a copy of `original`. Only the
// footprint's RGB channels change; the output alpha channel is the original's.
RgbaImage blend(const RgbaImage& original, const WatermarkLogo& logo,
                const Placement& placement);

// Inverse blend. Throws SingularInverseError if any footprint pixel has an
// effective alpha of 255.
RgbaImage unblend(const RgbaImage& locked, const WatermarkLogo& logo,
                  const Placement& placement);

// Inverse blend with an explicit effective-alpha map (length = logo area).
// When `allow_opaque` is set, pixels with alpha 255 are copied from `locked`
// instead of raising.
RgbaImage unblend_with_map(const RgbaImage& locked, const RgbaImage& logo,
                           int x, int y,
                           std::span<const std::uint8_t> alpha_map,
                           bool allow_opaque = false);

// Per-channel reconstruction error bound of unblend(blend(.)) for effective
// alpha `a` < 255: ceil(0.5 / (1 - a/255)).
int unblend_error_bound(int a);

// Single-channel arithmetic, exposed for tests and tools.
std::uint8_t blend_channel(std::uint8_t original, std::uint8_t logo, int a);
std::uint8_t unblend_channel(std::uint8_t locked, std::uint8_t logo, int a);

}  // namespace wmlock
