#include "wmlock/raster.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock {

namespace {

std::uint8_t clamp_round(double v) {
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

}  // namespace

RgbaImage::RgbaImage(int width, int height)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw ParameterError("image dimensions must be positive, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
  pixels_.assign(static_cast<std::size_t>(width) *
                     static_cast<std::size_t>(height) * kChannels,
                 0);
}

RgbaImage::RgbaImage(int width, int height, std::vector<std::uint8_t> pixels)
    : RgbaImage(width, height) {
  if (pixels.size() != pixels_.size()) {
    throw ParameterError("pixel buffer has " + std::to_string(pixels.size()) +
                         " bytes, expected " + std::to_string(pixels_.size()));
  }
  pixels_ = std::move(pixels);
}

void RgbaImage::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                     std::uint8_t a) {
  for (std::size_t i = 0; i < pixels_.size(); i += kChannels) {
    pixels_[i] = r;
    pixels_[i + 1] = g;
    pixels_[i + 2] = b;
    pixels_[i + 3] = a;
  }
}

WatermarkLogo load_logo(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  WatermarkLogo logo{decode_png(bytes),
                     std::filesystem::path(path).filename().string(),
                     to_hex(sha256(bytes))};
  return logo;
}

RgbaImage resize_bilinear(const RgbaImage& src, int out_w, int out_h) {
  RgbaImage out(out_w, out_h);
  if (out_w == src.width() && out_h == src.height()) {
    out = src;
    return out;
  }
  const double sx_scale = static_cast<double>(src.width()) / out_w;
  const double sy_scale = static_cast<double>(src.height()) / out_h;
  const int max_x = src.width() - 1;
  const int max_y = src.height() - 1;
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy =
        std::clamp((oy + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(max_y));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, max_y);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = std::clamp((ox + 0.5) * sx_scale - 0.5, 0.0,
                                   static_cast<double>(max_x));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, max_x);
      const double fx = sx - x0;
      for (int c = 0; c < RgbaImage::kChannels; ++c) {
        const double top = src.at(x0, y0, c) * (1.0 - fx) + src.at(x1, y0, c) * fx;
        const double bot = src.at(x0, y1, c) * (1.0 - fx) + src.at(x1, y1, c) * fx;
        out.at(ox, oy, c) = clamp_round(top * (1.0 - fy) + bot * fy);
      }
    }
  }
  return out;
}

ScaledSize scaled_logo_size(int logo_w, int logo_h, int host_w, int host_h,
                            double sl) {
  if (!(sl > 0.0) || !std::isfinite(sl)) {
    throw ParameterError("scaling factor must be positive and finite");
  }
  if (logo_w < 1 || logo_h < 1 || host_w < 1 || host_h < 1) {
    throw ParameterError("logo and host dimensions must be positive");
  }
  const double factor = std::min(host_w / (sl * logo_w), host_h / (sl * logo_h));
  const auto side = [factor](int n) {
    return static_cast<int>(std::max(1L, std::lround(factor * n)));
  };
  return {side(logo_w), side(logo_h)};
}

WatermarkLogo scale_logo(const WatermarkLogo& logo, int host_w, int host_h,
                         double sl) {
  const ScaledSize size =
      scaled_logo_size(logo.width(), logo.height(), host_w, host_h, sl);
  return WatermarkLogo{resize_bilinear(logo.image, size.width, size.height),
                       logo.logo_id, logo.content_hash};
}

std::vector<std::uint8_t> effective_alpha_map(const RgbaImage& logo, int alpha) {
  if (alpha < 0 || alpha > 255) {
    throw ParameterError("alpha must lie in [0, 255]");
  }
  std::vector<std::uint8_t> map(static_cast<std::size_t>(logo.width()) *
                                static_cast<std::size_t>(logo.height()));
  std::size_t k = 0;
  for (int q = 0; q < logo.height(); ++q) {
    for (int p = 0; p < logo.width(); ++p) {
      map[k++] = clamp_round(alpha * static_cast<double>(logo.at(p, q, 3)) / 255.0);
    }
  }
  return map;
}

void check_placement(const RgbaImage& host, const RgbaImage& logo,
                     const Placement& pl) {
  if (pl.alpha < 0 || pl.alpha > 255) {
    throw ParameterError("alpha " + std::to_string(pl.alpha) +
                         " outside [0, 255]");
  }
  if (pl.scaled_w != logo.width() || pl.scaled_h != logo.height()) {
    throw GeometryError("placement declares a " + std::to_string(pl.scaled_w) +
                        "x" + std::to_string(pl.scaled_h) + " logo but got " +
                        std::to_string(logo.width()) + "x" +
                        std::to_string(logo.height()));
  }
  if (pl.x < 0 || pl.y < 0 || pl.x > host.width() - logo.width() ||
      pl.y > host.height() - logo.height()) {
    throw GeometryError("logo at (" + std::to_string(pl.x) + ", " +
                        std::to_string(pl.y) + ") does not fit a " +
                        std::to_string(host.width()) + "x" +
                        std::to_string(host.height()) + " image");
  }
}

std::uint8_t blend_channel(std::uint8_t original, std::uint8_t logo, int a) {
  const double t = a / 255.0;
  return clamp_round((255 - a) / 255.0 * original + t * logo);
}

std::uint8_t unblend_channel(std::uint8_t locked, std::uint8_t logo, int a) {
  if (a >= 255) throw SingularInverseError("effective alpha 255 has no inverse");
  const double t = a / 255.0;
  return clamp_round((locked - t * logo) / ((255 - a) / 255.0));
}

int unblend_error_bound(int a) {
  if (a >= 255) throw SingularInverseError("effective alpha 255 has no inverse");
  return static_cast<int>(std::ceil(0.5 / ((255 - a) / 255.0)));
}

RgbaImage blend(const RgbaImage& original, const WatermarkLogo& logo,
                const Placement& pl) {
  check_placement(original, logo.image, pl);
  RgbaImage out = original;
  const auto alpha_map = effective_alpha_map(logo.image, pl.alpha);
  std::size_t k = 0;
  for (int q = 0; q < logo.height(); ++q) {
    for (int p = 0; p < logo.width(); ++p) {
      const int a = alpha_map[k++];
      if (a == 0) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(pl.x + p, pl.y + q, c) =
            blend_channel(original.at(pl.x + p, pl.y + q, c),
                          logo.image.at(p, q, c), a);
      }
    }
  }
  return out;
}

RgbaImage unblend_with_map(const RgbaImage& locked, const RgbaImage& logo,
                           int x, int y,
                           std::span<const std::uint8_t> alpha_map,
                           bool allow_opaque) {
  check_placement(locked, logo,
                  Placement{0, x, y, logo.width(), logo.height()});
  if (alpha_map.size() != static_cast<std::size_t>(logo.width()) *
                              static_cast<std::size_t>(logo.height())) {
    throw GeometryError("alpha map length does not match logo area");
  }
  if (!allow_opaque &&
      std::find(alpha_map.begin(), alpha_map.end(), 255) != alpha_map.end()) {
    throw SingularInverseError(
        "effective alpha 255 inside the footprint has no inverse");
  }
  RgbaImage out = locked;
  std::size_t k = 0;
  for (int q = 0; q < logo.height(); ++q) {
    for (int p = 0; p < logo.width(); ++p) {
      const int a = alpha_map[k++];
      if (a == 0 || a == 255) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(x + p, y + q, c) =
            unblend_channel(locked.at(x + p, y + q, c), logo.at(p, q, c), a);
      }
    }
  }
  return out;
}

RgbaImage unblend(const RgbaImage& locked, const WatermarkLogo& logo,
                  const Placement& pl) {
  check_placement(locked, logo.image, pl);
  const auto alpha_map = effective_alpha_map(logo.image, pl.alpha);
  return unblend_with_map(locked, logo.image, pl.x, pl.y, alpha_map);
}

}  // namespace wmlock
