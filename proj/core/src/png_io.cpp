#include "wmlock/png_io.hpp"

#include <png.h>

#include <cstring>

#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"

namespace wmlock {

namespace {

// RAII guard for png_image; png_image_free is a no-op on a finished image.
struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

RgbaImage finish_read(PngImage& png) {
  if (png.img.format & PNG_FORMAT_FLAG_LINEAR) {
    throw DecodeError("unsupported bit depth: only 8-bit PNG is accepted");
  }
  if (png.img.width == 0 || png.img.height == 0) {
    throw DecodeError("PNG has zero extent");
  }
  png.img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png.img));
  if (!png_image_finish_read(&png.img, nullptr, pixels.data(), 0, nullptr)) {
    throw DecodeError(std::string("PNG decode failed: ") + png.img.message);
  }
  return RgbaImage(static_cast<int>(png.img.width),
                   static_cast<int>(png.img.height), std::move(pixels));
}

void prepare_write(PngImage& png, const RgbaImage& image) {
  png.img.width = static_cast<png_uint_32>(image.width());
  png.img.height = static_cast<png_uint_32>(image.height());
  png.img.format = PNG_FORMAT_RGBA;
}

}  // namespace

RgbaImage decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size())) {
    throw DecodeError(std::string("malformed PNG: ") + png.img.message);
  }
  return finish_read(png);
}

RgbaImage load_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_png(const RgbaImage& image) {
  PngImage png;
  prepare_write(png, image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.img, nullptr, &size, 0,
                                 image.pixels().data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.img, out.data(), &size, 0,
                                 image.pixels().data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.img.message);
  }
  out.resize(size);
  return out;
}

void save_png(const RgbaImage& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(image));
}

}  // namespace wmlock
