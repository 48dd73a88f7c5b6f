#include "pcsketch/image.hpp"

#include <algorithm>
#include <cstring>

#include <png.h>

#include "pcsketch/error.hpp"
#include "pcsketch/geometry_io.hpp"

namespace pcsketch {
namespace {

void check_dims(int w, int h) {
  if (w < 1 || h < 1) {
    throw Error(ErrorKind::Validation, "image dimensions must be >= 1, got " + std::to_string(w) + "x" + std::to_string(h));
  }
}

}  // namespace

GrayImage::GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
  check_dims(w, h);
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

RgbImage::RgbImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
  check_dims(w, h);
  pixels.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

BinaryImage::BinaryImage(int w, int h) : width(w), height(h) {
  check_dims(w, h);
  pixels.assign(static_cast<std::size_t>(w) * h, 0);
}

std::size_t BinaryImage::ink_count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p != 0; }));
}

GrayImage to_gray(const BinaryImage& img) {
  GrayImage out(img.width, img.height);
  std::transform(img.pixels.begin(), img.pixels.end(), out.pixels.begin(),
                 [](std::uint8_t p) -> std::uint8_t { return p ? 0 : 255; });
  return out;
}

std::string encode_png(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::string encode_png(const BinaryImage& img) { return encode_png(to_gray(img)); }

RgbImage decode_png_rgb(std::string_view bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::Parse, std::string("not a readable PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::Parse, std::string("PNG decode failed: ") + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) { write_text_file(path, encode_png(img)); }

void write_png(const std::filesystem::path& path, const BinaryImage& img) { write_text_file(path, encode_png(img)); }

RgbImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png_rgb(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace pcsketch
