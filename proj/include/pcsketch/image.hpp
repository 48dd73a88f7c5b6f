#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pcsketch {

// All images are row-major with a top-left origin and y pointing down.

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 0 = ink, 255 = background

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 255);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved R, G, B

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255);
};

// One byte per pixel, 1 = foreground ink.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  BinaryImage() = default;
  BinaryImage(int w, int h);

  bool at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { pixels[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t ink_count() const;
  bool operator==(const BinaryImage&) const = default;
};

// Foreground = ink stroke.
using SketchImage = BinaryImage;

/// Ink -> 0, background -> 255.
GrayImage to_gray(const BinaryImage& img);

std::string encode_png(const GrayImage& img);
std::string encode_png(const BinaryImage& img);

/// Decodes any PNG and flattens it to 8-bit RGB over a white background.
RgbImage decode_png_rgb(std::string_view bytes);

void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const BinaryImage& img);
RgbImage read_png(const std::filesystem::path& path);

}  // namespace pcsketch
