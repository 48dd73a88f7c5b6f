#pragma once

#include <vector>

#include "pcsketch/image.hpp"

namespace pcsketch {

struct PixelPoint {
  int x = 0;
  int y = 0;
  bool operator==(const PixelPoint&) const = default;
  auto operator<=>(const PixelPoint&) const = default;
};

/// Closed border polyline; consecutive points are 8-adjacent and the last
/// point connects back to the first.
struct Contour {
  std::vector<PixelPoint> points;
  bool is_outer = true;
};

struct ContourParams {
  int median_kernel = 3;
  int threshold = 128;
  int stroke = 1;
};

/// luma = round(0.299 R + 0.587 G + 0.114 B).
GrayImage to_grayscale(const RgbImage& img);

/// k x k median with edge replication. Throws Validation for even or
/// non-positive k.
GrayImage median_filter(const GrayImage& img, int k = 3);

/// Ink where pixel < threshold.
BinaryImage binarize(const GrayImage& img, int threshold = 128);

/// Suzuki-Abe border following, 8-connected foreground. Returns every outer
/// border and every hole border in raster-scan discovery order.
std::vector<Contour> trace_contours(const BinaryImage& img);

/// Draws each closed polyline with a square brush of side `stroke`. Throws
/// Validation if any point lies outside the canvas.
SketchImage rasterize_contours(const std::vector<Contour>& contours, int width, int height, int stroke = 1);

/// grayscale -> median -> threshold -> trace -> rasterize at canvas size.
/// Contour coordinates are rescaled when the render and canvas differ.
SketchImage extract_model_contour(const RgbImage& rendered, int canvas_w, int canvas_h,
                                  const ContourParams& params = {});
SketchImage extract_model_contour(const GrayImage& rendered, int canvas_w, int canvas_h,
                                  const ContourParams& params = {});

}  // namespace pcsketch
