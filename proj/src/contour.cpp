#include "pcsketch/contour.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "pcsketch/error.hpp"

namespace pcsketch {

GrayImage to_grayscale(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  const std::size_t n = out.pixels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double luma = 0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] + 0.114 * img.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
  }
  return out;
}

GrayImage median_filter(const GrayImage& img, int k) {
  if (k < 1 || k % 2 == 0) throw Error(ErrorKind::Validation, "median kernel must be odd and >= 1, got " + std::to_string(k));
  const int r = k / 2;
  const int w = img.width;
  const int h = img.height;
  GrayImage out(w, h);
  const std::size_t window = static_cast<std::size_t>(k) * k;
  const auto mid = static_cast<std::ptrdiff_t>(window / 2);

#pragma omp parallel
  {
    std::vector<std::uint8_t> buf(window);
#pragma omp for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) buf[n++] = img.at(std::clamp(x + dx, 0, w - 1), yy);
        }
        std::nth_element(buf.begin(), buf.begin() + mid, buf.end());
        out.at(x, y) = buf[static_cast<std::size_t>(mid)];
      }
    }
  }
  return out;
}

BinaryImage binarize(const GrayImage& img, int threshold) {
  if (threshold < 0 || threshold > 255) throw Error(ErrorKind::Validation, "threshold must lie in [0, 255]");
  BinaryImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = img.pixels[i] < threshold ? 1 : 0;
  return out;
}

namespace {

// Neighbor offsets (drow, dcol), counterclockwise on screen starting east.
constexpr std::array<int, 8> kDr{0, -1, -1, -1, 0, 1, 1, 1};
constexpr std::array<int, 8> kDc{1, 1, 0, -1, -1, -1, 0, 1};

int direction_of(int dr, int dc) {
  for (int d = 0; d < 8; ++d) {
    if (kDr[static_cast<std::size_t>(d)] == dr && kDc[static_cast<std::size_t>(d)] == dc) return d;
  }
  return -1;
}

class BorderFollower {
 public:
  explicit BorderFollower(const BinaryImage& img) : rows_(img.height + 2), cols_(img.width + 2) {
    label_.assign(static_cast<std::size_t>(rows_) * cols_, 0);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) at(y + 1, x + 1) = img.at(x, y) ? 1 : 0;
    }
  }

  std::vector<Contour> run() {
    std::vector<Contour> contours;
    int nbd = 1;
    for (int i = 1; i < rows_ - 1; ++i) {
      for (int j = 1; j < cols_ - 1; ++j) {
        const int v = at(i, j);
        if (v == 0) continue;
        if (v == 1 && at(i, j - 1) == 0) {
          ++nbd;
          contours.push_back(follow(i, j, i, j - 1, nbd, true));
        } else if (v >= 1 && at(i, j + 1) == 0) {
          ++nbd;
          contours.push_back(follow(i, j, i, j + 1, nbd, false));
        }
      }
    }
    return contours;
  }

 private:
  int& at(int r, int c) { return label_[static_cast<std::size_t>(r) * cols_ + c]; }

  Contour follow(int i, int j, int i2, int j2, int nbd, bool outer) {
    Contour contour;
    contour.is_outer = outer;
    contour.points.push_back({j - 1, i - 1});

    // Clockwise search from (i2, j2) for the first nonzero neighbor.
    const int start = direction_of(i2 - i, j2 - j);
    int found = -1;
    for (int s = 0; s < 8; ++s) {
      const int d = (start - s + 8) % 8;
      if (at(i + kDr[static_cast<std::size_t>(d)], j + kDc[static_cast<std::size_t>(d)]) != 0) {
        found = d;
        break;
      }
    }
    if (found < 0) {
      at(i, j) = -nbd;
      return contour;
    }
    const int i1 = i + kDr[static_cast<std::size_t>(found)];
    const int j1 = j + kDc[static_cast<std::size_t>(found)];
    i2 = i1;
    j2 = j1;
    int i3 = i, j3 = j;
    for (;;) {
      // Counterclockwise search around (i3, j3), starting after (i2, j2).
      const int from = direction_of(i2 - i3, j2 - j3);
      bool east_zero_examined = false;
      int i4 = 0, j4 = 0;
      for (int s = 1; s <= 8; ++s) {
        const int d = (from + s) % 8;
        const int r = i3 + kDr[static_cast<std::size_t>(d)];
        const int c = j3 + kDc[static_cast<std::size_t>(d)];
        if (at(r, c) != 0) {
          i4 = r;
          j4 = c;
          break;
        }
        if (d == 0) east_zero_examined = true;
      }
      if (east_zero_examined) {
        at(i3, j3) = -nbd;
      } else if (at(i3, j3) == 1) {
        at(i3, j3) = nbd;
      }
      if (i4 == i && j4 == j && i3 == i1 && j3 == j1) break;
      i2 = i3;
      j2 = j3;
      i3 = i4;
      j3 = j4;
      contour.points.push_back({j3 - 1, i3 - 1});
    }
    return contour;
  }

  int rows_;
  int cols_;
  std::vector<int> label_;
};

void stamp(SketchImage& img, int x, int y, int stroke) {
  const int lo = -(stroke - 1) / 2;
  const int hi = stroke / 2;
  for (int dy = lo; dy <= hi; ++dy) {
    for (int dx = lo; dx <= hi; ++dx) {
      if (img.in_bounds(x + dx, y + dy)) img.set(x + dx, y + dy);
    }
  }
}

void draw_segment(SketchImage& img, PixelPoint a, PixelPoint b, int stroke) {
  int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
  const int sx = a.x < b.x ? 1 : -1;
  const int sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    stamp(img, a.x, a.y, stroke);
    if (a.x == b.x && a.y == b.y) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      a.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      a.y += sy;
    }
  }
}

}  // namespace

std::vector<Contour> trace_contours(const BinaryImage& img) { return BorderFollower(img).run(); }

SketchImage rasterize_contours(const std::vector<Contour>& contours, int width, int height, int stroke) {
  if (stroke < 1) throw Error(ErrorKind::Validation, "stroke width must be >= 1");
  SketchImage img(width, height);
  for (const auto& contour : contours) {
    for (const auto& p : contour.points) {
      if (!img.in_bounds(p.x, p.y)) {
        throw Error(ErrorKind::Validation, "contour point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                               ") lies outside the " + std::to_string(width) + "x" +
                                               std::to_string(height) + " canvas");
      }
    }
    const auto& pts = contour.points;
    if (pts.size() == 1) {
      stamp(img, pts[0].x, pts[0].y, stroke);
      continue;
    }
    for (std::size_t k = 0; k < pts.size(); ++k) draw_segment(img, pts[k], pts[(k + 1) % pts.size()], stroke);
  }
  return img;
}

SketchImage extract_model_contour(const GrayImage& rendered, int canvas_w, int canvas_h, const ContourParams& params) {
  const BinaryImage mask = binarize(median_filter(rendered, params.median_kernel), params.threshold);
  std::vector<Contour> contours = trace_contours(mask);
  if (rendered.width != canvas_w || rendered.height != canvas_h) {
    for (auto& c : contours) {
      for (auto& p : c.points) {
        p.x = static_cast<int>(static_cast<long long>(p.x) * canvas_w / rendered.width);
        p.y = static_cast<int>(static_cast<long long>(p.y) * canvas_h / rendered.height);
      }
    }
  }
  return rasterize_contours(contours, canvas_w, canvas_h, params.stroke);
}

SketchImage extract_model_contour(const RgbImage& rendered, int canvas_w, int canvas_h, const ContourParams& params) {
  return extract_model_contour(to_grayscale(rendered), canvas_w, canvas_h, params);
}

}  // namespace pcsketch
