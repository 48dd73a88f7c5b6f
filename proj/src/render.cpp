#include "pcsketch/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcsketch/error.hpp"

namespace pcsketch {

CameraFrame camera_basis(const Viewpoint& v) {
  CameraFrame frame;
  frame.forward = -v.direction;
  const Vec3 seed = std::abs(v.direction.z()) > 0.999 ? Vec3::UnitX() : Vec3::UnitZ();
  frame.up = (seed - seed.dot(frame.forward) * frame.forward).normalized();
  frame.right = frame.up.cross(frame.forward);
  return frame;
}

Point2 ImageFit::centered(const Vec3& p) const {
  const double u = frame.right.dot(p);
  const double v = -frame.up.dot(p);
  return {scale * (u - center_u), scale * (v - center_v)};
}

Point2 ImageFit::to_pixel(const Vec3& p) const {
  const Point2 c = centered(p);
  return {c.x + width / 2.0, c.y + height / 2.0};
}

ImageFit fit_to_image(std::span<const Vec3> points, const Viewpoint& v, int width, int height, double margin) {
  if (points.empty()) throw Error(ErrorKind::Validation, "cannot fit an empty point set to an image");
  if (width < 1 || height < 1) throw Error(ErrorKind::Validation, "image dimensions must be >= 1");
  if (!(margin >= 0.0 && margin < 0.5)) throw Error(ErrorKind::Validation, "margin must lie in [0, 0.5)");

  ImageFit fit;
  fit.frame = camera_basis(v);
  fit.width = width;
  fit.height = height;
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  for (const auto& p : points) {
    const double u = fit.frame.right.dot(p);
    const double w = -fit.frame.up.dot(p);
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, w);
    v_max = std::max(v_max, w);
  }
  const double span = std::max(u_max - u_min, v_max - v_min);
  fit.center_u = 0.5 * (u_min + u_max);
  fit.center_v = 0.5 * (v_min + v_max);
  fit.scale = span > 0.0 ? std::min(width, height) * (1.0 - 2.0 * margin) / span : 1.0;
  return fit;
}

namespace {

double edge(const Point2& a, const Point2& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

bool projected_collinear(std::span<const Point2> pts) {
  // Farthest pair from the first point, then the largest offset from that line.
  std::size_t far = 0;
  double best = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = std::hypot(pts[i].x - pts[0].x, pts[i].y - pts[0].y);
    if (d > best) {
      best = d;
      far = i;
    }
  }
  if (best == 0.0) return true;
  double area = 0.0;
  for (const auto& p : pts) area = std::max(area, std::abs(edge(pts[0], pts[far], p.x, p.y)));
  return area <= 1e-9 * best * best;
}

}  // namespace

BinaryImage rasterize_silhouette(const TriangleMesh& mesh, const Viewpoint& v, int width, int height,
                                 double margin) {
  if (mesh.vertices.empty() || mesh.faces.empty()) throw Error(ErrorKind::Validation, "cannot rasterize an empty mesh");
  if (width < 16 || height < 16) throw Error(ErrorKind::Validation, "silhouette images must be at least 16x16");

  const ImageFit fit = fit_to_image(mesh.vertices, v, width, height, margin);
  std::vector<Point2> projected;
  projected.reserve(mesh.vertices.size());
  for (const auto& p : mesh.vertices) projected.push_back(fit.centered(p));
  if (projected_collinear(projected)) {
    throw Error(ErrorKind::Degenerate, "mesh projects onto a line from this viewpoint");
  }

  BinaryImage img(width, height);
  const double half_w = width / 2.0;
  const double half_h = height / 2.0;
  for (const auto& f : mesh.faces) {
    const Point2& a = projected[f[0]];
    const Point2& b = projected[f[1]];
    const Point2& c = projected[f[2]];
    if (edge(a, b, c.x, c.y) == 0.0) continue;

    // Pixel i has its center at (i + 0.5) - half_w in centered coordinates.
    const double x_lo = std::min({a.x, b.x, c.x}) + half_w - 0.5;
    const double x_hi = std::max({a.x, b.x, c.x}) + half_w - 0.5;
    const double y_lo = std::min({a.y, b.y, c.y}) + half_h - 0.5;
    const double y_hi = std::max({a.y, b.y, c.y}) + half_h - 0.5;
    const int i0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    const int i1 = std::min(width - 1, static_cast<int>(std::ceil(x_hi)));
    const int j0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    const int j1 = std::min(height - 1, static_cast<int>(std::ceil(y_hi)));
    for (int j = j0; j <= j1; ++j) {
      const double py = (j + 0.5) - half_h;
      for (int i = i0; i <= i1; ++i) {
        const double px = (i + 0.5) - half_w;
        const double e0 = edge(a, b, px, py);
        const double e1 = edge(b, c, px, py);
        const double e2 = edge(c, a, px, py);
        if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) img.set(i, j);
      }
    }
  }
  return img;
}

GrayImage render_silhouette(const TriangleMesh& mesh, const Viewpoint& v, int width, int height, double margin) {
  return to_gray(rasterize_silhouette(mesh, v, width, height, margin));
}

std::vector<Point2> project_points(const PointCloud& cloud, const Viewpoint& v, int width, int height,
                                   double margin) {
  if (cloud.empty()) throw Error(ErrorKind::Validation, "cannot project an empty point cloud");
  const ImageFit fit = fit_to_image(cloud.points, v, width, height, margin);
  std::vector<Point2> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back(fit.to_pixel(p));
  return out;
}

GrayImage render_points(std::span<const Point2> points, int width, int height) {
  GrayImage img(width, height);
  for (const auto& p : points) {
    const int cx = static_cast<int>(std::floor(p.x));
    const int cy = static_cast<int>(std::floor(p.y));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x >= 0 && y >= 0 && x < width && y < height) img.at(x, y) = 0;
      }
    }
  }
  return img;
}

}  // namespace pcsketch
