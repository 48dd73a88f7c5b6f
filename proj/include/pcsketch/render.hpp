#pragma once

#include <vector>

#include "pcsketch/geometry.hpp"
#include "pcsketch/image.hpp"

namespace pcsketch {

// Right-handed screen frame in the sense right x up = forward.
struct CameraFrame {
  Vec3 right;
  Vec3 up;
  Vec3 forward;
};

/// forward = -direction; up is world +z made perpendicular to forward (world
/// +x when the view is within ~2.6 degrees of the z axis); right = up x forward.
CameraFrame camera_basis(const Viewpoint& v);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Orthographic projection onto the camera plane, uniformly scaled so the
/// projected extent fills min(width, height) * (1 - 2 * margin) and centered
/// on the image. Image x runs along `right`, image y along `-up`.
struct ImageFit {
  CameraFrame frame;
  int width = 0;
  int height = 0;
  double scale = 1.0;
  double center_u = 0.0;  // midpoint of the projected extent
  double center_v = 0.0;

  /// Position relative to the image center, in pixels.
  Point2 centered(const Vec3& p) const;
  Point2 to_pixel(const Vec3& p) const;
};

/// Throws Validation for empty input or images smaller than 1 px. A
/// zero-extent projection (single point) keeps scale 1.
ImageFit fit_to_image(std::span<const Vec3> points, const Viewpoint& v, int width, int height,
                      double margin = 0.1);

/// Filled silhouette: every pixel whose center lies inside (or on the edge of)
/// any projected triangle is foreground. No depth test.
///
/// Throws Validation for an empty mesh or images smaller than 16 px, and
/// Degenerate when all vertices project onto a single line.
BinaryImage rasterize_silhouette(const TriangleMesh& mesh, const Viewpoint& v, int width, int height,
                                 double margin = 0.1);

/// Same as rasterize_silhouette but drawn as ink (0) on white (255).
GrayImage render_silhouette(const TriangleMesh& mesh, const Viewpoint& v, int width, int height,
                            double margin = 0.1);

/// Pixel coordinates (continuous; pixel (i, j) covers [i, i+1) x [j, j+1))
/// under the same camera and fit rules as rasterize_silhouette.
std::vector<Point2> project_points(const PointCloud& cloud, const Viewpoint& v, int width, int height,
                                   double margin = 0.1);

/// Projected points drawn as 3x3 ink dots.
GrayImage render_points(std::span<const Point2> points, int width, int height);

}  // namespace pcsketch
