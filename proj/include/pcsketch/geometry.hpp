#pragma once

#include <cstdint>
#include <array>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pcsketch {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

// Rotation then translation: p -> R*p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;

  // Orthonormal with det +1, both within tol.
  bool is_valid(double tol = 1e-9) const;
};

// compose(a, b) applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

std::vector<Vec3> apply_transform(const RigidTransform& t, std::span<const Vec3> points);

struct AABB {
  Vec3 min;
  Vec3 max;

  double diagonal() const { return (max - min).norm(); }
  Vec3 center() const { return 0.5 * (min + max); }
};

/// Throws Validation on an empty point set.
AABB bounding_box(std::span<const Vec3> points);

Vec3 centroid(std::span<const Vec3> points);

/// Similarity that maps a point set to zero centroid and unit AABB diagonal:
/// p -> (p - centroid) * scale.
struct Normalization {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - centroid) * scale; }
  Vec3 invert(const Vec3& q) const { return q / scale + centroid; }
};

/// Throws Degenerate when the AABB diagonal is zero (coincident points).
std::pair<std::vector<Vec3>, Normalization> normalize_unit(std::span<const Vec3> points);

TriangleMesh normalize_mesh(const TriangleMesh& mesh, Normalization* record = nullptr);
PointCloud normalize_cloud(const PointCloud& cloud, Normalization* record = nullptr);

struct Viewpoint {
  Vec3 direction;  // unit; camera sits along +direction and looks toward the origin
  int index = 0;
};

/// Spherical Fibonacci lattice with both poles included; index 0 is +z.
std::vector<Viewpoint> fibonacci_viewpoints(int n);

double surface_area(const TriangleMesh& mesh);

/// Area-weighted uniform samples on the mesh surface.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

/// Rotation about a unit axis, right-hand rule.
Mat3 axis_angle(const Vec3& axis, double radians);

/// Geodesic distance between rotations, in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace pcsketch
