#include "pcsketch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "pcsketch/error.hpp"
#include "pcsketch/rng.hpp"

namespace pcsketch {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

std::vector<Vec3> apply_transform(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t.apply(p));
  return out;
}

AABB bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorKind::Validation, "bounding box of an empty point set");
  AABB box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Vec3 centroid(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorKind::Validation, "centroid of an empty point set");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

std::pair<std::vector<Vec3>, Normalization> normalize_unit(std::span<const Vec3> points) {
  const AABB box = bounding_box(points);
  const double diag = box.diagonal();
  if (!(diag > 0.0) || !std::isfinite(diag)) {
    throw Error(ErrorKind::Degenerate, "cannot normalize: all points coincide (zero AABB diagonal)");
  }
  Normalization record{centroid(points), 1.0 / diag};
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(record.apply(p));
  return {std::move(out), record};
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh, Normalization* record) {
  auto [vertices, rec] = normalize_unit(mesh.vertices);
  if (record) *record = rec;
  return TriangleMesh{std::move(vertices), mesh.faces};
}

PointCloud normalize_cloud(const PointCloud& cloud, Normalization* record) {
  auto [points, rec] = normalize_unit(cloud.points);
  if (record) *record = rec;
  return PointCloud{std::move(points)};
}

std::vector<Viewpoint> fibonacci_viewpoints(int n) {
  if (n < 1) throw Error(ErrorKind::Validation, "viewpoint count must be >= 1, got " + std::to_string(n));
  std::vector<Viewpoint> views;
  views.reserve(static_cast<std::size_t>(n));
  if (n == 1) {
    views.push_back({Vec3(0.0, 0.0, 1.0), 0});
    return views;
  }
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * i / static_cast<double>(n - 1);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    Vec3 d(r * std::cos(phi), r * std::sin(phi), z);
    views.push_back({d.normalized(), i});
  }
  return views;
}

namespace {

double triangle_area(const TriangleMesh& mesh, const std::array<std::uint32_t, 3>& f) {
  const Vec3& a = mesh.vertices[f[0]];
  const Vec3& b = mesh.vertices[f[1]];
  const Vec3& c = mesh.vertices[f[2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (const auto& f : mesh.faces) total += triangle_area(mesh, f);
  return total;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh, f);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw Error(ErrorKind::Degenerate, "mesh has zero surface area");

  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double s = std::sqrt(rng.uniform());
    const double t = rng.uniform();
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    out.push_back((1.0 - s) * a + s * (1.0 - t) * b + s * t * c);
  }
  return out;
}

Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace pcsketch
