#include "pcsketch/icp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "pcsketch/error.hpp"
#include "pcsketch/kdtree.hpp"
#include "pcsketch/rng.hpp"

namespace pcsketch {

PointCloud select_control_points(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.empty()) throw Error(ErrorKind::Validation, "cannot select control points from an empty cloud");
  if (cloud.size() <= n) return cloud;
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  out.points.reserve(n);
  for (auto i : idx) out.points.push_back(cloud.points[i]);
  return out;
}

CorrespondenceSet nearest_neighbor_pairs(const PointCloud& controls, const PointCloud& model) {
  if (controls.empty() || model.empty()) throw Error(ErrorKind::Validation, "nearest-neighbor pairing needs non-empty inputs");
  const KdTree tree(model.points);
  CorrespondenceSet pairs(controls.size());
  const auto n = static_cast<std::ptrdiff_t>(controls.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& c = controls.points[static_cast<std::size_t>(i)];
    const auto hit = tree.nearest(c);
    pairs[static_cast<std::size_t>(i)] = {c, model.points[hit.index], std::sqrt(hit.dist2), hit.index};
  }
  return pairs;
}

RigidTransform rigid_fit(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size()) throw Error(ErrorKind::Validation, "rigid fit needs equally many source and target points");
  if (source.size() < 3) throw Error(ErrorKind::Validation, "rigid fit needs at least 3 pairs, got " + std::to_string(source.size()));

  const Vec3 p_bar = centroid(source);
  const Vec3 q_bar = centroid(target);
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) h += (source[i] - p_bar) * (target[i] - q_bar).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-10 * sv(0)) {
    throw Error(ErrorKind::Degenerate, "degenerate rigid fit: correspondences are collinear or coincident");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = q_bar - t.rotation * p_bar;
  return t;
}

RigidTransform rigid_fit(const CorrespondenceSet& pairs) {
  std::vector<Vec3> source, target;
  source.reserve(pairs.size());
  target.reserve(pairs.size());
  for (const auto& p : pairs) {
    source.push_back(p.model);
    target.push_back(p.control);
  }
  return rigid_fit(source, target);
}

double prescale_model(const PointCloud& model, const PointCloud& cloud) {
  const double model_diag = bounding_box(model.points).diagonal();
  if (!(model_diag > 0.0)) throw Error(ErrorKind::Degenerate, "model has a zero AABB diagonal");
  const double cloud_diag = bounding_box(cloud.points).diagonal();
  if (!(cloud_diag > 0.0)) throw Error(ErrorKind::Degenerate, "cloud has a zero AABB diagonal");
  return cloud_diag / model_diag;
}

PointCloud scale_about_centroid(const PointCloud& model, double scale) {
  const Vec3 c = centroid(model.points);
  PointCloud out;
  out.points.reserve(model.size());
  for (const auto& p : model.points) out.points.push_back(c + scale * (p - c));
  return out;
}

double rms_error(const CorrespondenceSet& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.distance * p.distance;
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

PointCloud icp_model_points(const TriangleMesh& mesh, std::uint64_t seed) {
  PointCloud pts{mesh.vertices};
  if (pts.size() >= 1000) return pts;
  auto extra = sample_surface(mesh, 2000 - pts.size(), seed);
  pts.points.insert(pts.points.end(), extra.begin(), extra.end());
  return pts;
}

IcpResult icp(const PointCloud& model, const PointCloud& cloud, const IcpParams& params) {
  if (model.empty() || cloud.empty()) throw Error(ErrorKind::Validation, "ICP needs non-empty model and cloud");
  if (params.n_control < 3) throw Error(ErrorKind::Validation, "ICP needs at least 3 control points");
  if (params.max_iters < 1) throw Error(ErrorKind::Validation, "ICP max_iters must be >= 1");
  if (!(params.tol > 0.0)) throw Error(ErrorKind::Validation, "ICP tolerance must be positive");

  IcpResult result;
  const Vec3 model_centroid = centroid(model.points);
  const double ratio = prescale_model(model, cloud);
  const bool rescale = ratio > params.prescale_gate || ratio < 1.0 / params.prescale_gate;
  result.prescale = rescale ? ratio : 1.0;
  PointCloud current = rescale ? scale_about_centroid(model, ratio) : model;

  // Initial pose: centroids coincide.
  RigidTransform pose;
  pose.translation = centroid(cloud.points) - centroid(current.points);
  for (auto& p : current.points) p += pose.translation;

  const PointCloud controls = select_control_points(cloud, params.n_control, params.seed);
  double previous = 0.0;
  for (int it = 1; it <= params.max_iters; ++it) {
    const auto pairs = nearest_neighbor_pairs(controls, current);
    const double err = rms_error(pairs);
    result.error_history.push_back(err);
    result.error = err;
    result.iterations = it;
    if (it > 1 && std::abs(err - previous) < params.tol) {
      result.converged = true;
      break;
    }
    previous = err;
    if (it == params.max_iters) break;

    RigidTransform step;
    try {
      step = rigid_fit(pairs);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
      break;
    }
    for (auto& p : current.points) p = step.apply(p);
    pose = compose(step, pose);
  }

  // Fold the scale-about-centroid into a single similarity: x = s R p + t.
  result.transform.rotation = pose.rotation;
  result.transform.translation =
      pose.translation + (1.0 - result.prescale) * (pose.rotation * model_centroid);
  return result;
}

std::string serialize(const IcpResult& r) {
  std::string out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out += "rotation";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out += ' ' + num(r.transform.rotation(i, j));
  }
  out += "\ntranslation";
  for (int i = 0; i < 3; ++i) out += ' ' + num(r.transform.translation(i));
  out += "\nprescale " + num(r.prescale);
  out += "\nerror " + num(r.error);
  out += "\niterations " + std::to_string(r.iterations);
  out += "\nconverged ";
  out += r.converged ? "true" : "false";
  out += '\n';
  return out;
}

}  // namespace pcsketch
