#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcsketch/geometry.hpp"

namespace pcsketch {

struct IcpParams {
  std::size_t n_control = 2000;
  int max_iters = 50;
  double tol = 1e-6;  // absolute change in RMS error
  std::uint64_t seed = 0;
  // The one-shot scale match only fires when the AABB-diagonal ratio leaves
  // [1/gate, gate]; inside that band the fit stays purely rigid.
  double prescale_gate = 1.5;
};

struct Correspondence {
  Vec3 control;
  Vec3 model;
  double distance = 0.0;
  std::uint32_t model_index = 0;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Maps the original model into the cloud frame as
///   x = prescale * (rotation * p) + translation.
struct IcpResult {
  RigidTransform transform;
  double error = 0.0;  // final RMS control-to-model distance
  int iterations = 0;
  bool converged = false;
  double prescale = 1.0;
  std::vector<double> error_history;  // RMS error per iteration

  Vec3 apply(const Vec3& p) const { return prescale * (transform.rotation * p) + transform.translation; }
};

/// `n` distinct cloud points chosen uniformly without replacement (the whole
/// cloud when it has at most `n`), kept in their original order.
PointCloud select_control_points(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

/// Exact nearest model point for every control point (ties to the lowest
/// index), via a kd-tree; parallel over controls.
CorrespondenceSet nearest_neighbor_pairs(const PointCloud& controls, const PointCloud& model);

/// Least-squares rigid transform taking `source` onto `target` (Kabsch with
/// reflection correction). Throws Validation below 3 pairs and Degenerate
/// when the cross-covariance is rank deficient (collinear input).
RigidTransform rigid_fit(std::span<const Vec3> source, std::span<const Vec3> target);

/// Fit taking each pair's model point onto its control point.
RigidTransform rigid_fit(const CorrespondenceSet& pairs);

/// cloud AABB diagonal / model AABB diagonal. Throws Degenerate for a
/// zero-diagonal model.
double prescale_model(const PointCloud& model, const PointCloud& cloud);

/// Model points scaled by `scale` about their centroid.
PointCloud scale_about_centroid(const PointCloud& model, double scale);

double rms_error(const CorrespondenceSet& pairs);

/// Mesh vertices when there are at least 1000 of them, otherwise the vertices
/// topped up to 2000 points with area-weighted surface samples.
PointCloud icp_model_points(const TriangleMesh& mesh, std::uint64_t seed);

IcpResult icp(const PointCloud& model, const PointCloud& cloud, const IcpParams& params = {});

/// Fixed-order text record: 9 rotation entries (row-major), 3 translation
/// entries, prescale, error, iterations, converged; 17 significant digits.
std::string serialize(const IcpResult& result);

}  // namespace pcsketch
