#pragma once

// Serial, unaccelerated versions of the parallel kernels. They are kept for
// equivalence tests and as the baseline in bench/.

#include <vector>

#include "pcsketch/contour.hpp"
#include "pcsketch/icp.hpp"
#include "pcsketch/retrieval.hpp"

namespace pcsketch::reference {

/// O(n*m) linear scan; ties to the lowest model index.
CorrespondenceSet nearest_neighbor_pairs(const PointCloud& controls, const PointCloud& model);

/// Full scan over every centroid, one descriptor at a time.
std::vector<int> assign_terms(const DescriptorSet& descs, const Vocabulary& vocab);

/// Sorts each replicated window.
GrayImage median_filter(const GrayImage& img, int k);

}  // namespace pcsketch::reference
