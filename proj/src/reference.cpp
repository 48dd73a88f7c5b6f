#include "pcsketch/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcsketch/error.hpp"
#include "pcsketch/kdtree.hpp"

namespace pcsketch::reference {

CorrespondenceSet nearest_neighbor_pairs(const PointCloud& controls, const PointCloud& model) {
  if (controls.empty() || model.empty()) throw Error(ErrorKind::Validation, "nearest-neighbor pairing needs non-empty inputs");
  CorrespondenceSet pairs;
  pairs.reserve(controls.size());
  for (const auto& c : controls.points) {
    std::uint32_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model.size(); ++j) {
      const double d2 = squared_distance(c, model.points[j]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<std::uint32_t>(j);
      }
    }
    pairs.push_back({c, model.points[best], std::sqrt(best_d2), best});
  }
  return pairs;
}

std::vector<int> assign_terms(const DescriptorSet& descs, const Vocabulary& vocab) {
  if (descs.size() > 0 && descs.dims != vocab.dims) throw Error(ErrorKind::Validation, "descriptor dimension mismatch");
  std::vector<int> out;
  out.reserve(descs.size());
  for (std::size_t i = 0; i < descs.size(); ++i) {
    const auto d = descs.row(i);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < vocab.k; ++c) {
      const auto cen = vocab.centroid(c);
      double s = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) {
        const double diff = d[j] - cen[j];
        s += diff * diff;
      }
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    out.push_back(best);
  }
  return out;
}

GrayImage median_filter(const GrayImage& img, int k) {
  if (k < 1 || k % 2 == 0) throw Error(ErrorKind::Validation, "median kernel must be odd and >= 1");
  const int r = k / 2;
  GrayImage out(img.width, img.height);
  std::vector<std::uint8_t> buf;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      buf.clear();
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          buf.push_back(img.at(std::clamp(x + dx, 0, img.width - 1), std::clamp(y + dy, 0, img.height - 1)));
        }
      }
      std::sort(buf.begin(), buf.end());
      out.at(x, y) = buf[buf.size() / 2];
    }
  }
  return out;
}

}  // namespace pcsketch::reference
