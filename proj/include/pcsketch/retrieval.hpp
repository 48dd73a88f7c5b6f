#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcsketch/image.hpp"

namespace pcsketch {

struct Keypoint {
  int x = 0;
  int y = 0;
  bool operator==(const Keypoint&) const = default;
};

struct DescriptorParams {
  int patch = 32;  // window side, pixels
  int tiles = 4;   // tiles per side
  int bins = 4;    // orientation bins over [0, 180)

  int dims() const { return tiles * tiles * bins; }
  bool operator==(const DescriptorParams&) const = default;
};

/// Gradient-orientation tile histogram around one keypoint. Unit L2 norm, or
/// all zeros when the window holds no gradient.
struct LocalDescriptor {
  std::vector<double> values;

  bool is_zero() const;
};

/// Per-pixel Sobel response of a sketch's ink mask (ink = 1, zero padding
/// outside the image). Built once per sketch and shared by all keypoints.
class GradientField {
 public:
  explicit GradientField(const SketchImage& sketch);

  int width() const { return width_; }
  int height() const { return height_; }
  int gx(int x, int y) const { return gx_[index(x, y)]; }
  int gy(int x, int y) const { return gy_[index(x, y)]; }
  float magnitude(int x, int y) const { return magnitude_[index(x, y)]; }

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_;
  int height_;
  std::vector<std::int8_t> gx_;
  std::vector<std::int8_t> gy_;
  std::vector<float> magnitude_;
};

/// Orientation bin (4 bins of 45 degrees over [0, 180)) of an integer
/// gradient, decided with exact integer comparisons; -1 for a zero gradient.
int orientation_bin4(int gx, int gy);

/// Same binning for any bin count; exact for 4, atan2-based otherwise.
int orientation_bin(int gx, int gy, int bins);

/// Up to `count` distinct ink pixels, uniformly sampled without replacement;
/// all ink pixels when there are fewer. Returned in raster order.
/// Throws Validation on a blank sketch.
std::vector<Keypoint> sample_keypoints(const SketchImage& sketch, int count, std::uint64_t seed);

LocalDescriptor local_descriptor(const GradientField& field, const Keypoint& kp, const DescriptorParams& params = {});
LocalDescriptor local_descriptor(const SketchImage& sketch, const Keypoint& kp, const DescriptorParams& params = {});

/// Row-major block of equal-length descriptors.
struct DescriptorSet {
  int dims = 0;
  std::vector<double> data;

  std::size_t size() const { return dims == 0 ? 0 : data.size() / static_cast<std::size_t>(dims); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dims), static_cast<std::size_t>(dims)};
  }
  void push_back(std::span<const double> d);
};

/// Sample keypoints and describe them; zero descriptors are dropped.
DescriptorSet describe_sketch(const SketchImage& sketch, int keypoints, std::uint64_t seed,
                              const DescriptorParams& params = {});

struct Vocabulary {
  int k = 0;
  int dims = 0;
  std::uint64_t seed = 0;
  std::vector<double> centroids;  // k x dims, row-major

  std::span<const double> centroid(int c) const {
    return {centroids.data() + static_cast<std::size_t>(c) * dims, static_cast<std::size_t>(dims)};
  }
  bool operator==(const Vocabulary&) const = default;
};

/// Lloyd's k-means with seeded k-means++ seeding. An emptied cluster is
/// re-seeded from the point farthest from its assigned centroid.
/// Throws Validation when the sample has fewer than k rows or k < 2.
Vocabulary build_vocabulary(const DescriptorSet& sample, int k, int iters, std::uint64_t seed);

/// Nearest centroid per descriptor, ties to the lower index.
std::vector<int> assign_terms(const DescriptorSet& descs, const Vocabulary& vocab);

/// Term-frequency counts, length k. Throws Validation on a dimension mismatch.
std::vector<std::uint32_t> quantize(const DescriptorSet& descs, const Vocabulary& vocab);

struct SparseEntry {
  std::uint32_t term = 0;
  double weight = 0.0;
};
using SparseVector = std::vector<SparseEntry>;  // sorted by term

struct Posting {
  std::uint32_t image = 0;
  float weight = 0.0f;
  bool operator==(const Posting&) const = default;
};

struct ImageEntry {
  std::uint32_t model = 0;
  std::uint32_t view = 0;
  bool operator==(const ImageEntry&) const = default;
};

struct ModelEntry {
  std::string name;
  std::string category;
  std::string mesh_path;
  bool operator==(const ModelEntry&) const = default;
};

/// tf-idf inverted index with idf(t) = ln(N / (1 + df(t))) + 1 and per-image
/// L2-normalized weights stored as float.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  /// Throws Validation if every histogram is empty or the tables disagree.
  static InvertedIndex build(const std::vector<std::vector<std::uint32_t>>& histograms,
                             std::vector<ImageEntry> images, std::vector<ModelEntry> models);

  /// Assembles an index from stored parts (used by the file loader).
  static InvertedIndex from_parts(std::vector<double> idf, std::vector<std::vector<Posting>> postings,
                                  std::vector<ImageEntry> images, std::vector<ModelEntry> models);

  std::size_t term_count() const { return idf_.size(); }
  std::size_t image_count() const { return images_.size(); }
  std::size_t model_count() const { return models_.size(); }

  const std::vector<double>& idf() const { return idf_; }
  const std::vector<std::vector<Posting>>& postings() const { return postings_; }
  const std::vector<ImageEntry>& images() const { return images_; }
  const std::vector<ModelEntry>& models() const { return models_; }

  /// tf-idf weighted, L2-normalized query vector; empty for an all-zero tf.
  SparseVector weigh(std::span<const std::uint32_t> tf) const;

  /// Cosine score of the query against every image.
  std::vector<double> score_images(const SparseVector& query) const;

  /// Stored vector of one image, reassembled from the postings.
  SparseVector image_vector(std::uint32_t image) const;

  /// Cosine between two indexed images.
  double image_similarity(std::uint32_t a, std::uint32_t b) const;

  bool operator==(const InvertedIndex&) const = default;

 private:
  std::vector<double> idf_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<ImageEntry> images_;
  std::vector<ModelEntry> models_;
};

struct RetrievalParams {
  DescriptorParams descriptor;
  int keypoints = 500;
  std::uint64_t sample_seed = 7;  // keypoint sampling, shared by indexing and querying
  int vocab_k = 256;
  int kmeans_iters = 25;
  std::uint64_t vocab_seed = 1;
  std::size_t max_training = 20000;  // descriptors used to train the vocabulary

  bool operator==(const RetrievalParams&) const = default;
};

/// Everything a query needs: vocabulary, index, and the parameters both were
/// built with.
struct SketchIndex {
  RetrievalParams params;
  Vocabulary vocabulary;
  InvertedIndex index;
  std::string manifest_path;
  std::string manifest_hash;

  bool operator==(const SketchIndex&) const = default;
};

struct RetrievalHit {
  std::uint32_t model = 0;
  std::uint32_t best_view = 0;
  double similarity = 0.0;  // in [0, 1]
  bool operator==(const RetrievalHit&) const = default;
};

/// Query vector of a sketch under the index's vocabulary.
SparseVector sketch_vector(const SketchIndex& index, const SketchImage& sketch, std::uint64_t seed);

/// Models ranked by their best view's cosine score, descending, ties to the
/// lower model id. Throws Validation on a blank sketch.
std::vector<RetrievalHit> query(const SketchIndex& index, const SketchImage& sketch, int topk,
                                std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace pcsketch
