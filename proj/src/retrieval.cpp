#include "pcsketch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "pcsketch/error.hpp"
#include "pcsketch/rng.hpp"

namespace pcsketch {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_centroid(std::span<const double> d, const Vocabulary& vocab, double* best_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < vocab.k; ++c) {
    const double dist = squared_distance(d, vocab.centroid(c));
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

void check_dims(const DescriptorSet& descs, const Vocabulary& vocab) {
  if (descs.size() > 0 && descs.dims != vocab.dims) {
    throw Error(ErrorKind::Validation, "descriptor dimension " + std::to_string(descs.dims) +
                                           " does not match vocabulary dimension " + std::to_string(vocab.dims));
  }
}

}  // namespace

bool LocalDescriptor::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

int orientation_bin4(int gx, int gy) {
  if (gx == 0 && gy == 0) return -1;
  // Fold onto [0, 180): keep gy > 0, or gy == 0 with gx > 0.
  if (gy < 0 || (gy == 0 && gx < 0)) {
    gx = -gx;
    gy = -gy;
  }
  if (gx > 0) return gy < gx ? 0 : 1;
  return gy > -gx ? 2 : 3;
}

int orientation_bin(int gx, int gy, int bins) {
  if (bins == 4) return orientation_bin4(gx, gy);
  if (gx == 0 && gy == 0) return -1;
  double theta = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
  if (theta < 0) theta += std::numbers::pi;
  if (theta >= std::numbers::pi) theta -= std::numbers::pi;
  return std::min(bins - 1, static_cast<int>(theta / std::numbers::pi * bins));
}

GradientField::GradientField(const SketchImage& sketch) : width_(sketch.width), height_(sketch.height) {
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  gx_.assign(n, 0);
  gy_.assign(n, 0);
  magnitude_.assign(n, 0.0f);
  auto ink = [&](int x, int y) -> int { return sketch.in_bounds(x, y) && sketch.at(x, y) ? 1 : 0; };
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const int gx = (ink(x + 1, y - 1) + 2 * ink(x + 1, y) + ink(x + 1, y + 1)) -
                     (ink(x - 1, y - 1) + 2 * ink(x - 1, y) + ink(x - 1, y + 1));
      const int gy = (ink(x - 1, y + 1) + 2 * ink(x, y + 1) + ink(x + 1, y + 1)) -
                     (ink(x - 1, y - 1) + 2 * ink(x, y - 1) + ink(x + 1, y - 1));
      const std::size_t i = index(x, y);
      gx_[i] = static_cast<std::int8_t>(gx);
      gy_[i] = static_cast<std::int8_t>(gy);
      magnitude_[i] = static_cast<float>(std::sqrt(static_cast<double>(gx * gx + gy * gy)));
    }
  }
}

std::vector<Keypoint> sample_keypoints(const SketchImage& sketch, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::Validation, "keypoint count must be >= 1");
  std::vector<std::uint32_t> ink;
  for (std::size_t i = 0; i < sketch.pixels.size(); ++i) {
    if (sketch.pixels[i]) ink.push_back(static_cast<std::uint32_t>(i));
  }
  if (ink.empty()) throw Error(ErrorKind::Validation, "sketch is blank");
  if (ink.size() > static_cast<std::size_t>(count)) {
    // Partial Fisher-Yates: the first `count` slots become the sample.
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
      const std::size_t j = i + rng.below(ink.size() - i);
      std::swap(ink[i], ink[j]);
    }
    ink.resize(static_cast<std::size_t>(count));
    std::sort(ink.begin(), ink.end());
  }
  std::vector<Keypoint> out;
  out.reserve(ink.size());
  for (auto i : ink) out.push_back({static_cast<int>(i % sketch.width), static_cast<int>(i / sketch.width)});
  return out;
}

LocalDescriptor local_descriptor(const GradientField& field, const Keypoint& kp, const DescriptorParams& params) {
  LocalDescriptor desc;
  desc.values.assign(static_cast<std::size_t>(params.dims()), 0.0);
  const int x0 = kp.x - params.patch / 2;
  const int y0 = kp.y - params.patch / 2;
  const int ys = std::max(0, -y0), ye = std::min(params.patch, field.height() - y0);
  const int xs = std::max(0, -x0), xe = std::min(params.patch, field.width() - x0);
  for (int wy = ys; wy < ye; ++wy) {
    const int ty = wy * params.tiles / params.patch;
    for (int wx = xs; wx < xe; ++wx) {
      const int x = x0 + wx, y = y0 + wy;
      const int b = orientation_bin(field.gx(x, y), field.gy(x, y), params.bins);
      if (b < 0) continue;
      const int tx = wx * params.tiles / params.patch;
      desc.values[static_cast<std::size_t>((ty * params.tiles + tx) * params.bins + b)] += field.magnitude(x, y);
    }
  }
  double norm = 0.0;
  for (double v : desc.values) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : desc.values) v /= norm;
  }
  return desc;
}

LocalDescriptor local_descriptor(const SketchImage& sketch, const Keypoint& kp, const DescriptorParams& params) {
  return local_descriptor(GradientField(sketch), kp, params);
}

void DescriptorSet::push_back(std::span<const double> d) {
  if (dims == 0) dims = static_cast<int>(d.size());
  if (static_cast<int>(d.size()) != dims) throw Error(ErrorKind::Validation, "descriptor dimension mismatch");
  data.insert(data.end(), d.begin(), d.end());
}

DescriptorSet describe_sketch(const SketchImage& sketch, int keypoints, std::uint64_t seed,
                              const DescriptorParams& params) {
  const auto kps = sample_keypoints(sketch, keypoints, seed);
  const GradientField field(sketch);
  DescriptorSet set;
  set.dims = params.dims();
  set.data.reserve(kps.size() * static_cast<std::size_t>(set.dims));
  for (const auto& kp : kps) {
    const auto d = local_descriptor(field, kp, params);
    if (!d.is_zero()) set.push_back(d.values);
  }
  return set;
}

std::vector<int> assign_terms(const DescriptorSet& descs, const Vocabulary& vocab) {
  check_dims(descs, vocab);
  const auto n = static_cast<std::ptrdiff_t>(descs.size());
  std::vector<int> out(descs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = nearest_centroid(descs.row(static_cast<std::size_t>(i)), vocab);
  }
  return out;
}

std::vector<std::uint32_t> quantize(const DescriptorSet& descs, const Vocabulary& vocab) {
  std::vector<std::uint32_t> tf(static_cast<std::size_t>(vocab.k), 0);
  for (int t : assign_terms(descs, vocab)) ++tf[static_cast<std::size_t>(t)];
  return tf;
}

Vocabulary build_vocabulary(const DescriptorSet& sample, int k, int iters, std::uint64_t seed) {
  const std::size_t n = sample.size();
  if (k < 2) throw Error(ErrorKind::Validation, "vocabulary size must be >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::Validation, "vocabulary training needs at least k = " + std::to_string(k) +
                                           " descriptors, got " + std::to_string(n));
  }
  if (iters < 1) throw Error(ErrorKind::Validation, "k-means iteration count must be >= 1");

  Vocabulary vocab;
  vocab.k = k;
  vocab.dims = sample.dims;
  vocab.seed = seed;
  vocab.centroids.reserve(static_cast<std::size_t>(k) * sample.dims);

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (int c = 0; c < k; ++c) {
    chosen[pick] = 1;
    const auto row = sample.row(pick);
    vocab.centroids.insert(vocab.centroids.end(), row.begin(), row.end());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(sample.row(i), row));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n;
      std::size_t last_positive = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        last_positive = i;
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    } else {
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
    }
  }

  // Lloyd iterations.
  std::vector<int> assignment(n, -1);
  std::vector<double> dist(n, 0.0);
  std::vector<double> sums(vocab.centroids.size());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k));
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) reduction(|| : changed)
    for (std::ptrdiff_t i = 0; i < nn; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const int c = nearest_centroid(sample.row(ui), vocab, &dist[ui]);
      if (c != assignment[ui]) {
        assignment[ui] = c;
        changed = true;
      }
    }
    if (!changed && it > 0) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      ++counts[c];
      const auto row = sample.row(i);
      for (int d = 0; d < sample.dims; ++d) sums[c * sample.dims + d] += row[static_cast<std::size_t>(d)];
    }
    for (int c = 0; c < k; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      if (counts[uc] > 0) {
        for (int d = 0; d < sample.dims; ++d) {
          vocab.centroids[uc * sample.dims + d] = sums[uc * sample.dims + d] / static_cast<double>(counts[uc]);
        }
        continue;
      }
      // Empty cluster: move it onto the worst-explained point.
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      const auto row = sample.row(far);
      std::copy(row.begin(), row.end(), vocab.centroids.begin() + static_cast<std::ptrdiff_t>(uc * sample.dims));
      dist[far] = -1.0;
    }
  }
  return vocab;
}

InvertedIndex InvertedIndex::build(const std::vector<std::vector<std::uint32_t>>& histograms,
                                   std::vector<ImageEntry> images, std::vector<ModelEntry> models) {
  if (histograms.empty()) throw Error(ErrorKind::Validation, "cannot index an empty corpus");
  if (images.size() != histograms.size()) throw Error(ErrorKind::Validation, "image table does not match histogram count");
  for (const auto& img : images) {
    if (img.model >= models.size()) throw Error(ErrorKind::Validation, "image refers to unknown model");
  }
  const std::size_t k = histograms.front().size();
  std::vector<std::uint32_t> df(k, 0);
  bool any = false;
  for (const auto& h : histograms) {
    if (h.size() != k) throw Error(ErrorKind::Validation, "histograms have differing lengths");
    for (std::size_t t = 0; t < k; ++t) {
      if (h[t] > 0) {
        ++df[t];
        any = true;
      }
    }
  }
  if (!any) throw Error(ErrorKind::Validation, "every histogram in the corpus is empty");

  InvertedIndex index;
  const double n = static_cast<double>(histograms.size());
  index.idf_.resize(k);
  for (std::size_t t = 0; t < k; ++t) index.idf_[t] = std::log(n / (1.0 + df[t])) + 1.0;
  index.postings_.resize(k);
  std::vector<double> w(k);
  for (std::size_t img = 0; img < histograms.size(); ++img) {
    double norm = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      w[t] = histograms[img][t] * index.idf_[t];
      norm += w[t] * w[t];
    }
    if (norm == 0.0) continue;
    norm = std::sqrt(norm);
    for (std::size_t t = 0; t < k; ++t) {
      if (w[t] > 0.0) index.postings_[t].push_back({static_cast<std::uint32_t>(img), static_cast<float>(w[t] / norm)});
    }
  }
  index.images_ = std::move(images);
  index.models_ = std::move(models);
  return index;
}

InvertedIndex InvertedIndex::from_parts(std::vector<double> idf, std::vector<std::vector<Posting>> postings,
                                        std::vector<ImageEntry> images, std::vector<ModelEntry> models) {
  if (idf.size() != postings.size()) throw Error(ErrorKind::Validation, "idf and postings lengths differ");
  for (const auto& list : postings) {
    for (const auto& p : list) {
      if (p.image >= images.size()) throw Error(ErrorKind::Validation, "posting refers to unknown image");
      if (!(p.weight > 0.0f)) throw Error(ErrorKind::Validation, "posting weight must be positive");
    }
  }
  for (const auto& img : images) {
    if (img.model >= models.size()) throw Error(ErrorKind::Validation, "image refers to unknown model");
  }
  InvertedIndex index;
  index.idf_ = std::move(idf);
  index.postings_ = std::move(postings);
  index.images_ = std::move(images);
  index.models_ = std::move(models);
  return index;
}

SparseVector InvertedIndex::weigh(std::span<const std::uint32_t> tf) const {
  if (tf.size() != idf_.size()) throw Error(ErrorKind::Validation, "term-frequency vector length does not match the index");
  SparseVector q;
  double norm = 0.0;
  for (std::size_t t = 0; t < tf.size(); ++t) {
    if (tf[t] == 0) continue;
    const double w = tf[t] * idf_[t];
    q.push_back({static_cast<std::uint32_t>(t), w});
    norm += w * w;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& e : q) e.weight /= norm;
  }
  return q;
}

std::vector<double> InvertedIndex::score_images(const SparseVector& query) const {
  std::vector<double> scores(images_.size(), 0.0);
  for (const auto& e : query) {
    for (const auto& p : postings_[e.term]) scores[p.image] += e.weight * static_cast<double>(p.weight);
  }
  return scores;
}

SparseVector InvertedIndex::image_vector(std::uint32_t image) const {
  SparseVector v;
  for (std::size_t t = 0; t < postings_.size(); ++t) {
    const auto& list = postings_[t];
    auto it = std::lower_bound(list.begin(), list.end(), image,
                               [](const Posting& p, std::uint32_t id) { return p.image < id; });
    if (it != list.end() && it->image == image) v.push_back({static_cast<std::uint32_t>(t), it->weight});
  }
  return v;
}

double InvertedIndex::image_similarity(std::uint32_t a, std::uint32_t b) const {
  const auto va = image_vector(a);
  const auto vb = image_vector(b);
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < va.size() && j < vb.size()) {
    if (va[i].term == vb[j].term) {
      s += va[i++].weight * vb[j++].weight;
    } else if (va[i].term < vb[j].term) {
      ++i;
    } else {
      ++j;
    }
  }
  return std::clamp(s, 0.0, 1.0);
}

SparseVector sketch_vector(const SketchIndex& index, const SketchImage& sketch, std::uint64_t seed) {
  const auto descs = describe_sketch(sketch, index.params.keypoints, seed, index.params.descriptor);
  return index.index.weigh(quantize(descs, index.vocabulary));
}

std::vector<RetrievalHit> query(const SketchIndex& index, const SketchImage& sketch, int topk,
                                std::optional<std::uint64_t> seed) {
  if (topk < 1) throw Error(ErrorKind::Validation, "topk must be >= 1");
  const auto q = sketch_vector(index, sketch, seed.value_or(index.params.sample_seed));
  const auto scores = index.index.score_images(q);

  const auto& images = index.index.images();
  std::vector<RetrievalHit> best(index.index.model_count());
  std::vector<char> seen(best.size(), 0);
  for (std::size_t img = 0; img < images.size(); ++img) {
    const auto m = images[img].model;
    const double s = std::clamp(scores[img], 0.0, 1.0);
    if (!seen[m] || s > best[m].similarity) {
      best[m] = {m, images[img].view, s};
      seen[m] = 1;
    }
  }
  std::vector<RetrievalHit> hits;
  for (std::size_t m = 0; m < best.size(); ++m) {
    if (seen[m]) hits.push_back(best[m]);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.model < b.model;
  });
  if (hits.size() > static_cast<std::size_t>(topk)) hits.resize(static_cast<std::size_t>(topk));
  return hits;
}

}  // namespace pcsketch
