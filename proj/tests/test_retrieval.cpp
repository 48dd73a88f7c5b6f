#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pcsketch/error.hpp"
#include "pcsketch/reference.hpp"
#include "pcsketch/retrieval.hpp"

using namespace pcsketch;

namespace {

SketchImage line_sketch(int w, int h, int y) {
  SketchImage s(w, h);
  for (int x = 0; x < w; ++x) s.set(x, y);
  return s;
}

SketchImage random_strokes(std::mt19937_64& g, int w, int h, int strokes) {
  SketchImage s(w, h);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < strokes; ++k) {
    double x = u(g) * w, y = u(g) * h, a = u(g) * 6.283;
    for (int step = 0; step < 40; ++step) {
      a += (u(g) - 0.5) * 0.6;
      x += std::cos(a);
      y += std::sin(a);
      const int ix = static_cast<int>(x), iy = static_cast<int>(y);
      if (s.in_bounds(ix, iy)) s.set(ix, iy);
    }
  }
  return s;
}

DescriptorSet random_descriptors(std::mt19937_64& g, std::size_t n, int dims) {
  std::uniform_real_distribution<double> u(0, 1);
  DescriptorSet set;
  set.dims = dims;
  for (std::size_t i = 0; i < n * static_cast<std::size_t>(dims); ++i) set.data.push_back(u(g));
  return set;
}

using oracle::dense_cosine;
using oracle::index_of;
using oracle::random_histograms;

}  // namespace

TEST_CASE("keypoints: exhaustion, determinism, blank") {
  SketchImage s(20, 20);
  std::set<std::pair<int, int>> ink;
  for (int i = 0; i < 10; ++i) {
    s.set(i * 2, i);
    ink.insert({i * 2, i});
  }
  const auto kps = sample_keypoints(s, 500, 1);
  REQUIRE(kps.size() == 10);
  std::set<std::pair<int, int>> got;
  for (const auto& k : kps) got.insert({k.x, k.y});
  CHECK(got == ink);

  std::mt19937_64 g(1);
  const auto big = random_strokes(g, 128, 128, 30);
  const auto a = sample_keypoints(big, 200, 9), b = sample_keypoints(big, 200, 9);
  CHECK(a == b);
  CHECK(a.size() == std::min<std::size_t>(200, big.ink_count()));
  std::set<std::pair<int, int>> distinct;
  for (const auto& k : a) {
    CHECK(big.at(k.x, k.y));
    distinct.insert({k.x, k.y});
  }
  CHECK(distinct.size() == a.size());
  CHECK(sample_keypoints(big, 200, 10) != a);
  CHECK_THROWS_AS(sample_keypoints(SketchImage(8, 8), 5, 0), Error);
}

TEST_CASE("descriptor: horizontal line fills only the vertical-gradient bin") {
  const auto s = line_sketch(64, 64, 30);
  const auto d = local_descriptor(s, {32, 30});
  REQUIRE(d.values.size() == 64);
  double norm = 0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    norm += d.values[i] * d.values[i];
    if (i % 4 != 2) CHECK(d.values[i] < 1e-6);
  }
  CHECK(std::abs(norm - 1.0) < 1e-6);
  // patch rows start at y = 14; the gradient rows 29 and 31 fall in tile rows 1 and 2
  for (int ty = 0; ty < 4; ++ty)
    for (int tx = 0; tx < 4; ++tx) {
      const double v = d.values[(ty * 4 + tx) * 4 + 2];
      if (ty == 1 || ty == 2) {
        CHECK(v > 0.1);
      } else {
        CHECK(v == 0.0);
      }
    }
}

TEST_CASE("descriptor: empty patch is the zero vector") {
  SketchImage s(100, 100);
  s.set(90, 90);
  const auto d = local_descriptor(s, {10, 10});
  CHECK(d.is_zero());
}

TEST_CASE("descriptor: 90 degree rotation shifts bins by two and transposes tiles") {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_strokes(g, 64, 64, 6);
    // rotate about the center of the patch window around (32, 32)
    SketchImage r(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (s.at(x, y)) r.set(63 - y, x);
    const auto a = local_descriptor(s, {32, 32});
    const auto b = local_descriptor(r, {32, 32});
    for (int ty = 0; ty < 4; ++ty)
      for (int tx = 0; tx < 4; ++tx)
        for (int bin = 0; bin < 4; ++bin) {
          const double va = a.values[(ty * 4 + tx) * 4 + bin];
          const double vb = b.values[(tx * 4 + (3 - ty)) * 4 + (bin + 2) % 4];
          CHECK(std::abs(va - vb) < 1e-12);
        }
  }
}

TEST_CASE("descriptor: unit norm or zero across random sketches") {
  std::mt19937_64 g(8);
  const auto s = random_strokes(g, 200, 150, 20);
  const auto set = describe_sketch(s, 300, 3, {});
  CHECK(set.size() > 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    double n = 0;
    for (double v : set.row(i)) n += v * v;
    CHECK(std::abs(n - 1.0) < 1e-6);
  }
}

TEST_CASE("orientation bins: integer rule agrees with atan2 binning") {
  for (int gx = -4; gx <= 4; ++gx)
    for (int gy = -4; gy <= 4; ++gy) {
      if (gx == 0 && gy == 0) continue;
      double th = std::atan2(gy, gx) * 180 / 3.141592653589793;
      if (th < 0) th += 180;
      if (th >= 180) th -= 180;
      // exact boundaries fall into the upper bin
      const int expected = std::min(3, static_cast<int>(std::floor(th / 45.0 + 1e-12)));
      CHECK(orientation_bin4(gx, gy) == expected);
    }
  CHECK(orientation_bin4(0, 0) == -1);
}

TEST_CASE("vocabulary: k equal to distinct count gives zero quantization error") {
  std::mt19937_64 g(3);
  const auto base = random_descriptors(g, 6, 8);
  DescriptorSet sample;
  sample.dims = 8;
  for (int rep = 0; rep < 5; ++rep)
    for (std::size_t i = 0; i < base.size(); ++i) sample.push_back(base.row(i));
  const auto v = build_vocabulary(sample, 6, 25, 1);
  const auto terms = assign_terms(sample, v);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto c = v.centroid(terms[i]);
    const auto d = sample.row(i);
    for (int j = 0; j < 8; ++j) CHECK(std::abs(c[j] - d[j]) < 1e-12);
  }
}

TEST_CASE("vocabulary: two separated clusters recover their means") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> n(0, 0.05);
  DescriptorSet s;
  s.dims = 3;
  double mean[2][3] = {};
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 100; ++i) {
      const double center = c == 0 ? -5.0 : 5.0;
      const double p[3] = {center + n(g), center + n(g), n(g)};
      for (int j = 0; j < 3; ++j) mean[c][j] += p[j] / 100;
      s.push_back(p);
    }
  const auto v = build_vocabulary(s, 2, 25, 11);
  for (int c = 0; c < 2; ++c) {
    const auto cen = v.centroid(c);
    const int which = cen[0] < 0 ? 0 : 1;
    for (int j = 0; j < 3; ++j) CHECK(std::abs(cen[j] - mean[which][j]) < 1e-6);
  }
}

TEST_CASE("vocabulary: deterministic, and sample must cover k") {
  std::mt19937_64 g(6);
  const auto s = random_descriptors(g, 300, 16);
  CHECK(build_vocabulary(s, 20, 10, 5) == build_vocabulary(s, 20, 10, 5));
  CHECK_THROWS_AS(build_vocabulary(random_descriptors(g, 5, 4), 6, 10, 1), Error);
  CHECK_THROWS_AS(build_vocabulary(s, 1, 10, 1), Error);
}

TEST_CASE("quantize: identity, ties, brute force, dimension mismatch") {
  Vocabulary v;
  v.k = 3;
  v.dims = 2;
  v.centroids = {0, 0, 2, 0, 0, 2};
  DescriptorSet eq;
  eq.dims = 2;
  for (int c = 0; c < 3; ++c) eq.push_back(v.centroid(c));
  CHECK(assign_terms(eq, v) == std::vector<int>{0, 1, 2});

  DescriptorSet tie;
  tie.dims = 2;
  const double mid[2] = {1, 0};  // equidistant from centroids 0 and 1
  const double mid2[2] = {1, 1};  // equidistant from 1 and 2, farther from 0 (same distance)
  tie.push_back(mid);
  tie.push_back(mid2);
  CHECK(assign_terms(tie, v) == std::vector<int>{0, 0});
  const auto tf = quantize(tie, v);
  CHECK(tf == std::vector<std::uint32_t>{2, 0, 0});

  std::mt19937_64 g(10);
  const auto descs = random_descriptors(g, 500, 16);
  const auto voc = build_vocabulary(random_descriptors(g, 400, 16), 32, 5, 2);
  const auto fast = assign_terms(descs, voc);
  for (std::size_t i = 0; i < descs.size(); ++i) {
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < voc.k; ++c) {
      double d = 0;
      for (int j = 0; j < 16; ++j) d += (descs.row(i)[j] - voc.centroid(c)[j]) * (descs.row(i)[j] - voc.centroid(c)[j]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    CHECK(fast[i] == best);
  }
  CHECK(fast == reference::assign_terms(descs, voc));

  DescriptorSet wrong;
  wrong.dims = 3;
  const double p[3] = {1, 2, 3};
  wrong.push_back(p);
  CHECK_THROWS_AS(assign_terms(wrong, v), Error);
}

TEST_CASE("index: single image self-similarity is one") {
  const auto idx = index_of({{3, 0, 1, 0, 2}});
  const auto q = idx.weigh(std::vector<std::uint32_t>{3, 0, 1, 0, 2});
  CHECK(std::abs(idx.score_images(q)[0] - 1.0) < 1e-6);
}

TEST_CASE("index: rare terms get larger idf, idf positive, postings positive") {
  const auto idx = index_of({{1, 1}, {1, 0}, {1, 0}, {1, 0}});
  CHECK(idx.idf()[1] > idx.idf()[0]);
  std::mt19937_64 g(2);
  const auto big = index_of(random_histograms(g, 40, 30));
  for (double w : big.idf()) CHECK(w > 0);
  for (const auto& list : big.postings())
    for (const auto& p : list) CHECK(p.weight > 0);
}

TEST_CASE("index: all-empty corpus rejected") {
  CHECK_THROWS_AS(index_of({{0, 0, 0}, {0, 0, 0}}), Error);
}

TEST_CASE("index: scores equal dense cosine within 1e-9") {
  std::mt19937_64 g(7);
  for (std::size_t n : {10u, 37u, 100u}) {
    const auto hist = random_histograms(g, n, 64);
    const auto idx = index_of(hist);
    for (int probe = 0; probe < 10; ++probe) {
      const auto q = random_histograms(g, 1, 64)[0];
      const auto scores = idx.score_images(idx.weigh(q));
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(scores[i] - dense_cosine(q, hist[i], idx.idf())) < 1e-9);
    }
  }
}

TEST_CASE("index: similarity symmetric and bounded") {
  std::mt19937_64 g(17);
  const auto idx = index_of(random_histograms(g, 25, 40));
  for (std::uint32_t a = 0; a < 25; ++a)
    for (std::uint32_t b = 0; b < 25; ++b) {
      const double s = idx.image_similarity(a, b);
      CHECK(std::abs(s - idx.image_similarity(b, a)) < 1e-9);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0 + 1e-6);
    }
}

TEST_CASE("query: self-retrieval on a small synthetic index, blank rejected") {
  std::mt19937_64 g(21);
  RetrievalParams params;
  params.keypoints = 150;
  params.vocab_k = 24;
  params.kmeans_iters = 10;
  std::vector<SketchImage> sketches;
  DescriptorSet training;
  training.dims = params.descriptor.dims();
  for (int i = 0; i < 6; ++i) {
    sketches.push_back(random_strokes(g, 96, 96, 8));
    const auto d = describe_sketch(sketches.back(), params.keypoints, params.sample_seed, params.descriptor);
    training.data.insert(training.data.end(), d.data.begin(), d.data.end());
  }
  SketchIndex index;
  index.params = params;
  index.vocabulary = build_vocabulary(training, params.vocab_k, params.kmeans_iters, params.vocab_seed);
  std::vector<std::vector<std::uint32_t>> hist;
  std::vector<ImageEntry> images;
  std::vector<ModelEntry> models;
  for (std::uint32_t i = 0; i < sketches.size(); ++i) {
    hist.push_back(quantize(describe_sketch(sketches[i], params.keypoints, params.sample_seed, params.descriptor),
                            index.vocabulary));
    images.push_back({i, 0});
    models.push_back({"m" + std::to_string(i), "c", ""});
  }
  index.index = InvertedIndex::build(hist, images, models);
  for (std::uint32_t i = 0; i < sketches.size(); ++i) {
    const auto hits = query(index, sketches[i], 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].model == i);
    CHECK(hits[0].similarity >= 0.999);
    for (std::size_t h = 1; h < hits.size(); ++h) CHECK(hits[h - 1].similarity >= hits[h].similarity);
  }
  CHECK_THROWS_AS(query(index, SketchImage(96, 96), 3), Error);
}
