#include "pcsketch/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "pcsketch/codec.hpp"
#include "pcsketch/error.hpp"
#include "pcsketch/geometry_io.hpp"
#include "pcsketch/render.hpp"
#include "pcsketch/rng.hpp"

namespace fs = std::filesystem;

namespace pcsketch {

static_assert(std::endian::native == std::endian::little, "index files are written in host byte order");

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view tok, const std::string& what) {
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw Error(ErrorKind::Parse, "bad " + what + " value '" + std::string(tok) + "'");
  }
  return v;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::string image_name(std::uint32_t model, int view) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "images/%04u_%03d.png", model, view);
  return buf;
}

}  // namespace

std::size_t DatasetManifest::model_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n = std::max<std::size_t>(n, e.model_id + 1);
  return n;
}

std::string format_manifest(const DatasetManifest& m) {
  std::string out;
  out += "#! pcsketch-manifest 1\n";
  out += "#! views " + std::to_string(m.params.n_views) + "\n";
  out += "#! canvas " + std::to_string(m.params.canvas) + "\n";
  out += "#! margin " + format_double(m.params.margin) + "\n";
  out += "#! threshold " + std::to_string(m.params.contour.threshold) + "\n";
  out += "#! median_k " + std::to_string(m.params.contour.median_kernel) + "\n";
  out += "#! stroke " + std::to_string(m.params.contour.stroke) + "\n";
  out += "#! model_dir " + m.model_dir + "\n";
  for (const auto& r : m.rejects) out += "#! reject " + r.mesh_path + "\t" + r.reason + "\n";
  out += "#! columns model_id\tmodel\tcategory\tmesh_path\tview\timage_path\n";
  for (const auto& e : m.entries) {
    out += std::to_string(e.model_id) + '\t' + e.model_name + '\t' + e.category + '\t' + e.mesh_path + '\t' +
           std::to_string(e.view) + '\t' + e.image_path + '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  bool saw_magic = false;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    try {
      if (line.starts_with("#!")) {
        auto body = line.substr(2);
        if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
        const auto space = body.find(' ');
        const auto key = body.substr(0, space);
        const auto value = space == std::string_view::npos ? std::string_view{} : body.substr(space + 1);
        if (key == "pcsketch-manifest") {
          if (value != "1") throw Error(ErrorKind::Version, "manifest version " + std::string(value) + " is not supported (expected 1)");
          saw_magic = true;
        } else if (key == "views") {
          m.params.n_views = parse_number<int>(value, "views");
        } else if (key == "canvas") {
          m.params.canvas = parse_number<int>(value, "canvas");
        } else if (key == "margin") {
          m.params.margin = parse_number<double>(value, "margin");
        } else if (key == "threshold") {
          m.params.contour.threshold = parse_number<int>(value, "threshold");
        } else if (key == "median_k") {
          m.params.contour.median_kernel = parse_number<int>(value, "median_k");
        } else if (key == "stroke") {
          m.params.contour.stroke = parse_number<int>(value, "stroke");
        } else if (key == "model_dir") {
          m.model_dir = std::string(value);
        } else if (key == "reject") {
          const auto tab = value.find('\t');
          m.rejects.push_back({std::string(value.substr(0, tab)),
                               tab == std::string_view::npos ? std::string{} : std::string(value.substr(tab + 1))});
        }
        continue;
      }
      const auto fields = split(line, '\t');
      if (fields.size() != 6) throw Error(ErrorKind::Parse, "expected 6 tab-separated fields");
      m.entries.push_back({parse_number<std::uint32_t>(fields[0], "model_id"), std::string(fields[1]),
                           std::string(fields[2]), std::string(fields[3]), parse_number<int>(fields[4], "view"),
                           std::string(fields[5])});
    } catch (const Error& e) {
      throw Error(e.kind(), "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_magic) throw Error(ErrorKind::BadMagic, "not a pcsketch manifest (missing '#! pcsketch-manifest' line)");
  return m;
}

DatasetManifest read_manifest(const fs::path& path) { return parse_manifest(read_text_file(path)); }

DatasetManifest build_contour_dataset(const fs::path& model_dir, const fs::path& out_dir, const PipelineParams& params) {
  if (params.n_views < 1) throw Error(ErrorKind::Validation, "view count must be >= 1");
  if (params.canvas < 16) throw Error(ErrorKind::Validation, "canvas must be at least 16 pixels");
  std::error_code ec;
  if (!fs::is_directory(model_dir, ec)) throw Error(ErrorKind::Io, "model directory '" + model_dir.string() + "' does not exist");

  const fs::path root = fs::canonical(model_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && (entry.path().extension() == ".off" || entry.path().extension() == ".OFF")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::Validation, "no OFF meshes found under '" + root.string() + "'");

  DatasetManifest manifest;
  manifest.params = params;
  manifest.model_dir = root.string();

  struct Model {
    std::string name, category, path;
    TriangleMesh mesh;
  };
  std::vector<Model> models;
  for (const auto& file : files) {
    try {
      TriangleMesh mesh = normalize_mesh(load_mesh(file));
      if (mesh.faces.empty()) throw Error(ErrorKind::Parse, "mesh has no faces");
      const auto rel = fs::relative(file, root);
      const std::string category = std::distance(rel.begin(), rel.end()) > 1 ? rel.begin()->string() : "uncategorized";
      models.push_back({file.stem().string(), category, file.string(), std::move(mesh)});
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
      manifest.rejects.push_back({file.string(), e.what()});
    }
  }
  if (models.empty()) throw Error(ErrorKind::Validation, "no parseable OFF meshes under '" + root.string() + "'");

  fs::create_directories(out_dir / "images");
  const auto views = fibonacci_viewpoints(params.n_views);
  const auto total = static_cast<std::ptrdiff_t>(models.size() * views.size());
  std::vector<std::optional<std::string>> failures(static_cast<std::size_t>(total));

#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t job = 0; job < total; ++job) {
    const auto m = static_cast<std::size_t>(job) / views.size();
    const auto v = static_cast<std::size_t>(job) % views.size();
    try {
      const auto silhouette = render_silhouette(models[m].mesh, views[v], params.canvas, params.canvas, params.margin);
      const auto contour = extract_model_contour(silhouette, params.canvas, params.canvas, params.contour);
      write_png(out_dir / image_name(static_cast<std::uint32_t>(m), views[v].index), contour);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(job)] = models[m].path + " view " + std::to_string(v) + ": " + e.what();
    }
  }
  for (const auto& f : failures) {
    if (f) throw Error(ErrorKind::Degenerate, "contour rendering failed for " + *f);
  }

  for (std::size_t m = 0; m < models.size(); ++m) {
    for (const auto& view : views) {
      manifest.entries.push_back({static_cast<std::uint32_t>(m), models[m].name, models[m].category, models[m].path,
                                  view.index, image_name(static_cast<std::uint32_t>(m), view.index)});
    }
  }
  write_text_file(out_dir / kManifestFileName, format_manifest(manifest));
  return manifest;
}

SketchImage sketch_from_png(std::string_view png_bytes, int threshold) {
  return binarize(to_grayscale(decode_png_rgb(png_bytes)), threshold);
}

SketchIndex build_search_index(const fs::path& manifest_path, const RetrievalParams& params) {
  const std::string manifest_text = read_text_file(manifest_path);
  const DatasetManifest manifest = parse_manifest(manifest_text);
  if (manifest.entries.empty()) throw Error(ErrorKind::Validation, "manifest has no entries");
  const fs::path base = manifest_path.parent_path();

  std::vector<ModelEntry> models(manifest.model_count());
  std::vector<ImageEntry> images;
  images.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    models[e.model_id] = {e.model_name, e.category, e.mesh_path};
    images.push_back({e.model_id, static_cast<std::uint32_t>(e.view)});
  }
  for (const auto& e : manifest.entries) {
    if (!fs::exists(base / e.image_path)) throw Error(ErrorKind::Io, "manifest image '" + (base / e.image_path).string() + "' is missing");
  }

  const auto n = static_cast<std::ptrdiff_t>(manifest.entries.size());
  auto describe = [&](std::ptrdiff_t i) {
    const auto& e = manifest.entries[static_cast<std::size_t>(i)];
    const SketchImage sketch = sketch_from_png(read_text_file(base / e.image_path), manifest.params.contour.threshold);
    if (sketch.ink_count() == 0) return DescriptorSet{params.descriptor.dims(), {}};
    return describe_sketch(sketch, params.keypoints, params.sample_seed, params.descriptor);
  };

  // Pass 1: an even per-image share of the training budget.
  const std::size_t quota = (params.max_training + manifest.entries.size() - 1) / manifest.entries.size();
  std::vector<DescriptorSet> shares(manifest.entries.size());
  std::vector<std::optional<std::string>> failures(manifest.entries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const DescriptorSet all = describe(i);
      DescriptorSet& share = shares[static_cast<std::size_t>(i)];
      share.dims = params.descriptor.dims();
      std::vector<std::size_t> rows(all.size());
      for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
      Rng rng(params.vocab_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i));
      const std::size_t take = std::min(quota, rows.size());
      for (std::size_t r = 0; r < take; ++r) std::swap(rows[r], rows[r + rng.below(rows.size() - r)]);
      rows.resize(take);
      std::sort(rows.begin(), rows.end());
      for (auto r : rows) share.push_back(all.row(r));
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (f) throw Error(ErrorKind::Io, *f);
  }
  DescriptorSet training;
  training.dims = params.descriptor.dims();
  for (const auto& s : shares) training.data.insert(training.data.end(), s.data.begin(), s.data.end());
  shares.clear();

  SketchIndex result;
  result.params = params;
  result.vocabulary = build_vocabulary(training, params.vocab_k, params.kmeans_iters, params.vocab_seed);

  // Pass 2: quantize every image.
  std::vector<std::vector<std::uint32_t>> histograms(manifest.entries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    histograms[static_cast<std::size_t>(i)] = quantize(describe(i), result.vocabulary);
  }
  result.index = InvertedIndex::build(histograms, std::move(images), std::move(models));
  result.manifest_path = fs::absolute(manifest_path).lexically_normal().string();
  result.manifest_hash = sha256_hex(manifest_text);
  return result;
}

// ---- index file -----------------------------------------------------------

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    if (data_.size() - pos_ < sizeof(T)) {
      throw Error(ErrorKind::Truncated, std::string("index file truncated while reading ") + what);
    }
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_index(const SketchIndex& s) {
  const auto& p = s.params;
  std::string out;
  out += std::string(kIndexMagic) + "\n";
  out += "version " + std::to_string(kIndexVersion) + "\n";
  out += "vocab_k " + std::to_string(s.vocabulary.k) + "\n";
  out += "dims " + std::to_string(s.vocabulary.dims) + "\n";
  out += "patch " + std::to_string(p.descriptor.patch) + "\n";
  out += "tiles " + std::to_string(p.descriptor.tiles) + "\n";
  out += "bins " + std::to_string(p.descriptor.bins) + "\n";
  out += "keypoints " + std::to_string(p.keypoints) + "\n";
  out += "sample_seed " + std::to_string(p.sample_seed) + "\n";
  out += "vocab_seed " + std::to_string(p.vocab_seed) + "\n";
  out += "kmeans_iters " + std::to_string(p.kmeans_iters) + "\n";
  out += "max_training " + std::to_string(p.max_training) + "\n";
  out += "manifest_hash " + (s.manifest_hash.empty() ? std::string("-") : s.manifest_hash) + "\n";
  out += "manifest_path " + (s.manifest_path.empty() ? std::string("-") : s.manifest_path) + "\n";
  out += "models " + std::to_string(s.index.model_count()) + "\n";
  for (const auto& m : s.index.models()) out += "model\t" + m.name + "\t" + m.category + "\t" + m.mesh_path + "\n";
  out += "images " + std::to_string(s.index.image_count()) + "\n";
  for (const auto& img : s.index.images()) out += "image " + std::to_string(img.model) + " " + std::to_string(img.view) + "\n";
  out += "end_header\n";

  for (double c : s.vocabulary.centroids) put(out, c);
  for (double w : s.index.idf()) put(out, w);
  for (const auto& list : s.index.postings()) {
    put(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& post : list) {
      put(out, post.image);
      put(out, post.weight);
    }
  }
  return out;
}

SketchIndex parse_index(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) return std::nullopt;
    auto line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto require_line = [&](const char* what) {
    auto line = next_line();
    if (!line) throw Error(ErrorKind::Truncated, std::string("index header truncated before '") + what + "'");
    return *line;
  };
  auto field = [&](std::string_view key) {
    const auto line = require_line(std::string(key).c_str());
    if (!line.starts_with(key) || line.size() <= key.size() || line[key.size()] != ' ') {
      throw Error(ErrorKind::Parse, "index header: expected '" + std::string(key) + "', got '" + std::string(line) + "'");
    }
    return line.substr(key.size() + 1);
  };

  const auto magic = bytes.substr(0, kIndexMagic.size() + 1);
  if (magic != std::string(kIndexMagic) + "\n") {
    if (std::string(kIndexMagic).starts_with(magic) && magic.size() < kIndexMagic.size() + 1) {
      throw Error(ErrorKind::Truncated, "index file truncated inside its magic line");
    }
    throw Error(ErrorKind::BadMagic, "not a pcsketch index file (bad magic)");
  }
  pos = kIndexMagic.size() + 1;

  const int version = parse_number<int>(field("version"), "version");
  if (version != kIndexVersion) {
    throw Error(ErrorKind::Version, "index file version " + std::to_string(version) +
                                        " is not supported (this build reads version " + std::to_string(kIndexVersion) + ")");
  }
  SketchIndex s;
  auto& p = s.params;
  const int k = parse_number<int>(field("vocab_k"), "vocab_k");
  const int dims = parse_number<int>(field("dims"), "dims");
  p.descriptor.patch = parse_number<int>(field("patch"), "patch");
  p.descriptor.tiles = parse_number<int>(field("tiles"), "tiles");
  p.descriptor.bins = parse_number<int>(field("bins"), "bins");
  p.keypoints = parse_number<int>(field("keypoints"), "keypoints");
  p.sample_seed = parse_number<std::uint64_t>(field("sample_seed"), "sample_seed");
  p.vocab_seed = parse_number<std::uint64_t>(field("vocab_seed"), "vocab_seed");
  p.kmeans_iters = parse_number<int>(field("kmeans_iters"), "kmeans_iters");
  p.max_training = parse_number<std::size_t>(field("max_training"), "max_training");
  p.vocab_k = k;
  if (k < 2 || dims != p.descriptor.dims()) throw Error(ErrorKind::Parse, "index header: inconsistent vocabulary shape");
  const auto hash = field("manifest_hash");
  s.manifest_hash = hash == "-" ? std::string{} : std::string(hash);
  const auto mpath = field("manifest_path");
  s.manifest_path = mpath == "-" ? std::string{} : std::string(mpath);

  const auto n_models = parse_number<std::size_t>(field("models"), "models");
  std::vector<ModelEntry> models;
  models.reserve(n_models);
  for (std::size_t i = 0; i < n_models; ++i) {
    const auto parts = split(require_line("model"), '\t');
    if (parts.size() != 4 || parts[0] != "model") throw Error(ErrorKind::Parse, "index header: malformed model line");
    models.push_back({std::string(parts[1]), std::string(parts[2]), std::string(parts[3])});
  }
  const auto n_images = parse_number<std::size_t>(field("images"), "images");
  std::vector<ImageEntry> images;
  images.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    const auto parts = split(require_line("image"), ' ');
    if (parts.size() != 3 || parts[0] != "image") throw Error(ErrorKind::Parse, "index header: malformed image line");
    images.push_back({parse_number<std::uint32_t>(parts[1], "image model"), parse_number<std::uint32_t>(parts[2], "image view")});
  }
  if (require_line("end_header") != "end_header") throw Error(ErrorKind::Parse, "index header: missing end_header");

  BinaryReader in(bytes.substr(pos));
  s.vocabulary.k = k;
  s.vocabulary.dims = dims;
  s.vocabulary.seed = p.vocab_seed;
  s.vocabulary.centroids.resize(static_cast<std::size_t>(k) * dims);
  for (auto& c : s.vocabulary.centroids) c = in.get<double>("centroids");
  std::vector<double> idf(static_cast<std::size_t>(k));
  for (auto& w : idf) w = in.get<double>("idf");
  std::vector<std::vector<Posting>> postings(static_cast<std::size_t>(k));
  for (auto& list : postings) {
    const auto count = in.get<std::uint32_t>("posting length");
    if (count > n_images) throw Error(ErrorKind::Parse, "posting list longer than the image table");
    list.resize(count);
    for (auto& post : list) {
      post.image = in.get<std::uint32_t>("posting image id");
      post.weight = in.get<float>("posting weight");
    }
  }
  if (!in.at_end()) throw Error(ErrorKind::Parse, "trailing bytes after index postings");
  s.index = InvertedIndex::from_parts(std::move(idf), std::move(postings), std::move(images), std::move(models));
  return s;
}

void save_index(const SketchIndex& index, const fs::path& path) { write_text_file(path, serialize_index(index)); }

SketchIndex load_index(const fs::path& path) {
  try {
    return parse_index(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void check_manifest(const SketchIndex& index, const fs::path& manifest_path) {
  const auto actual = sha256_hex(read_text_file(manifest_path));
  if (actual != index.manifest_hash) {
    throw Error(ErrorKind::Stale, "index is stale: manifest '" + manifest_path.string() + "' hashes to " + actual +
                                      " but the index was built from " +
                                      (index.manifest_hash.empty() ? std::string("<unknown>") : index.manifest_hash));
  }
}

}  // namespace pcsketch
