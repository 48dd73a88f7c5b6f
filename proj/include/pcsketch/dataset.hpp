#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pcsketch/contour.hpp"
#include "pcsketch/retrieval.hpp"

namespace pcsketch {

struct PipelineParams {
  int n_views = 102;
  int canvas = 512;
  double margin = 0.1;
  ContourParams contour;
};

struct ManifestEntry {
  std::uint32_t model_id = 0;
  std::string model_name;
  std::string category;
  std::string mesh_path;   // absolute
  int view = 0;
  std::string image_path;  // relative to the manifest's directory
};

struct ManifestReject {
  std::string mesh_path;
  std::string reason;
};

struct DatasetManifest {
  PipelineParams params;
  std::string model_dir;
  std::vector<ManifestEntry> entries;
  std::vector<ManifestReject> rejects;

  std::size_t model_count() const;
};

/// Tab-separated, one entry per line, `#!` header lines carry the parameters.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Renders every OFF mesh under `model_dir` from every lattice viewpoint,
/// extracts its contour sketch, and writes `images/*.png` plus
/// `manifest.tsv` into `out_dir`. Category is the first directory below
/// `model_dir`. Unparseable meshes are skipped and listed as rejects.
DatasetManifest build_contour_dataset(const std::filesystem::path& model_dir, const std::filesystem::path& out_dir,
                                      const PipelineParams& params = {});

inline constexpr std::string_view kManifestFileName = "manifest.tsv";

/// Decodes a PNG and binarizes it into a sketch (ink = darker than threshold).
SketchImage sketch_from_png(std::string_view png_bytes, int threshold = 128);

/// Trains the vocabulary on a descriptor sample drawn across all manifest
/// images, quantizes every image and builds the tf-idf index. Records the
/// manifest's content hash.
SketchIndex build_search_index(const std::filesystem::path& manifest_path, const RetrievalParams& params = {});

inline constexpr std::string_view kIndexMagic = "PCSKETCH-INDEX";
inline constexpr int kIndexVersion = 1;

std::string serialize_index(const SketchIndex& index);

/// Throws BadMagic, Version or Truncated for the respective damage.
SketchIndex parse_index(std::string_view bytes);

void save_index(const SketchIndex& index, const std::filesystem::path& path);
SketchIndex load_index(const std::filesystem::path& path);

/// Throws Stale when the manifest no longer hashes to what the index recorded.
void check_manifest(const SketchIndex& index, const std::filesystem::path& manifest_path);

}  // namespace pcsketch
