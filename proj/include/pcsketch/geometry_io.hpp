#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "pcsketch/geometry.hpp"

namespace pcsketch {

enum class CloudFormat { Xyz, PlyAscii };

/// ASCII OFF. `#` comments are allowed anywhere; counts may share the header
/// line. Polygons with more than three vertices are fan-triangulated from
/// their first vertex. Errors carry the 1-based line number.
TriangleMesh parse_off(std::string_view text);

/// Minimal OBJ reader: `v` and `f` records only (`f` tokens may carry /vt/vn
/// suffixes, which are ignored). Polygons are fan-triangulated.
TriangleMesh parse_obj(std::string_view text);

PointCloud parse_pointcloud(std::string_view text, CloudFormat format);

/// `v` lines then 1-based `f` lines, LF endings, shortest round-trip decimals.
std::string write_mesh_obj(const TriangleMesh& mesh);

std::string write_pointcloud_xyz(const PointCloud& cloud);

// File helpers. Format is chosen from the extension (.off/.obj, .xyz/.ply).
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
TriangleMesh load_mesh(const std::filesystem::path& path);
PointCloud load_pointcloud(const std::filesystem::path& path);
CloudFormat cloud_format_from_name(std::string_view name);

}  // namespace pcsketch
