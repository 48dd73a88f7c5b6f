#include "pcsketch/geometry_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "pcsketch/error.hpp"

namespace pcsketch {
namespace {

struct Line {
  std::size_t number = 0;  // 1-based
  std::vector<std::string_view> tokens;
};

// Yields non-blank lines with `#` comments stripped.
class LineReader {
 public:
  explicit LineReader(std::string_view text, bool strip_comments = true)
      : text_(text), strip_comments_(strip_comments) {}

  std::optional<Line> next() {
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view raw = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (strip_comments_) {
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
      }
      Line line{line_no_, split(raw)};
      if (!line.tokens.empty()) return line;
    }
    return std::nullopt;
  }

  std::size_t line_number() const { return line_no_; }

 private:
  static std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < s.size()) {
      while (i < s.size() && is_space(s[i])) ++i;
      std::size_t j = i;
      while (j < s.size() && !is_space(s[j])) ++j;
      if (j > i) out.push_back(s.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::string_view text_;
  bool strip_comments_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what);
}

double to_double(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(line, "expected a number, got '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) fail(line, "non-finite coordinate '" + std::string(tok) + "'");
  return v;
}

long long to_int(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(line, "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

Vec3 read_xyz(const Line& line) {
  if (line.tokens.size() < 3) fail(line.number, "expected 3 coordinates");
  return {to_double(line.tokens[0], line.number), to_double(line.tokens[1], line.number),
          to_double(line.tokens[2], line.number)};
}

void append_fan(TriangleMesh& mesh, const std::vector<std::uint32_t>& poly) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
    mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
  }
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void check_vertex_count(const TriangleMesh& mesh) {
  if (mesh.vertices.size() < 3) {
    throw Error(ErrorKind::Parse, "mesh needs at least 3 vertices, got " + std::to_string(mesh.vertices.size()));
  }
}

PointCloud parse_xyz(std::string_view text) {
  LineReader reader(text);
  PointCloud cloud;
  while (auto line = reader.next()) {
    cloud.points.push_back(read_xyz(*line));
    for (std::size_t i = 3; i < line->tokens.size(); ++i) to_double(line->tokens[i], line->number);
  }
  if (cloud.empty()) throw Error(ErrorKind::Parse, "point cloud file contains no points");
  return cloud;
}

struct PlyElement {
  std::string name;
  long long count = 0;
  struct Property {
    std::string name;
    bool is_list = false;
  };
  std::vector<Property> properties;
};

PointCloud parse_ply_ascii(std::string_view text) {
  LineReader reader(text, /*strip_comments=*/false);
  auto first = reader.next();
  if (!first || first->tokens.size() != 1 || first->tokens[0] != "ply") {
    throw Error(ErrorKind::Parse, "line 1: PLY files must start with 'ply'");
  }
  std::vector<PlyElement> elements;
  bool saw_format = false;
  for (;;) {
    auto line = reader.next();
    if (!line) throw Error(ErrorKind::Parse, "PLY header is missing 'end_header'");
    const auto& tok = line->tokens;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 3) fail(line->number, "malformed format line");
      if (tok[1] != "ascii") fail(line->number, "binary PLY is not supported (format " + std::string(tok[1]) + ")");
      if (tok[2] != "1.0") fail(line->number, "unsupported PLY version " + std::string(tok[2]));
      saw_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) fail(line->number, "malformed element line");
      const long long count = to_int(tok[2], line->number);
      if (count < 0) fail(line->number, "negative element count");
      elements.push_back({std::string(tok[1]), count, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) fail(line->number, "property before any element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (tok.size() != 5) fail(line->number, "malformed list property");
        elements.back().properties.push_back({std::string(tok[4]), true});
      } else {
        if (tok.size() != 3) fail(line->number, "malformed property line");
        elements.back().properties.push_back({std::string(tok[2]), false});
      }
    } else {
      fail(line->number, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!saw_format) throw Error(ErrorKind::Parse, "PLY header has no format line");

  PointCloud cloud;
  bool found_vertex = false;
  for (const auto& element : elements) {
    if (element.name != "vertex") {
      for (long long i = 0; i < element.count; ++i) {
        if (!reader.next()) throw Error(ErrorKind::Parse, "PLY data ends inside element '" + element.name + "'");
      }
      continue;
    }
    found_vertex = true;
    std::array<int, 3> column{-1, -1, -1};
    int col = 0;
    for (const auto& prop : element.properties) {
      const int axis = prop.name == "x" ? 0 : prop.name == "y" ? 1 : prop.name == "z" ? 2 : -1;
      if (prop.is_list) {
        if (std::any_of(column.begin(), column.end(), [](int c) { return c < 0; })) {
          throw Error(ErrorKind::Parse, "list property before x/y/z in vertex element is not supported");
        }
        break;
      }
      if (axis >= 0) column[static_cast<std::size_t>(axis)] = col;
      ++col;
    }
    if (std::any_of(column.begin(), column.end(), [](int c) { return c < 0; })) {
      throw Error(ErrorKind::Parse, "vertex element lacks x, y, z properties");
    }
    const int needed = *std::max_element(column.begin(), column.end()) + 1;
    cloud.points.reserve(static_cast<std::size_t>(element.count));
    for (long long i = 0; i < element.count; ++i) {
      auto line = reader.next();
      if (!line) {
        throw Error(ErrorKind::Parse, "PLY data ends after " + std::to_string(i) + " of " +
                                          std::to_string(element.count) + " vertices");
      }
      if (static_cast<int>(line->tokens.size()) < needed) fail(line->number, "too few vertex properties");
      for (const auto& t : line->tokens) to_double(t, line->number);
      cloud.points.emplace_back(to_double(line->tokens[static_cast<std::size_t>(column[0])], line->number),
                                to_double(line->tokens[static_cast<std::size_t>(column[1])], line->number),
                                to_double(line->tokens[static_cast<std::size_t>(column[2])], line->number));
    }
  }
  if (!found_vertex) throw Error(ErrorKind::Parse, "PLY file has no vertex element");
  if (cloud.empty()) throw Error(ErrorKind::Parse, "point cloud file contains no points");
  return cloud;
}

}  // namespace

TriangleMesh parse_off(std::string_view text) {
  LineReader reader(text);
  auto header = reader.next();
  if (!header || header->tokens[0] != "OFF") {
    throw Error(ErrorKind::Parse, "missing 'OFF' header");
  }
  std::vector<std::string_view> counts(header->tokens.begin() + 1, header->tokens.end());
  std::size_t counts_line = header->number;
  if (counts.empty()) {
    auto line = reader.next();
    if (!line) throw Error(ErrorKind::Parse, "missing vertex/face counts after 'OFF'");
    counts = line->tokens;
    counts_line = line->number;
  }
  if (counts.size() < 2) fail(counts_line, "expected vertex and face counts");
  const long long nv = to_int(counts[0], counts_line);
  const long long nf = to_int(counts[1], counts_line);
  if (nv < 0 || nf < 0) fail(counts_line, "negative element count");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    auto line = reader.next();
    if (!line) {
      throw Error(ErrorKind::Parse, "file ends after " + std::to_string(i) + " of " + std::to_string(nv) +
                                        " declared vertices");
    }
    mesh.vertices.push_back(read_xyz(*line));
  }
  mesh.faces.reserve(static_cast<std::size_t>(nf));
  std::vector<std::uint32_t> poly;
  for (long long i = 0; i < nf; ++i) {
    auto line = reader.next();
    if (!line) {
      throw Error(ErrorKind::Parse, "file ends after " + std::to_string(i) + " of " + std::to_string(nf) +
                                        " declared faces");
    }
    const long long n = to_int(line->tokens[0], line->number);
    if (n < 3) fail(line->number, "face with fewer than 3 vertices");
    if (static_cast<long long>(line->tokens.size()) < n + 1) fail(line->number, "face lists fewer indices than declared");
    poly.clear();
    for (long long k = 1; k <= n; ++k) {
      const long long idx = to_int(line->tokens[static_cast<std::size_t>(k)], line->number);
      if (idx < 0 || idx >= nv) {
        fail(line->number, "vertex index " + std::to_string(idx) + " out of range [0, " + std::to_string(nv) + ")");
      }
      poly.push_back(static_cast<std::uint32_t>(idx));
    }
    append_fan(mesh, poly);
  }
  check_vertex_count(mesh);
  return mesh;
}

TriangleMesh parse_obj(std::string_view text) {
  LineReader reader(text);
  TriangleMesh mesh;
  std::vector<std::uint32_t> poly;
  std::vector<std::pair<std::size_t, std::vector<long long>>> pending;
  while (auto line = reader.next()) {
    const auto& tok = line->tokens;
    if (tok[0] == "v") {
      if (tok.size() < 4) fail(line->number, "expected 3 coordinates");
      mesh.vertices.emplace_back(to_double(tok[1], line->number), to_double(tok[2], line->number),
                                 to_double(tok[3], line->number));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) fail(line->number, "face with fewer than 3 vertices");
      std::vector<long long> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        auto t = tok[k];
        if (auto slash = t.find('/'); slash != std::string_view::npos) t = t.substr(0, slash);
        idx.push_back(to_int(t, line->number));
      }
      pending.emplace_back(line->number, std::move(idx));
    }
  }
  const auto nv = static_cast<long long>(mesh.vertices.size());
  for (const auto& [line_no, idx] : pending) {
    poly.clear();
    for (long long i : idx) {
      const long long zero_based = i > 0 ? i - 1 : nv + i;
      if (i == 0 || zero_based < 0 || zero_based >= nv) {
        fail(line_no, "vertex index " + std::to_string(i) + " out of range");
      }
      poly.push_back(static_cast<std::uint32_t>(zero_based));
    }
    append_fan(mesh, poly);
  }
  check_vertex_count(mesh);
  return mesh;
}

PointCloud parse_pointcloud(std::string_view text, CloudFormat format) {
  return format == CloudFormat::Xyz ? parse_xyz(text) : parse_ply_ascii(text);
}

std::string write_mesh_obj(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
  for (const auto& v : mesh.vertices) {
    out += "v ";
    append_number(out, v.x());
    out += ' ';
    append_number(out, v.y());
    out += ' ';
    append_number(out, v.z());
    out += '\n';
  }
  for (const auto& f : mesh.faces) {
    out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
  }
  return out;
}

std::string write_pointcloud_xyz(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 48);
  for (const auto& p : cloud.points) {
    append_number(out, p.x());
    out += ' ';
    append_number(out, p.y());
    out += ' ';
    append_number(out, p.z());
    out += '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  const std::string text = read_text_file(path);
  try {
    if (ext == ".obj" || ext == ".OBJ") return parse_obj(text);
    return parse_off(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

CloudFormat cloud_format_from_name(std::string_view name) {
  if (name == "ply" || name == "ply-ascii") return CloudFormat::PlyAscii;
  if (name == "xyz") return CloudFormat::Xyz;
  auto dot = name.rfind('.');
  if (dot != std::string_view::npos) {
    const auto ext = name.substr(dot + 1);
    if (ext == "ply" || ext == "PLY") return CloudFormat::PlyAscii;
    if (ext == "xyz" || ext == "XYZ" || ext == "txt") return CloudFormat::Xyz;
  }
  throw Error(ErrorKind::Validation, "unknown point cloud format '" + std::string(name) + "'");
}

PointCloud load_pointcloud(const std::filesystem::path& path) {
  const auto format = cloud_format_from_name(path.filename().string());
  const std::string text = read_text_file(path);
  try {
    return parse_pointcloud(text, format);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace pcsketch
