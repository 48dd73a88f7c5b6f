#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcsketch/geometry.hpp"
#include "pcsketch/geometry_io.hpp"
#include "pcsketch/icp.hpp"
#include "pcsketch/image.hpp"
#include "pcsketch/render.hpp"
#include "pcsketch/retrieval.hpp"

namespace pcsketch {

enum class SessionState { Empty, CloudLoaded, Retrieved, Aligned, ContourReady, Exported };

std::string_view to_string(SessionState state);

struct SessionMetrics {
  std::uint64_t sketch_count = 0;
  std::uint64_t retrieval_count = 0;
  std::optional<double> last_similarity;
  std::optional<double> last_icp_error;
};

struct HistoryEntry {
  std::string step;
  std::int64_t timestamp_ms = 0;
  SessionMetrics metrics;
};

struct SessionOptions {
  int canvas_width = 512;
  int canvas_height = 512;
  std::uint64_t seed = 0;
};

struct ViewResult {
  int width = 0;
  int height = 0;
  Vec3 direction = Vec3::UnitZ();
  std::vector<Point2> points;
};

struct ExportResult {
  std::string obj;
  SessionMetrics metrics;
  std::uint32_t model = 0;
};

nlohmann::json to_json(const SessionMetrics& m);
nlohmann::json to_json(const IcpResult& r);

/// In-memory sessions over one shared, read-only index. Calls on one session
/// are serialized; different sessions run independently.
class SessionEngine {
 public:
  explicit SessionEngine(std::shared_ptr<const SketchIndex> index);

  const SketchIndex& index() const { return *index_; }

  std::string create_session(const SessionOptions& options = {});
  nlohmann::json describe(const std::string& id) const;

  nlohmann::json load_pointcloud(const std::string& id, std::string_view body, CloudFormat format);
  ViewResult get_view(const std::string& id, const Vec3& direction, int width = 512, int height = 512) const;
  std::string get_view_png(const std::string& id, const Vec3& direction, int width = 512, int height = 512) const;
  nlohmann::json submit_sketch(const std::string& id, std::string_view png, int topk = 10);
  nlohmann::json select_and_align(const std::string& id, std::uint32_t model);
  /// Returns the contour sketch as PNG bytes at the session's canvas size.
  std::string extract_contour(const std::string& id, const Vec3& direction);
  ExportResult export_model(const std::string& id);

  std::vector<HistoryEntry> history(const std::string& id) const;
  SessionState state(const std::string& id) const;

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<const TriangleMesh> model_mesh(std::uint32_t model) const;
  nlohmann::json hits_json(const Session& s) const;
  nlohmann::json document(const Session& s) const;

  std::shared_ptr<const SketchIndex> index_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  mutable std::map<std::uint32_t, std::shared_ptr<const TriangleMesh>> meshes_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_ = 0;
};

}  // namespace pcsketch
