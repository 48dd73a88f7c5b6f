#include "pcsketch/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <random>

#include "pcsketch/contour.hpp"
#include "pcsketch/dataset.hpp"
#include "pcsketch/error.hpp"

using nlohmann::json;

namespace pcsketch {

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::Empty: return "EMPTY";
    case SessionState::CloudLoaded: return "CLOUD_LOADED";
    case SessionState::Retrieved: return "RETRIEVED";
    case SessionState::Aligned: return "ALIGNED";
    case SessionState::ContourReady: return "CONTOUR_READY";
    case SessionState::Exported: return "EXPORTED";
  }
  return "UNKNOWN";
}

json to_json(const SessionMetrics& m) {
  json j;
  j["sketch_count"] = m.sketch_count;
  j["retrieval_count"] = m.retrieval_count;
  j["last_similarity"] = m.last_similarity ? json(*m.last_similarity) : json(nullptr);
  j["last_icp_error"] = m.last_icp_error ? json(*m.last_icp_error) : json(nullptr);
  return j;
}

json to_json(const IcpResult& r) {
  json rot = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(r.transform.rotation(i, k));
  json j;
  j["rotation"] = rot;
  j["translation"] = {r.transform.translation.x(), r.transform.translation.y(), r.transform.translation.z()};
  j["prescale"] = r.prescale;
  j["error"] = r.error;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["record"] = serialize(r);
  return j;
}

struct SessionEngine::Session {
  std::mutex mutex;
  std::string id;
  SessionOptions options;
  SessionState state = SessionState::Empty;
  std::optional<PointCloud> cloud;
  std::optional<SketchImage> sketch;
  std::vector<RetrievalHit> hits;
  std::optional<std::uint32_t> selected;
  std::optional<IcpResult> alignment;
  std::optional<TriangleMesh> aligned_mesh;
  SessionMetrics metrics;
  std::vector<HistoryEntry> history;

  void require(std::initializer_list<SessionState> allowed, std::string_view action) const {
    for (auto s : allowed) {
      if (state == s) return;
    }
    throw Error(ErrorKind::StateConflict,
                "cannot " + std::string(action) + " in state " + std::string(to_string(state)));
  }

  void record(std::string step) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    history.push_back({std::move(step), std::chrono::duration_cast<std::chrono::milliseconds>(now).count(), metrics});
  }
};

namespace {

Vec3 checked_direction(const Vec3& d) {
  if (!d.allFinite() || d.norm() < 1e-12) throw Error(ErrorKind::Validation, "view direction must be a finite non-zero vector");
  return d.normalized();
}

void check_view_size(int w, int h) {
  if (w < 16 || h < 16 || w > 4096 || h > 4096) {
    throw Error(ErrorKind::Validation, "image size must be between 16 and 4096 pixels per side");
  }
}

}  // namespace

SessionEngine::SessionEngine(std::shared_ptr<const SketchIndex> index) : index_(std::move(index)) {
  if (!index_) throw Error(ErrorKind::Validation, "session engine needs an index");
  id_salt_ = std::random_device{}();
  id_salt_ = (id_salt_ << 32) ^ std::random_device{}();
}

std::string SessionEngine::create_session(const SessionOptions& options) {
  if (options.canvas_width < 16 || options.canvas_height < 16 || options.canvas_width > 4096 ||
      options.canvas_height > 4096) {
    throw Error(ErrorKind::Validation, "canvas must be between 16 and 4096 pixels per side");
  }
  auto s = std::make_shared<Session>();
  s->options = options;
  std::lock_guard lock(mutex_);
  // splitmix64 of a counter: unique per engine, not guessable across engines
  std::uint64_t z = id_salt_ + 0x9E3779B97F4A7C15ULL * ++next_id_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
  s->id = buf;
  s->record("create");
  sessions_.emplace(s->id, s);
  return s->id;
}

std::shared_ptr<SessionEngine::Session> SessionEngine::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "no session '" + id + "'");
  return it->second;
}

std::shared_ptr<const TriangleMesh> SessionEngine::model_mesh(std::uint32_t model) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = meshes_.find(model); it != meshes_.end()) return it->second;
  }
  if (model >= index_->index.model_count()) throw Error(ErrorKind::NotFound, "no model " + std::to_string(model));
  auto mesh = std::make_shared<const TriangleMesh>(normalize_mesh(load_mesh(index_->index.models()[model].mesh_path)));
  std::lock_guard lock(mutex_);
  return meshes_.emplace(model, std::move(mesh)).first->second;
}

json SessionEngine::hits_json(const Session& s) const {
  json hits = json::array();
  for (const auto& h : s.hits) {
    const auto& m = index_->index.models()[h.model];
    hits.push_back({{"model_id", h.model}, {"name", m.name}, {"category", m.category}, {"best_view", h.best_view},
                    {"similarity", h.similarity}});
  }
  return hits;
}

json SessionEngine::document(const Session& s) const {
  json j;
  j["id"] = s.id;
  j["state"] = to_string(s.state);
  j["canvas"] = {{"width", s.options.canvas_width}, {"height", s.options.canvas_height}};
  j["seed"] = s.options.seed;
  j["point_count"] = s.cloud ? json(s.cloud->size()) : json(nullptr);
  j["hits"] = hits_json(s);
  j["selected_model"] = s.selected ? json(*s.selected) : json(nullptr);
  j["alignment"] = s.alignment ? to_json(*s.alignment) : json(nullptr);
  j["metrics"] = to_json(s.metrics);
  j["history_length"] = s.history.size();
  return j;
}

json SessionEngine::describe(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return document(*s);
}

json SessionEngine::load_pointcloud(const std::string& id, std::string_view body, CloudFormat format) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->require({SessionState::Empty}, "load a point cloud");
  s->cloud = normalize_cloud(parse_pointcloud(body, format));
  s->state = SessionState::CloudLoaded;
  s->record("load_cloud");
  return document(*s);
}

ViewResult SessionEngine::get_view(const std::string& id, const Vec3& direction, int width, int height) const {
  const Vec3 d = checked_direction(direction);
  check_view_size(width, height);
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->cloud) throw Error(ErrorKind::StateConflict, "cannot view: no point cloud loaded (state " + std::string(to_string(s->state)) + ")");
  return {width, height, d, project_points(*s->cloud, Viewpoint{d, 0}, width, height, 0.1)};
}

std::string SessionEngine::get_view_png(const std::string& id, const Vec3& direction, int width, int height) const {
  const auto view = get_view(id, direction, width, height);
  return encode_png(render_points(view.points, width, height));
}

json SessionEngine::submit_sketch(const std::string& id, std::string_view png, int topk) {
  if (topk < 1) throw Error(ErrorKind::Validation, "topk must be >= 1");
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->require({SessionState::Empty, SessionState::CloudLoaded, SessionState::ContourReady}, "submit a sketch");
  SketchImage sketch = sketch_from_png(png);
  if (sketch.ink_count() == 0) throw Error(ErrorKind::Validation, "sketch is blank");
  auto hits = query(*index_, sketch, topk);
  s->sketch = std::move(sketch);
  s->hits = std::move(hits);
  s->selected.reset();
  s->alignment.reset();
  s->aligned_mesh.reset();
  ++s->metrics.sketch_count;
  ++s->metrics.retrieval_count;
  s->metrics.last_similarity = s->hits.empty() ? 0.0 : s->hits.front().similarity;
  s->state = SessionState::Retrieved;
  s->record("submit_sketch");
  json j;
  j["id"] = s->id;
  j["state"] = to_string(s->state);
  j["hits"] = hits_json(*s);
  j["metrics"] = to_json(s->metrics);
  return j;
}

json SessionEngine::select_and_align(const std::string& id, std::uint32_t model) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->require({SessionState::Retrieved}, "select and align");
  const bool in_hits = std::any_of(s->hits.begin(), s->hits.end(), [&](const auto& h) { return h.model == model; });
  if (!in_hits) throw Error(ErrorKind::NotFound, "model " + std::to_string(model) + " is not among the current hits");
  const auto mesh = model_mesh(model);

  std::optional<IcpResult> alignment;
  TriangleMesh aligned = *mesh;
  if (s->cloud) {
    IcpParams params;
    params.seed = s->options.seed;
    const auto model_pts = icp_model_points(*mesh, s->options.seed);
    try {
      alignment = icp(model_pts, *s->cloud, params);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
      IcpResult failed;
      failed.converged = false;
      failed.error = std::numeric_limits<double>::infinity();
      alignment = failed;
    }
    for (auto& v : aligned.vertices) v = alignment->apply(v);
    if (std::isfinite(alignment->error)) s->metrics.last_icp_error = alignment->error;
  }
  s->selected = model;
  s->alignment = alignment;
  s->aligned_mesh = std::move(aligned);
  s->state = SessionState::Aligned;
  s->record("align");
  json j;
  j["id"] = s->id;
  j["state"] = to_string(s->state);
  j["model_id"] = model;
  j["alignment"] = alignment ? to_json(*alignment) : json(nullptr);
  j["metrics"] = to_json(s->metrics);
  return j;
}

std::string SessionEngine::extract_contour(const std::string& id, const Vec3& direction) {
  const Vec3 d = checked_direction(direction);
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->require({SessionState::Aligned}, "extract a contour");
  const int w = s->options.canvas_width;
  const int h = s->options.canvas_height;
  const auto rendered = render_silhouette(*s->aligned_mesh, Viewpoint{d, 0}, w, h);
  SketchImage contour = extract_model_contour(rendered, w, h);
  std::string png = encode_png(contour);
  s->sketch = std::move(contour);
  s->state = SessionState::ContourReady;
  s->record("extract_contour");
  return png;
}

ExportResult SessionEngine::export_model(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->require({SessionState::Aligned, SessionState::ContourReady}, "export");
  ExportResult out{write_mesh_obj(*s->aligned_mesh), s->metrics, *s->selected};
  s->state = SessionState::Exported;
  s->record("export");
  return out;
}

std::vector<HistoryEntry> SessionEngine::history(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->history;
}

SessionState SessionEngine::state(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->state;
}

}  // namespace pcsketch
