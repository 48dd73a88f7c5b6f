#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <map>

#include "pcsketch/dataset.hpp"
#include "pcsketch/error.hpp"
#include "pcsketch/geometry_io.hpp"
#include "pcsketch/server.hpp"
#include "pcsketch/session.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

using namespace pcsketch;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kModels = fs::path(PCSKETCH_TEST_DATA) / "models";
constexpr int kCanvas = 256;
constexpr int kViews = 12;

// 5 fixture models x 12 views at 256 px, built once per process.
struct Corpus {
  support::TempDir dir{"pcsketch-session"};
  DatasetManifest manifest;
  std::shared_ptr<const SketchIndex> index;

  Corpus() {
    PipelineParams p;
    p.n_views = kViews;
    p.canvas = kCanvas;
    manifest = build_contour_dataset(kModels, dir / "out", p);
    RetrievalParams r;
    r.vocab_k = 64;
    r.keypoints = 300;
    r.max_training = 8000;
    index = std::make_shared<const SketchIndex>(build_search_index(dir / "out/manifest.tsv", r));
  }

  std::string image_png(std::uint32_t model, int view) const {
    return support::slurp(dir / "out" / manifest.entries[model * kViews + view].image_path);
  }
  std::uint32_t model_id(const std::string& name) const {
    for (const auto& e : manifest.entries)
      if (e.model_name == name) return e.model_id;
    FAIL("no model " << name);
    return 0;
  }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

std::string cloud_xyz(const std::string& rel, std::size_t points = 300, std::uint64_t seed = 5) {
  const auto mesh = normalize_mesh(load_mesh(kModels / rel));
  return write_pointcloud_xyz(PointCloud{sample_surface(mesh, points, seed)});
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Io;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

enum class Action { Load, Sketch, Align, Contour, Export };

const std::map<Action, std::string> kActionText = {{Action::Load, "load a point cloud"},
                                                   {Action::Sketch, "submit a sketch"},
                                                   {Action::Align, "select and align"},
                                                   {Action::Contour, "extract a contour"},
                                                   {Action::Export, "export"}};

// Drives a fresh session to `target` along the main loop.
std::string session_in(SessionEngine& engine, SessionState target) {
  const auto& c = corpus();
  const auto id = engine.create_session({kCanvas, kCanvas, 3});
  if (target == SessionState::Empty) return id;
  engine.load_pointcloud(id, cloud_xyz("cup/teacup.off"), CloudFormat::Xyz);
  if (target == SessionState::CloudLoaded) return id;
  engine.submit_sketch(id, c.image_png(c.model_id("teacup"), 2));
  if (target == SessionState::Retrieved) return id;
  engine.select_and_align(id, c.model_id("teacup"));
  if (target == SessionState::Aligned) return id;
  engine.extract_contour(id, Vec3(0, -1, 0));
  if (target == SessionState::ContourReady) return id;
  engine.export_model(id);
  return id;
}

void perform(SessionEngine& engine, const std::string& id, Action a) {
  const auto& c = corpus();
  switch (a) {
    case Action::Load: engine.load_pointcloud(id, cloud_xyz("cup/teacup.off"), CloudFormat::Xyz); break;
    case Action::Sketch: engine.submit_sketch(id, c.image_png(c.model_id("teacup"), 2)); break;
    case Action::Align: engine.select_and_align(id, c.model_id("teacup")); break;
    case Action::Contour: engine.extract_contour(id, Vec3(0, -1, 0)); break;
    case Action::Export: engine.export_model(id); break;
  }
}

struct Http {
  SessionEngine engine;
  HttpServer server;
  int port;
  httplib::Client client;

  explicit Http(ServerOptions opts = {})
      : engine(corpus().index), server(engine, std::move(opts)), port(server.bind("127.0.0.1", 0)),
        client("127.0.0.1", port) {
    server.start();
    client.set_read_timeout(120, 0);
  }
  ~Http() { server.stop(); }

  httplib::Result post(const std::string& path, const std::string& body, const std::string& type) {
    return client.Post(path, body, type);
  }
  httplib::Result post_json(const std::string& path, const json& body) { return post(path, body.dump(), "application/json"); }
  std::string create(int canvas = kCanvas, std::uint64_t seed = 3) {
    auto r = post_json("/v1/sessions", {{"canvas_width", canvas}, {"canvas_height", canvas}, {"seed", seed}});
    REQUIRE(r);
    REQUIRE(r->status == 200);
    return json::parse(r->body).at("id");
  }
};

}  // namespace

TEST_CASE("session: create echoes the canvas and hands out distinct ids") {
  SessionEngine engine(corpus().index);
  const auto a = engine.create_session();
  const auto b = engine.create_session();
  CHECK(a != b);
  CHECK(a.size() == 16);
  const auto doc = engine.describe(a);
  CHECK(doc["canvas"]["width"] == 512);
  CHECK(doc["canvas"]["height"] == 512);
  CHECK(doc["state"] == "EMPTY");
  CHECK(kind_of([&] { engine.create_session({0, 512, 0}); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { engine.describe("0123456789abcdef"); }) == ErrorKind::NotFound);
}

TEST_CASE("session: exhaustive transition matrix") {
  SessionEngine engine(corpus().index);
  const std::map<Action, std::vector<SessionState>> legal = {
      {Action::Load, {SessionState::Empty}},
      {Action::Sketch, {SessionState::Empty, SessionState::CloudLoaded, SessionState::ContourReady}},
      {Action::Align, {SessionState::Retrieved}},
      {Action::Contour, {SessionState::Aligned}},
      {Action::Export, {SessionState::Aligned, SessionState::ContourReady}},
  };
  const std::map<std::pair<SessionState, Action>, SessionState> next = {
      {{SessionState::Empty, Action::Load}, SessionState::CloudLoaded},
      {{SessionState::Empty, Action::Sketch}, SessionState::Retrieved},
      {{SessionState::CloudLoaded, Action::Sketch}, SessionState::Retrieved},
      {{SessionState::ContourReady, Action::Sketch}, SessionState::Retrieved},
      {{SessionState::Retrieved, Action::Align}, SessionState::Aligned},
      {{SessionState::Aligned, Action::Contour}, SessionState::ContourReady},
      {{SessionState::Aligned, Action::Export}, SessionState::Exported},
      {{SessionState::ContourReady, Action::Export}, SessionState::Exported},
  };
  const SessionState states[] = {SessionState::Empty,   SessionState::CloudLoaded,  SessionState::Retrieved,
                                 SessionState::Aligned, SessionState::ContourReady, SessionState::Exported};
  for (auto from : states) {
    for (const auto& [action, allowed] : legal) {
      const auto id = session_in(engine, from);
      REQUIRE(engine.state(id) == from);
      const std::string state_name(to_string(from));
      CAPTURE(state_name);
      CAPTURE(kActionText.at(action));
      const bool ok = std::find(allowed.begin(), allowed.end(), from) != allowed.end();
      const auto before = engine.history(id).size();
      if (ok) {
        perform(engine, id, action);
        CHECK(engine.state(id) == next.at({from, action}));
        CHECK(engine.history(id).size() == before + 1);
      } else {
        CHECK(kind_of([&] { perform(engine, id, action); }) == ErrorKind::StateConflict);
        const auto msg = message_of([&] { perform(engine, id, action); });
        CHECK(msg.find(std::string(to_string(from))) != std::string::npos);
        CHECK(msg.find(kActionText.at(action)) != std::string::npos);
        CHECK(engine.state(id) == from);
        CHECK(engine.history(id).size() == before);
      }
    }
  }
}

TEST_CASE("session: history length equals successful mutating calls") {
  const auto& c = corpus();
  SessionEngine engine(c.index);
  const auto id = engine.create_session({kCanvas, kCanvas, 1});
  std::size_t calls = 1;
  CHECK(engine.history(id).size() == calls);
  CHECK_THROWS(engine.submit_sketch(id, "not a png"));
  engine.load_pointcloud(id, cloud_xyz("animal/dog.off"), CloudFormat::Xyz);
  ++calls;
  CHECK_THROWS(engine.load_pointcloud(id, cloud_xyz("animal/dog.off"), CloudFormat::Xyz));
  engine.get_view(id, Vec3(1, 0, 0));
  for (int round = 0; round < 3; ++round) {
    engine.submit_sketch(id, c.image_png(c.model_id("dog"), round));
    engine.select_and_align(id, c.model_id("dog"));
    engine.extract_contour(id, Vec3(0, -1, 0));
    calls += 3;
  }
  engine.export_model(id);
  ++calls;
  const auto h = engine.history(id);
  CHECK(h.size() == calls);
  CHECK(h.front().step == "create");
  CHECK(h.back().step == "export");
  CHECK(h.back().metrics.sketch_count == 3);
  CHECK(engine.describe(id)["history_length"] == calls);
}

TEST_CASE("session: cloud loading") {
  SessionEngine engine(corpus().index);
  const auto id = engine.create_session();
  const auto doc = engine.load_pointcloud(id, cloud_xyz("table/desk.off"), CloudFormat::Xyz);
  CHECK(doc["state"] == "CLOUD_LOADED");
  CHECK(doc["point_count"] == 300);
  const auto bad = engine.create_session();
  const auto msg = message_of([&] { engine.load_pointcloud(bad, "0 0 0\n1 1 oops\n", CloudFormat::Xyz); });
  CHECK(kind_of([&] { engine.load_pointcloud(bad, "0 0 0\n1 1 oops\n", CloudFormat::Xyz); }) == ErrorKind::Parse);
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(engine.state(bad) == SessionState::Empty);
}

TEST_CASE("session: view of a cube-corner cloud") {
  SessionEngine engine(corpus().index);
  const auto id = engine.create_session();
  CHECK(kind_of([&] { engine.get_view(id, Vec3(0, 0, 1)); }) == ErrorKind::StateConflict);
  std::string xyz;
  for (int i = 0; i < 8; ++i)
    xyz += std::to_string(i & 1 ? 1 : -1) + " " + std::to_string(i & 2 ? 1 : -1) + " " + std::to_string(i & 4 ? 1 : -1) + "\n";
  engine.load_pointcloud(id, xyz, CloudFormat::Xyz);
  const auto view = engine.get_view(id, Vec3(0, 0, 1));
  CHECK(view.width == 512);
  CHECK(view.height == 512);
  REQUIRE(view.points.size() == 8);
  // The cube's 2-unit extent fills 512 * 0.8 px centred at 256: corners at 256 -+ 204.8.
  std::map<std::pair<long, long>, int> corners;
  for (const auto& p : view.points) {
    CHECK(std::min(std::abs(p.x - 51.2), std::abs(p.x - 460.8)) < 1e-9);
    CHECK(std::min(std::abs(p.y - 51.2), std::abs(p.y - 460.8)) < 1e-9);
    ++corners[{std::lround(p.x), std::lround(p.y)}];
  }
  CHECK(corners.size() == 4);
  for (const auto& [k, n] : corners) CHECK(n == 2);
  CHECK(kind_of([&] { engine.get_view(id, Vec3::Zero()); }) == ErrorKind::Validation);
  const auto png = decode_png_rgb(engine.get_view_png(id, Vec3(0, 0, 1), 300, 200));
  CHECK(png.width == 300);
  CHECK(png.height == 200);
}

TEST_CASE("session: sketch-only mode aligns nothing") {
  const auto& c = corpus();
  SessionEngine engine(c.index);
  const auto id = engine.create_session({kCanvas, kCanvas, 0});
  const auto hits = engine.submit_sketch(id, c.image_png(c.model_id("armchair"), 4));
  CHECK(hits["hits"][0]["model_id"] == c.model_id("armchair"));
  CHECK(hits["metrics"]["sketch_count"] == 1);
  const auto a = engine.select_and_align(id, c.model_id("armchair"));
  CHECK(a["alignment"].is_null());
  CHECK(engine.state(id) == SessionState::Aligned);
  const auto out = engine.export_model(id);
  CHECK(parse_obj(out.obj).vertices.size() == normalize_mesh(load_mesh(kModels / "chair/armchair.off")).vertices.size());
}

TEST_CASE("session: bad sketches and unknown models") {
  const auto& c = corpus();
  SessionEngine engine(c.index);
  const auto id = engine.create_session({kCanvas, kCanvas, 0});
  CHECK(kind_of([&] { engine.submit_sketch(id, encode_png(GrayImage(kCanvas, kCanvas))); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { engine.submit_sketch(id, "GIF89a"); }) == ErrorKind::Parse);
  engine.submit_sketch(id, c.image_png(c.model_id("desk"), 0), 2);
  const auto hits = engine.describe(id)["hits"];
  REQUIRE(hits.size() == 2);
  std::uint32_t missing = 0;
  while (missing == hits[0]["model_id"] || missing == hits[1]["model_id"]) ++missing;
  CHECK(kind_of([&] { engine.select_and_align(id, missing); }) == ErrorKind::NotFound);
  CHECK(kind_of([&] { engine.select_and_align(id, 999); }) == ErrorKind::NotFound);
  CHECK(engine.state(id) == SessionState::Retrieved);
}

TEST_CASE("session: self-alignment, contour loop and export") {
  const auto& c = corpus();
  SessionEngine engine(c.index);
  const auto vase = c.model_id("amphora");
  const auto id = engine.create_session({kCanvas, kCanvas, 11});
  engine.load_pointcloud(id, cloud_xyz("vase/amphora.off", 300, 21), CloudFormat::Xyz);
  engine.submit_sketch(id, c.image_png(vase, 5));
  const auto a = engine.select_and_align(id, vase);
  REQUIRE(!a["alignment"].is_null());
  CHECK(a["alignment"]["error"].get<double>() < 0.01);
  CHECK(a["alignment"]["converged"] == true);
  CHECK(a["metrics"]["last_icp_error"].get<double>() < 0.01);

  const auto png = engine.extract_contour(id, Vec3(0.3, -1, 0.2));
  const auto img = decode_png_rgb(png);
  CHECK(img.width == kCanvas);
  CHECK(img.height == kCanvas);
  const auto again = engine.submit_sketch(id, png);
  CHECK(again["hits"][0]["model_id"] == vase);
  CHECK(again["metrics"]["sketch_count"] == 2);
  CHECK(again["metrics"]["retrieval_count"] == 2);

  engine.select_and_align(id, vase);
  const auto out = engine.export_model(id);
  CHECK(out.model == vase);
  CHECK(out.metrics.sketch_count == 2);
  const auto obj = parse_obj(out.obj);
  CHECK(obj.vertices.size() == load_mesh(kModels / "vase/amphora.off").vertices.size());
  CHECK(kind_of([&] { engine.export_model(id); }) == ErrorKind::StateConflict);
}

TEST_CASE("session: a 512 canvas yields a 512x512 contour") {
  const auto& c = corpus();
  SessionEngine engine(c.index);
  const auto id = engine.create_session();
  engine.submit_sketch(id, c.image_png(c.model_id("dog"), 1));
  engine.select_and_align(id, engine.describe(id)["hits"][0]["model_id"]);
  const auto img = decode_png_rgb(engine.extract_contour(id, Vec3(1, 1, 0)));
  CHECK(img.width == 512);
  CHECK(img.height == 512);
}

TEST_CASE("http: status mapping") {
  CHECK(http_status(ErrorKind::NotFound) == 404);
  CHECK(http_status(ErrorKind::StateConflict) == 409);
  CHECK(http_status(ErrorKind::Validation) == 400);
  CHECK(http_status(ErrorKind::Parse) == 400);
  CHECK(http_status(ErrorKind::Io) == 500);
}

TEST_CASE("http: endpoints and error codes") {
  const auto& c = corpus();
  Http http;
  auto bad = http.post_json("/v1/sessions", {{"canvas_width", 0}});
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"] == "validation");
  CHECK(http.post("/v1/sessions", "{oops", "application/json")->status == 400);

  const auto id = http.create();
  const std::string base = "/v1/sessions/" + id;
  auto doc = http.client.Get(base);
  REQUIRE(doc);
  CHECK(doc->status == 200);
  CHECK(json::parse(doc->body)["state"] == "EMPTY");
  CHECK(http.client.Get("/v1/sessions/00000000000000ff")->status == 404);
  CHECK(http.client.Get(base + "/view?dir=0,0,1")->status == 409);

  auto load = http.post(base + "/cloud?format=xyz", cloud_xyz("cup/teacup.off"), "text/plain");
  REQUIRE(load);
  CHECK(load->status == 200);
  CHECK(http.post(base + "/cloud", cloud_xyz("cup/teacup.off"), "text/plain")->status == 409);

  auto view = http.client.Get(base + "/view?dir=0,0,1&width=128&height=96");
  REQUIRE(view);
  CHECK(view->status == 200);
  const auto vj = json::parse(view->body);
  CHECK(vj["points"].size() == 300);
  CHECK(vj["width"] == 128);
  CHECK(http.client.Get(base + "/view?dir=0,0,0")->status == 400);
  auto vpng = http.client.Get(base + "/view.png?dir=1,0,0");
  REQUIRE(vpng);
  CHECK(vpng->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png_rgb(vpng->body).width == 512);

  CHECK(http.post(base + "/sketch", "not a png", "image/png")->status == 400);
  CHECK(http.post(base + "/sketch", encode_png(GrayImage(kCanvas, kCanvas)), "image/png")->status == 400);
  auto hits = http.post(base + "/sketch?topk=3", c.image_png(c.model_id("teacup"), 7), "image/png");
  REQUIRE(hits);
  CHECK(hits->status == 200);
  const auto hj = json::parse(hits->body);
  CHECK(hj["hits"].size() == 3);
  CHECK(hj["hits"][0]["model_id"] == c.model_id("teacup"));
  CHECK(hj["state"] == "RETRIEVED");

  CHECK(http.post_json(base + "/align", {{"model_id", 999}})->status == 404);
  CHECK(http.post_json(base + "/align", {{"model_id", "x"}})->status == 400);
  CHECK(http.post_json(base + "/contour", json::object())->status == 409);
  auto al = http.post_json(base + "/align", {{"model_id", c.model_id("teacup")}});
  REQUIRE(al);
  CHECK(al->status == 200);
  CHECK(json::parse(al->body)["alignment"]["record"].is_string());

  auto contour = http.post_json(base + "/contour", {{"direction", {0, -1, 0}}});
  REQUIRE(contour);
  CHECK(contour->status == 200);
  CHECK(contour->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png_rgb(contour->body).width == kCanvas);

  auto ex = http.post(base + "/export", "", "application/json");
  REQUIRE(ex);
  CHECK(ex->status == 200);
  const auto ej = json::parse(ex->body);
  CHECK(ej["state"] == "EXPORTED");
  CHECK(ej["metrics"]["sketch_count"] == 1);
  CHECK(parse_obj(ej["obj"].get<std::string>()).vertices.size() ==
        load_mesh(kModels / "cup/teacup.off").vertices.size());
  auto again = http.post(base + "/export", "", "application/json");
  CHECK(again->status == 409);
  CHECK(json::parse(again->body)["error"] == "state_conflict");
  CHECK(http.client.Get("/v2/nothing")->status == 404);
}

TEST_CASE("http: concurrent sessions stay independent") {
  const auto& c = corpus();
  Http http;
  const std::vector<std::string> names = {"teacup", "armchair", "desk", "amphora"};
  std::vector<std::string> ids(names.size());
  std::vector<json> results(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) ids[i] = http.create();
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < names.size(); ++i) {
    threads.emplace_back([&, i] {
      httplib::Client client("127.0.0.1", http.port);
      client.set_read_timeout(120, 0);
      auto r = client.Post("/v1/sessions/" + ids[i] + "/sketch", c.image_png(c.model_id(names[i]), 3), "image/png");
      if (r && r->status == 200) results[i] = json::parse(r->body);
    });
  }
  for (auto& t : threads) t.join();
  for (std::size_t i = 0; i < names.size(); ++i) {
    REQUIRE(results[i].is_object());
    CHECK(results[i]["id"] == ids[i]);
    CHECK(results[i]["hits"][0]["model_id"] == c.model_id(names[i]));
  }
}

TEST_CASE("http: journal replays to identical responses") {
  const auto& c = corpus();
  support::TempDir dir{"pcsketch-journal"};
  const auto journal = dir / "journal.jsonl";
  std::string recorded_obj;
  {
    Http http(ServerOptions{journal});
    const auto base = "/v1/sessions/" + http.create(kCanvas, 9);
    http.post(base + "/cloud", cloud_xyz("animal/dog.off", 300, 8), "text/plain");
    http.post(base + "/sketch", c.image_png(c.model_id("dog"), 6), "image/png");
    http.post(base + "/sketch", c.image_png(c.model_id("dog"), 6), "image/png");  // rejected: not journaled
    http.post_json(base + "/align", {{"model_id", c.model_id("dog")}});
    http.post_json(base + "/contour", {{"direction", {0, -1, 0}}});
    recorded_obj = json::parse(http.post(base + "/export", "", "")->body)["obj"];
  }
  const auto text = support::slurp(journal);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  Http fresh;
  const auto calls = replay_journal(text, "127.0.0.1", fresh.port);
  REQUIRE(calls.size() == 6);
  for (const auto& call : calls) {
    CAPTURE(call.path);
    CHECK(call.status == 200);
    CHECK(call.matches_recorded);
  }
  CHECK(json::parse(calls.back().body)["obj"] == recorded_obj);
}

TEST_CASE("http: journal location from the environment") {
  ::unsetenv(kJournalEnv);
  CHECK(!journal_path_from_env());
  ::setenv(kJournalEnv, "/tmp/somewhere", 1);
  REQUIRE(journal_path_from_env());
  CHECK(*journal_path_from_env() == fs::path("/tmp/somewhere/journal.jsonl"));
  ::setenv(kJournalEnv, "", 1);
  CHECK(!journal_path_from_env());
  ::unsetenv(kJournalEnv);
}
