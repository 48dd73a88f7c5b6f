#include "pcsketch/server.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pcsketch/codec.hpp"
#include "pcsketch/geometry_io.hpp"

using nlohmann::json;

namespace pcsketch {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::StateConflict: return 409;
    case ErrorKind::Io:
    case ErrorKind::Stale: return 500;
    default: return 400;
  }
}

std::optional<std::filesystem::path> journal_path_from_env() {
  const char* dir = std::getenv(kJournalEnv);
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  std::filesystem::create_directories(dir);
  return std::filesystem::path(dir) / "journal.jsonl";
}

namespace {

constexpr const char* kSessionPrefix = "/v1/sessions/";

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::string session;  // id the call acted on, for the journal
};

Reply json_reply(const json& doc, std::string session) { return {200, "application/json", doc.dump(), std::move(session)}; }

std::string error_body(std::string_view kind, std::string_view message) {
  return json{{"error", kind}, {"message", message}}.dump();
}

// Hash of a response with the session id masked, so replays on a server that
// hands out different ids still compare equal.
std::string response_hash(std::string body, const std::string& session) {
  if (!session.empty()) {
    for (auto pos = body.find(session); pos != std::string::npos; pos = body.find(session, pos + 9)) {
      body.replace(pos, session.size(), "<session>");
    }
  }
  return sha256_hex(body);
}

Vec3 parse_direction(const std::string& text) {
  std::array<double, 3> v{};
  std::istringstream in(text);
  char sep = 0;
  if (!(in >> v[0] >> sep >> v[1] >> sep >> v[2]) || !(in >> std::ws).eof()) {
    throw Error(ErrorKind::Parse, "direction must be 'x,y,z', got '" + text + "'");
  }
  return {v[0], v[1], v[2]};
}

Vec3 direction_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw Error(ErrorKind::Parse, "'direction' must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::Parse, "request body is not a JSON object");
  return j;
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, std::string("parameter '") + name + "' must be an integer");
  }
}

}  // namespace

struct HttpServer::Impl {
  SessionEngine& engine;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  std::mutex journal_mutex;
  std::ofstream journal;
  std::uint64_t seq = 0;

  Impl(SessionEngine& e, ServerOptions o) : engine(e), options(std::move(o)) {
    if (options.journal) {
      journal.open(*options.journal, std::ios::app | std::ios::binary);
      if (!journal) throw Error(ErrorKind::Io, "cannot open journal '" + options.journal->string() + "'");
    }
    server.set_payload_max_length(64u << 20);
    routes();
  }

  void write_journal(const httplib::Request& req, const Reply& reply) {
    if (!journal.is_open()) return;
    json line;
    std::lock_guard lock(journal_mutex);
    line["seq"] = seq++;
    line["method"] = req.method;
    line["target"] = req.target;
    line["content_type"] = req.get_header_value("Content-Type");
    line["body"] = base64_encode(req.body);
    line["session"] = reply.session;
    line["status"] = reply.status;
    line["response_sha256"] = response_hash(reply.body, reply.session);
    journal << line.dump() << '\n';
    journal.flush();
  }

  using Handler = std::function<Reply(const httplib::Request&)>;

  httplib::Server::Handler wrap(Handler fn, bool mutating) {
    return [this, fn = std::move(fn), mutating](const httplib::Request& req, httplib::Response& res) {
      try {
        Reply reply = fn(req);
        res.status = reply.status;
        res.set_content(reply.body, reply.content_type);
        if (mutating) write_journal(req, reply);
      } catch (const Error& e) {
        res.status = http_status(e.kind());
        res.set_content(error_body(to_string(e.kind()), e.what()), "application/json");
      } catch (const json::exception& e) {
        res.status = 400;
        res.set_content(error_body("parse", e.what()), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_body("internal", e.what()), "application/json");
      }
    };
  }

  void routes() {
    server.Post("/v1/sessions", wrap([this](const httplib::Request& req) {
      const json body = parse_body(req);
      SessionOptions opts;
      opts.canvas_width = body.value("canvas_width", opts.canvas_width);
      opts.canvas_height = body.value("canvas_height", opts.canvas_height);
      opts.seed = body.value("seed", opts.seed);
      const auto id = engine.create_session(opts);
      return json_reply(engine.describe(id), id);
    }, true));

    const std::string id = R"(/v1/sessions/([0-9a-f]+))";
    server.Get(id, wrap([this](const httplib::Request& req) {
      return json_reply(engine.describe(req.matches[1]), req.matches[1]);
    }, false));

    server.Post(id + "/cloud", wrap([this](const httplib::Request& req) {
      const auto format = req.has_param("format") ? cloud_format_from_name(req.get_param_value("format")) : CloudFormat::Xyz;
      return json_reply(engine.load_pointcloud(req.matches[1], req.body, format), req.matches[1]);
    }, true));

    auto view_args = [](const httplib::Request& req) {
      const Vec3 dir = req.has_param("dir") ? parse_direction(req.get_param_value("dir")) : Vec3(0, -1, 0);
      return std::tuple{dir, int_param(req, "width", 512), int_param(req, "height", 512)};
    };
    server.Get(id + "/view", wrap([this, view_args](const httplib::Request& req) {
      const auto [dir, w, h] = view_args(req);
      const auto view = engine.get_view(req.matches[1], dir, w, h);
      json points = json::array();
      for (const auto& p : view.points) points.push_back({p.x, p.y});
      json doc{{"width", view.width},
               {"height", view.height},
               {"direction", {view.direction.x(), view.direction.y(), view.direction.z()}},
               {"points", points}};
      return json_reply(doc, req.matches[1]);
    }, false));
    server.Get(id + "/view.png", wrap([this, view_args](const httplib::Request& req) {
      const auto [dir, w, h] = view_args(req);
      return Reply{200, "image/png", engine.get_view_png(req.matches[1], dir, w, h), req.matches[1]};
    }, false));

    server.Post(id + "/sketch", wrap([this](const httplib::Request& req) {
      return json_reply(engine.submit_sketch(req.matches[1], req.body, int_param(req, "topk", 10)), req.matches[1]);
    }, true));

    server.Post(id + "/align", wrap([this](const httplib::Request& req) {
      const json body = parse_body(req);
      if (!body.contains("model_id") || !body["model_id"].is_number_unsigned()) {
        throw Error(ErrorKind::Parse, "'model_id' must be a non-negative integer");
      }
      return json_reply(engine.select_and_align(req.matches[1], body["model_id"].get<std::uint32_t>()), req.matches[1]);
    }, true));

    server.Post(id + "/contour", wrap([this](const httplib::Request& req) {
      const json body = parse_body(req);
      const Vec3 dir = body.contains("direction") ? direction_from_json(body["direction"]) : Vec3(0, -1, 0);
      return Reply{200, "image/png", engine.extract_contour(req.matches[1], dir), req.matches[1]};
    }, true));

    server.Post(id + "/export", wrap([this](const httplib::Request& req) {
      const auto out = engine.export_model(req.matches[1]);
      json doc{{"id", req.matches[1]},
               {"state", to_string(SessionState::Exported)},
               {"model_id", out.model},
               {"obj", out.obj},
               {"metrics", to_json(out.metrics)}};
      return json_reply(doc, req.matches[1]);
    }, true));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        res.set_content(error_body(res.status == 404 ? "not_found" : "http", httplib::status_message(res.status)),
                        "application/json");
      }
    });
  }
};

HttpServer::HttpServer(SessionEngine& engine, ServerOptions options)
    : impl_(std::make_unique<Impl>(engine, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::vector<ReplayedCall> replay_journal(std::string_view journal_text, const std::string& host, int port) {
  httplib::Client client(host, port);
  client.set_read_timeout(600, 0);
  std::map<std::string, std::string> ids;
  std::vector<ReplayedCall> out;
  std::istringstream in{std::string(journal_text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json entry = json::parse(line, nullptr, false);
    if (entry.is_discarded()) throw Error(ErrorKind::Parse, "journal line " + std::to_string(line_no) + " is not JSON");
    const std::string recorded = entry.at("session").get<std::string>();
    std::string target = entry.at("target").get<std::string>();
    const std::string method = entry.at("method").get<std::string>();
    if (target.starts_with(kSessionPrefix)) {
      const auto rest = target.substr(std::char_traits<char>::length(kSessionPrefix));
      const auto old_id = rest.substr(0, rest.find_first_of("/?"));
      const auto it = ids.find(old_id);
      if (it == ids.end()) throw Error(ErrorKind::Parse, "journal line " + std::to_string(line_no) + " uses an unknown session");
      target = kSessionPrefix + it->second + rest.substr(old_id.size());
    }
    const std::string body = base64_decode(entry.at("body").get<std::string>());
    const std::string content_type = entry.value("content_type", std::string("application/octet-stream"));
    auto res = method == "POST" ? client.Post(target, body, content_type.empty() ? "application/octet-stream" : content_type)
                                : client.Get(target);
    if (!res) throw Error(ErrorKind::Io, "replay request failed: " + httplib::to_string(res.error()));

    ReplayedCall call{method, target, res->status, res->body, false};
    std::string session;
    if (target == "/v1/sessions" && res->status == 200) {
      session = json::parse(res->body).at("id").get<std::string>();
      ids[recorded] = session;
    } else {
      session = ids.count(recorded) ? ids[recorded] : std::string{};
    }
    call.matches_recorded = res->status == entry.at("status").get<int>() &&
                            response_hash(res->body, session) == entry.at("response_sha256").get<std::string>();
    out.push_back(std::move(call));
  }
  return out;
}

}  // namespace pcsketch
