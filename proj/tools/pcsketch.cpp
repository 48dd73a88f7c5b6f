#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pcsketch/contour.hpp"
#include "pcsketch/dataset.hpp"
#include "pcsketch/error.hpp"
#include "pcsketch/geometry_io.hpp"
#include "pcsketch/icp.hpp"
#include "pcsketch/render.hpp"
#include "pcsketch/server.hpp"
#include "pcsketch/session.hpp"

using nlohmann::json;
using namespace pcsketch;
namespace fs = std::filesystem;

namespace {

int fail(std::string_view kind, std::string_view message, int code = 1) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

Vec3 parse_vec3(const std::string& text) {
  std::istringstream in(text);
  double x, y, z;
  char a = 0, b = 0;
  if (!(in >> x >> a >> y >> b >> z) || a != ',' || b != ',' || !(in >> std::ws).eof()) {
    throw Error(ErrorKind::Parse, "expected 'x,y,z', got '" + text + "'");
  }
  return {x, y, z};
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcsketch: sketch-driven retrieval and alignment of meshes to sparse point clouds"};
  app.require_subcommand(1);

  // build-dataset
  auto* ds = app.add_subcommand("build-dataset", "render contour images and a manifest for every OFF mesh");
  std::string ds_models, ds_out = "dataset";
  PipelineParams pp;
  ds->add_option("model_dir", ds_models, "directory tree of OFF meshes")->required();
  ds->add_option("--out", ds_out, "output directory")->capture_default_str();
  ds->add_option("--views", pp.n_views, "viewpoints per model")->capture_default_str();
  ds->add_option("--canvas", pp.canvas, "image size in pixels")->capture_default_str();
  ds->add_option("--margin", pp.margin, "fit margin fraction")->capture_default_str();
  ds->add_option("--threshold", pp.contour.threshold, "binarization threshold")->capture_default_str();
  ds->add_option("--median", pp.contour.median_kernel, "median kernel size")->capture_default_str();
  ds->add_option("--stroke", pp.contour.stroke, "contour stroke width")->capture_default_str();

  // build-index
  auto* bi = app.add_subcommand("build-index", "train the vocabulary and build the search index");
  std::string bi_manifest, bi_out;
  RetrievalParams rp;
  bi->add_option("manifest", bi_manifest, "manifest.tsv from build-dataset")->required();
  bi->add_option("--out", bi_out, "index file (default: index.bin beside the manifest)");
  bi->add_option("--k", rp.vocab_k, "vocabulary size")->capture_default_str();
  bi->add_option("--seed", rp.vocab_seed, "vocabulary seed")->capture_default_str();
  bi->add_option("--keypoints", rp.keypoints, "keypoints per image")->capture_default_str();
  bi->add_option("--sample-seed", rp.sample_seed, "keypoint sampling seed")->capture_default_str();
  bi->add_option("--iters", rp.kmeans_iters, "k-means iterations")->capture_default_str();
  bi->add_option("--max-training", rp.max_training, "descriptors used for training")->capture_default_str();

  // query
  auto* qu = app.add_subcommand("query", "rank indexed models against a sketch");
  std::string qu_index, qu_sketch, qu_manifest;
  int qu_topk = 10;
  qu->add_option("--index", qu_index, "index file")->required();
  qu->add_option("--sketch", qu_sketch, "sketch PNG (dark ink on light)")->required();
  qu->add_option("--topk", qu_topk, "number of models")->capture_default_str();
  qu->add_option("--manifest", qu_manifest, "fail if this manifest no longer matches the index");

  // align
  auto* al = app.add_subcommand("align", "ICP-align a mesh to a point cloud");
  std::string al_cloud, al_model, al_obj;
  IcpParams ip;
  al->add_option("--cloud", al_cloud, "xyz or ply point cloud")->required();
  al->add_option("--model", al_model, "OFF or OBJ mesh")->required();
  al->add_option("--seed", ip.seed, "control-point seed")->capture_default_str();
  al->add_option("--controls", ip.n_control, "control points")->capture_default_str();
  al->add_option("--max-iters", ip.max_iters, "iteration cap")->capture_default_str();
  al->add_option("--tol", ip.tol, "convergence tolerance")->capture_default_str();
  al->add_option("--out-obj", al_obj, "write the aligned, normalized mesh here");

  // render
  auto* re = app.add_subcommand("render", "render a mesh silhouette or contour to PNG");
  std::string re_model, re_dir = "0,-1,0", re_out;
  int re_size = 512;
  bool re_contour = false;
  re->add_option("--model", re_model, "OFF or OBJ mesh")->required();
  re->add_option("--dir", re_dir, "view direction x,y,z")->capture_default_str();
  re->add_option("--size", re_size, "image size in pixels")->capture_default_str();
  re->add_option("--out", re_out, "output PNG")->required();
  re->add_flag("--contour", re_contour, "extract the contour sketch instead of the filled silhouette");

  // sample-cloud
  auto* sc = app.add_subcommand("sample-cloud", "sample a sparse point cloud from a mesh surface");
  std::string sc_model, sc_out, sc_format = "xyz";
  int sc_points = 300;
  std::uint64_t sc_seed = 0;
  sc->add_option("--model", sc_model, "OFF or OBJ mesh")->required();
  sc->add_option("--points", sc_points, "number of points")->capture_default_str();
  sc->add_option("--seed", sc_seed, "sampling seed")->capture_default_str();
  sc->add_option("--out", sc_out, "output file (default stdout)");

  // serve
  auto* sv = app.add_subcommand("serve", "run the /v1 HTTP session service");
  std::string sv_index, sv_host = "127.0.0.1";
  int sv_port = 8080;
  sv->add_option("--index", sv_index, "index file")->required();
  sv->add_option("--port", sv_port, "TCP port")->capture_default_str();
  sv->add_option("--host", sv_host, "bind address")->capture_default_str();

  // replay
  auto* rp_cmd = app.add_subcommand("replay", "re-issue a session journal against a running server");
  std::string rp_journal, rp_host = "127.0.0.1";
  int rp_port = 8080;
  rp_cmd->add_option("--journal", rp_journal, "journal.jsonl")->required();
  rp_cmd->add_option("--host", rp_host, "server address")->capture_default_str();
  rp_cmd->add_option("--port", rp_port, "server port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*ds) {
      const auto m = build_contour_dataset(ds_models, ds_out, pp);
      std::cout << json{{"manifest", (fs::path(ds_out) / kManifestFileName).string()},
                        {"models", m.model_count()},
                        {"images", m.entries.size()},
                        {"rejects", m.rejects.size()}}
                       .dump()
                << '\n';
    } else if (*bi) {
      const auto index = build_search_index(bi_manifest, rp);
      const fs::path out = bi_out.empty() ? fs::path(bi_manifest).parent_path() / "index.bin" : fs::path(bi_out);
      save_index(index, out);
      std::cout << json{{"index", out.string()},
                        {"images", index.index.image_count()},
                        {"models", index.index.model_count()},
                        {"vocab_k", index.vocabulary.k}}
                       .dump()
                << '\n';
    } else if (*qu) {
      const auto index = load_index(qu_index);
      if (!qu_manifest.empty()) check_manifest(index, qu_manifest);
      const auto sketch = sketch_from_png(read_text_file(qu_sketch));
      json hits = json::array();
      for (const auto& h : query(index, sketch, qu_topk)) {
        const auto& m = index.index.models()[h.model];
        hits.push_back({{"model_id", h.model}, {"name", m.name}, {"category", m.category},
                        {"best_view", h.best_view}, {"similarity", h.similarity}});
      }
      std::cout << json{{"hits", hits}}.dump() << '\n';
    } else if (*al) {
      const auto cloud = normalize_cloud(load_pointcloud(al_cloud));
      const auto mesh = normalize_mesh(load_mesh(al_model));
      const auto result = icp(icp_model_points(mesh, ip.seed), cloud, ip);
      if (!al_obj.empty()) {
        TriangleMesh aligned = mesh;
        for (auto& v : aligned.vertices) v = result.apply(v);
        write_text_file(al_obj, write_mesh_obj(aligned));
      }
      std::cout << serialize(result);
    } else if (*re) {
      const auto mesh = normalize_mesh(load_mesh(re_model));
      const Vec3 d = parse_vec3(re_dir);
      if (d.norm() < 1e-12) throw Error(ErrorKind::Validation, "view direction must be non-zero");
      const Viewpoint v{d.normalized(), 0};
      const auto silhouette = render_silhouette(mesh, v, re_size, re_size);
      if (re_contour) {
        write_png(re_out, extract_model_contour(silhouette, re_size, re_size));
      } else {
        write_png(re_out, silhouette);
      }
    } else if (*sc) {
      if (sc_points < 1) throw Error(ErrorKind::Validation, "--points must be >= 1");
      const auto mesh = normalize_mesh(load_mesh(sc_model));
      emit(write_pointcloud_xyz(PointCloud{sample_surface(mesh, static_cast<std::size_t>(sc_points), sc_seed)}), sc_out);
    } else if (*sv) {
      auto index = std::make_shared<const SketchIndex>(load_index(sv_index));
      SessionEngine engine(index);
      HttpServer server(engine, ServerOptions{journal_path_from_env()});
      const int port = server.bind(sv_host, sv_port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << json{{"listening", sv_host + ":" + std::to_string(port)}}.dump() << std::endl;
      server.run();
      g_server = nullptr;
    } else if (*rp_cmd) {
      const auto calls = replay_journal(read_text_file(rp_journal), rp_host, rp_port);
      std::size_t mismatched = 0;
      for (const auto& c : calls) mismatched += c.matches_recorded ? 0 : 1;
      std::cout << json{{"calls", calls.size()}, {"mismatched", mismatched}}.dump() << '\n';
      if (mismatched > 0) return fail("replay_mismatch", std::to_string(mismatched) + " replayed calls differ from the journal");
    }
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
