#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <future>

#include "dff/checkpoint.hpp"
#include "dff/dataset.hpp"
#include "dff/fmap.hpp"
#include "dff/service.hpp"
#include "dff/synthetic.hpp"
#include "support.hpp"

// After Eigen: resolv.h, pulled in here, defines _res.
#include <httplib.h>

using namespace dff;
namespace fs = std::filesystem;

namespace {

SceneModel tiny_scene() {
  FieldConfig c = testing::tiny_config();
  c.feature_dim = 4;
  SceneModel m(c, c, 2);
  m.queries = QueryEmbeddingTable("synthetic", 4);
  m.queries.add("thing", Eigen::Vector4d(1, 0, 0, 0));
  m.queries.add("other", Eigen::Vector4d(0, 1, 0, 0));
  m.train_config.coarse_samples = 4;
  m.train_config.fine_samples = 4;
  return m;
}

ServiceConfig small_config(int workers = 1) {
  ServiceConfig c;
  c.port = 0;
  c.workers = workers;
  c.coarse_samples = 4;
  c.fine_samples = 4;
  return c;
}

Json pose(int size = 8) {
  return {{"eye", {0, -4, 0}}, {"target", {0, 0, 0}}, {"up", {0, 0, 1}}, {"width", size}, {"height", size}};
}

// Server on a free port, torn down with the fixture.
struct Server {
  Session session;
  HttpService http;
  int port;
  std::thread thread;

  explicit Server(ServiceConfig config = small_config()) : session(config), http(session), port(http.bind()) {
    thread = std::thread([this] { http.listen(); });
  }
  ~Server() {
    http.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

Json post(httplib::Client& c, const std::string& path, const Json& body, int expect,
          const httplib::Headers& headers = {}) {
  const auto res = c.Post(path, headers, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return res->get_header_value("Content-Type") == "application/json" ? Json::parse(res->body) : Json();
}

}  // namespace

TEST_CASE("base64 round trip") {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 31u}) {
    std::vector<unsigned char> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<unsigned char>(i * 37 + 5);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode({'M'}) == "TQ==");
}

TEST_CASE("selection overlay uses the selection probability as alpha") {
  Image f(1, 2, 2);
  f.data = {1, 0, 0, 1};
  const Image o = selection_overlay(f, Selection::thresholded(Eigen::Vector2d(1, 0), 0.5));
  REQUIRE(o.channels == 4);
  CHECK(o.at(0, 0, 3) == 1.0f);
  CHECK(o.at(0, 1, 3) == 0.0f);
}

TEST_CASE("session bookkeeping") {
  Session s(small_config());
  const std::string id = s.add_scene(tiny_scene());
  CHECK(s.scene(id)->queries.size() == 2);
  CHECK_THROWS_AS(s.scene("scene-99"), NotFoundError);
  CHECK_THROWS_AS(s.add_selection(id, Selection::thresholded(Eigen::Vector2d(1, 0))), InputError);
  const std::string sel = s.add_selection(id, Selection::softmax(s.scene(id)->queries, {"thing"}));
  CHECK(s.selection_scene(sel) == id);
  EditDescription e;
  e.op = EditOp::kWarp;
  CHECK_THROWS_AS(s.add_edit(sel, e), InputError);
  e.op = EditOp::kDelete;
  const std::string edit = s.add_edit(sel, e);
  CHECK(s.edit_scene(edit) == id);
  CHECK_THROWS_AS(s.selection("sel-404"), NotFoundError);

  // Preview renders a coarse, quarter-size image.
  const Camera cam = camera_from_pose(pose(16), 2, 6);
  const auto preview = s.render(id, cam, Quality::kPreview, {true, false, false});
  CHECK(preview.rgb->width == 4);
  const auto full = s.render(id, cam, Quality::kFull, {true, true, true});
  CHECK(full.rgb->width == 16);
  CHECK(full.feature->channels == 4);
  const auto edited = s.render_edit(edit, cam, Quality::kFull);
  CHECK(edited.rgb->height == 16);
}

TEST_CASE("jobs report results and failures") {
  Session s(small_config(2));
  const std::string ok = s.submit("test", [] { return Json{{"answer", 42}}; });
  const std::string bad = s.submit("test", []() -> Json { throw InputError("boom"); });
  const Json a = s.wait(ok), b = s.wait(bad);
  CHECK(a["status"] == "done");
  CHECK(a["result"]["answer"] == 42);
  CHECK(b["status"] == "failed");
  CHECK(b["error"].get<std::string>().find("boom") != std::string::npos);
  CHECK_THROWS_AS(s.job("job-404"), NotFoundError);
}

TEST_CASE("HTTP: health, labels, renders and error codes") {
  Server server;
  const std::string id = server.session.add_scene(tiny_scene());
  auto c = server.client();

  auto res = c.Get("/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);

  res = c.Get("/scenes/" + id + "/labels");
  REQUIRE(res);
  const Json labels = Json::parse(res->body);
  CHECK(labels["dim"] == 4);
  CHECK(labels["labels"] == Json::array({"thing", "other"}));
  CHECK(c.Get("/scenes/nope/labels")->status == 404);

  res = c.Post("/scenes/" + id + "/render", Json{{"pose", pose(16)}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(res->body.substr(1, 3) == "PNG");

  const Json j = post(c, "/scenes/" + id + "/render",
                      {{"pose", pose(8)}, {"channels", {"rgb", "feature", "depth"}}, {"quality", "full"}}, 202);
  const Json done = server.session.wait(j["job_id"].get<std::string>());
  REQUIRE(done["status"] == "done");
  const auto fmap = base64_decode(done["result"]["fmap"].get<std::string>());
  const Image features = decode_fmap(fmap);
  CHECK(features.channels == 4);
  CHECK(features.width == 8);
  res = c.Get("/jobs/" + j["job_id"].get<std::string>());
  CHECK(Json::parse(res->body)["status"] == "done");
  CHECK(c.Get("/jobs/job-404")->status == 404);

  res = c.Post("/scenes/" + id + "/render", "{not json", "application/json");
  CHECK(res->status == 400);
  CHECK(Json::parse(res->body).contains("error"));
  post(c, "/scenes/" + id + "/render", {{"pose", pose()}, {"channels", {"normals"}}}, 400);
  post(c, "/scenes/" + id + "/query", {{"type", "text"}, {"label", "unicorn"}}, 400);
  post(c, "/scenes/" + id + "/query", {{"type", "smell"}}, 400);
  post(c, "/scenes/" + id + "/edits", {{"selection_id", "sel-404"}, {"op", "delete"}}, 404);
  post(c, "/scenes", {{"checkpoint", "/nonexistent/model.dffc"}}, 400);
}

TEST_CASE("HTTP: query, edit and render an edit") {
  Server server;
  const std::string id = server.session.add_scene(tiny_scene());
  auto c = server.client();
  const Json q = post(c, "/scenes/" + id + "/query", {{"type", "text"}, {"label", "thing"}, {"pose", pose()}}, 201);
  CHECK(q["mode"] == "softmax");
  const Image overlay = [&] {
    const auto png = base64_decode(q["overlay"].get<std::string>());
    const fs::path p = fs::temp_directory_path() / ("dff_overlay_" + std::to_string(::getpid()) + ".png");
    std::FILE* f = std::fopen(p.c_str(), "wb");
    std::fwrite(png.data(), 1, png.size(), f);
    std::fclose(f);
    Image img = read_png(p);
    fs::remove(p);
    return img;
  }();
  CHECK(overlay.channels == 4);
  CHECK(overlay.width == 8);

  const Json k = post(c, "/scenes/" + id + "/query",
                      {{"type", "cluster"}, {"k", 2}, {"cluster", 1}, {"pose", pose()}}, 201);
  CHECK(k["mode"] == "threshold");
  CHECK(k.contains("clusters"));

  const Json e = post(c, "/scenes/" + id + "/edits",
                      {{"selection_id", q["selection_id"]},
                       {"op", "transform"},
                       {"params", {{"transform", {{"translation", {0.1, 0, 0}}}}}}},
                      201);
  const auto res = c.Post("/edits/" + e["edit_id"].get<std::string>() + "/render", Json{{"pose", pose(16)}}.dump(),
                          "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  post(c, "/scenes/" + id + "/edits",
       {{"selection_id", q["selection_id"]}, {"op", "transform"}, {"params", {{"transform", {{"scale", -2}}}}}}, 400);
}

TEST_CASE("HTTP: repeated request ids replay the first response") {
  Server server;
  const std::string id = server.session.add_scene(tiny_scene());
  auto c = server.client();
  const httplib::Headers key{{"Idempotency-Key", "abc"}};
  const Json body{{"type", "text"}, {"label", "thing"}};
  const Json a = post(c, "/scenes/" + id + "/query", body, 201, key);
  const Json b = post(c, "/scenes/" + id + "/query", body, 201, key);
  const Json fresh = post(c, "/scenes/" + id + "/query", body, 201);
  CHECK(a["selection_id"] == b["selection_id"]);
  CHECK(fresh["selection_id"] != a["selection_id"]);
}

TEST_CASE("HTTP: a training scene answers 409 until the job ends") {
  SyntheticSpec spec = SyntheticSpec::desk();
  spec.width = spec.height = 12;
  spec.n_views = 3;
  spec.n_holdout = 1;
  spec.feature_dim = 4;
  spec.gt_points = 50;
  const fs::path dir = fs::temp_directory_path() / ("dff_train_" + std::to_string(::getpid()));
  save_dataset(generate_synthetic(spec), dir);

  Server server(small_config(1));
  const std::string id = server.session.add_scene(tiny_scene());
  auto c = server.client();
  // Keep the only worker busy so training stays queued while we probe.
  std::promise<void> release;
  std::shared_future<void> gate = release.get_future().share();
  server.session.submit("hold", [gate] {
    gate.wait();
    return Json::object();
  });
  const Json config{{"phase1_iters", 3}, {"phase2_iters", 2}, {"rays_per_batch", 8}, {"coarse_samples", 4},
                    {"fine_samples", 4}};
  const fs::path out = dir / "trained.dffc";
  const Json job = post(c, "/scenes/" + id + "/train",
                        {{"dataset", dir.string()}, {"config", config}, {"checkpoint", out.string()}}, 202);
  CHECK(c.Get("/scenes/" + id + "/labels")->status == 409);
  post(c, "/scenes/" + id + "/render", {{"pose", pose()}}, 409);
  post(c, "/scenes/" + id + "/train", {{"dataset", dir.string()}}, 409);
  release.set_value();
  const Json done = server.session.wait(job["job_id"].get<std::string>());
  CHECK(done["status"] == "done");
  CHECK(done["result"]["iterations"] == 5);
  CHECK(c.Get("/scenes/" + id + "/labels")->status == 200);
  CHECK(fs::exists(out));
  const Json loaded = post(c, "/scenes", {{"checkpoint", out.string()}}, 201);
  CHECK(server.session.scene(loaded["scene_id"].get<std::string>())->iteration == 5);
  fs::remove_all(dir);
}
