#include "dff/service.hpp"

#include <httplib.h>

#include <cstdlib>

#include "dff/checkpoint.hpp"
#include "dff/dataset.hpp"
#include "dff/distiller.hpp"
#include "dff/errors.hpp"
#include "dff/fmap.hpp"

namespace dff {

ServiceConfig ServiceConfig::from_json(const Json& j) {
  ServiceConfig c;
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.workers = j.value("workers", c.workers);
  c.coarse_samples = j.value("coarse_samples", c.coarse_samples);
  c.fine_samples = j.value("fine_samples", c.fine_samples);
  c.preview_scale = j.value("preview_scale", c.preview_scale);
  if (c.workers < 1) throw InputError("service config: workers must be >= 1");
  if (!(c.preview_scale > 0.0 && c.preview_scale <= 1.0)) throw InputError("service config: preview_scale in (0, 1]");
  return c;
}

void ServiceConfig::apply_environment() {
  if (const char* env = std::getenv("DFF_PORT")) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      throw InputError(std::string("DFF_PORT is not a port number: ") + env);
    }
  }
}

Quality quality_from_string(const std::string& text) {
  if (text == "preview") return Quality::kPreview;
  if (text == "full") return Quality::kFull;
  throw InputError("unknown quality '" + text + "' (expected preview or full)");
}

Session::Session(ServiceConfig config) : config_(std::move(config)) {
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Session::~Session() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_ready_.notify_all();
  for (auto& t : workers_) t.join();
}

std::string Session::next_id(const char* prefix) { return prefix + std::to_string(++counter_); }

std::string Session::load_scene(const std::filesystem::path& checkpoint) { return add_scene(load_checkpoint(checkpoint)); }

std::string Session::add_scene(SceneModel model) {
  std::lock_guard lock(mutex_);
  const std::string id = next_id("scene-");
  scenes_[id] = {std::make_shared<SceneModel>(std::move(model)), false};
  return id;
}

std::shared_ptr<const SceneModel> Session::scene(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = scenes_.find(id);
  if (it == scenes_.end()) throw NotFoundError("unknown scene '" + id + "'");
  if (it->second.training) throw ConflictError("scene '" + id + "' is training");
  return it->second.model;
}

std::string Session::add_selection(const std::string& scene_id, Selection selection) {
  const auto model = scene(scene_id);
  selection.validate();
  if (selection.dim() != model->coarse.feature_dim())
    throw InputError("selection dimension does not match the scene's features");
  std::lock_guard lock(mutex_);
  const std::string id = next_id("sel-");
  selections_[id] = {scene_id, std::move(selection)};
  return id;
}

Selection Session::selection(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = selections_.find(id);
  if (it == selections_.end()) throw NotFoundError("unknown selection '" + id + "'");
  return it->second.second;
}

std::string Session::selection_scene(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = selections_.find(id);
  if (it == selections_.end()) throw NotFoundError("unknown selection '" + id + "'");
  return it->second.first;
}

std::string Session::add_edit(const std::string& selection_id, EditDescription edit, const std::string& target_scene) {
  edit.selection = selection(selection_id);
  const std::string scene_id = selection_scene(selection_id);
  edit.validate();
  if (edit.op == EditOp::kWarp) {
    if (target_scene.empty()) throw InputError("warp edits need a target_scene");
    scene(target_scene);
  }
  std::lock_guard lock(mutex_);
  const std::string id = next_id("edit-");
  edits_[id] = {scene_id, target_scene, std::move(edit)};
  return id;
}

RenderOptions Session::render_options(Quality quality, std::uint64_t seed) const {
  RenderOptions o;
  o.mode = quality == Quality::kPreview ? Pass::kCoarse : Pass::kFine;
  o.coarse_samples = config_.coarse_samples;
  o.fine_samples = config_.fine_samples;
  o.seed = seed;
  return o;
}

Camera Session::render_camera(const Camera& camera, Quality quality) const {
  if (quality == Quality::kFull) return camera;
  const double factor = std::max(config_.preview_scale, 1.0 / std::min(camera.width, camera.height));
  return camera.scaled(factor);
}

RenderedBuffers Session::render(const std::string& scene_id, const Camera& camera, Quality quality,
                                RenderChannels channels, std::uint64_t seed) const {
  const auto model = scene(scene_id);
  RenderOptions o = render_options(quality, seed);
  o.channels = channels;
  return render_view(model->view(), render_camera(camera, quality), o);
}

std::string Session::edit_scene(const std::string& edit_id) const {
  std::lock_guard lock(mutex_);
  const auto it = edits_.find(edit_id);
  if (it == edits_.end()) throw NotFoundError("unknown edit '" + edit_id + "'");
  return it->second.scene_id;
}

RenderedBuffers Session::render_edit(const std::string& edit_id, const Camera& camera, Quality quality,
                                     std::uint64_t seed) const {
  EditEntry entry;
  {
    std::lock_guard lock(mutex_);
    const auto it = edits_.find(edit_id);
    if (it == edits_.end()) throw NotFoundError("unknown edit '" + edit_id + "'");
    entry = it->second;
  }
  const auto model = scene(entry.scene_id);
  const SceneSource source(model->view());
  std::shared_ptr<const SceneModel> target_model;
  std::unique_ptr<SceneSource> target;
  if (!entry.target_scene.empty()) {
    target_model = scene(entry.target_scene);
    target = std::make_unique<SceneSource>(target_model->view());
  }
  const EditedScene edited(entry.edit, source, target.get());
  RenderOptions o = render_options(quality, seed);
  o.channels = {true, false, false};
  return dff::render_edit(edited, render_camera(camera, quality), o);
}

std::string Session::submit(std::string kind, std::function<Json()> work) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = next_id("job-");
    jobs_[id].kind = std::move(kind);
  }
  {
    std::lock_guard lock(queue_mutex_);
    queue_.emplace_back(id, std::move(work));
  }
  queue_ready_.notify_one();
  return id;
}

void Session::worker_loop() {
  for (;;) {
    std::pair<std::string, std::function<Json()>> item;
    {
      std::unique_lock lock(queue_mutex_);
      queue_ready_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
    }
    {
      std::lock_guard lock(mutex_);
      jobs_[item.first].status = "running";
    }
    Json result;
    std::string error;
    try {
      result = item.second();
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::lock_guard lock(mutex_);
      Job& job = jobs_[item.first];
      job.status = error.empty() ? "done" : "failed";
      job.error = error;
      job.result = std::move(result);
    }
    job_done_.notify_all();
  }
}

Json Session::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("unknown job '" + id + "'");
  Json j;
  j["job_id"] = id;
  j["kind"] = it->second.kind;
  j["status"] = it->second.status;
  if (!it->second.error.empty()) j["error"] = it->second.error;
  if (it->second.status == "done") j["result"] = it->second.result;
  return j;
}

Json Session::wait(const std::string& id) const {
  std::unique_lock lock(mutex_);
  job_done_.wait(lock, [&] {
    const auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.status == "done" || it->second.status == "failed";
  });
  lock.unlock();
  return job(id);
}

std::string Session::start_training(const std::string& scene_id, const std::filesystem::path& dataset,
                                    TrainConfig config, const std::filesystem::path& checkpoint_out) {
  config.validate();
  FieldConfig coarse_config, fine_config;
  {
    std::lock_guard lock(mutex_);
    const auto it = scenes_.find(scene_id);
    if (it == scenes_.end()) throw NotFoundError("unknown scene '" + scene_id + "'");
    if (it->second.training) throw ConflictError("scene '" + scene_id + "' is already training");
    it->second.training = true;
    coarse_config = it->second.model->coarse.config();
    fine_config = it->second.model->fine.config();
  }
  return submit("train", [=, this] {
    Json out;
    try {
      const TeacherDataset data = load_dataset(dataset);
      Distiller distiller(data, config, coarse_config);
      if (!(fine_config == coarse_config)) throw InputError("train: scenes with differing coarse/fine configs");
      distiller.train();
      auto model = std::make_shared<SceneModel>(distiller.snapshot());
      if (!checkpoint_out.empty()) save_checkpoint(*model, checkpoint_out);
      std::lock_guard lock(mutex_);
      scenes_[scene_id].model = std::move(model);
      scenes_[scene_id].training = false;
      out["scene_id"] = scene_id;
      out["iterations"] = distiller.iteration();
    } catch (...) {
      std::lock_guard lock(mutex_);
      scenes_[scene_id].training = false;
      throw;
    }
    return out;
  });
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  static constexpr char kTable[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kTable[(v >> 18) & 63];
    out += kTable[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kTable[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kTable[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  const auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) throw InputError("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

Image selection_overlay(const Image& features, const Selection& selection) {
  static const Vec3 kHighlight(1.0, 0.2, 0.8);
  Image out(features.height, features.width, 4);
  for (int r = 0; r < features.height; ++r)
    for (int c = 0; c < features.width; ++c) {
      const Eigen::VectorXd f =
          Eigen::Map<const Eigen::VectorXf>(features.pixel(r, c), features.channels).cast<double>();
      const double p = selection_probability(f, selection);
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = static_cast<float>(kHighlight(ch));
      out.at(r, c, 3) = static_cast<float>(p);
    }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct HttpError : std::runtime_error {
  HttpError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
  int status;
};

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    Json j = Json::parse(req.body);
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw HttpError(400, std::string("malformed JSON: ") + e.what());
  }
}

void send_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  Json j;
  j["error"] = message;
  j["status"] = status;
  send_json(res, j, status);
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const HttpError& e) {
    send_error(res, e.status, e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const InputError& e) {
    send_error(res, 400, e.what());
  } catch (const LoadError& e) {
    send_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::vector<unsigned char> fmap_bytes(const Image& image) { return encode_fmap(image); }

RenderChannels channels_from(const Json& body) {
  RenderChannels ch{false, false, false};
  const Json list = body.value("channels", Json::array({"rgb"}));
  for (const auto& c : list) {
    const std::string name = c.get<std::string>();
    if (name == "rgb")
      ch.rgb = true;
    else if (name == "feature")
      ch.feature = true;
    else if (name == "depth")
      ch.depth = true;
    else
      throw InputError("unknown channel '" + name + "' (expected rgb, feature or depth)");
  }
  return ch;
}

Json render_json(const RenderedBuffers& b) {
  Json j;
  j["width"] = b.opacity.width;
  j["height"] = b.opacity.height;
  if (b.rgb) j["png"] = base64_encode(encode_png(*b.rgb));
  if (b.feature) j["fmap"] = base64_encode(fmap_bytes(*b.feature));
  if (b.depth) j["depth_fmap"] = base64_encode(fmap_bytes(*b.depth));
  return j;
}

// Pose plus top-level width/height/fov overrides.
Camera request_camera(const Json& body, const SceneModel& scene) {
  if (!body.contains("pose")) throw InputError("request needs a pose");
  Json pose = body.at("pose");
  for (const char* key : {"width", "height", "fov_degrees"})
    if (body.contains(key) && !pose.contains(key)) pose[key] = body.at(key);
  return camera_from_pose(pose, scene.near, scene.far);
}

void send_render(httplib::Response& res, const RenderedBuffers& b, bool as_json) {
  if (as_json || !b.rgb) {
    send_json(res, render_json(b));
    return;
  }
  const auto png = encode_png(*b.rgb);
  res.set_content(std::string(png.begin(), png.end()), "image/png");
}

Image palette_image(const std::vector<int>& assignments, int height, int width) {
  static const Vec3 kColors[] = {{0.9, 0.1, 0.1}, {0.1, 0.7, 0.2}, {0.1, 0.3, 0.9}, {0.9, 0.8, 0.1},
                                 {0.7, 0.2, 0.8}, {0.1, 0.8, 0.8}, {0.9, 0.5, 0.1}, {0.5, 0.5, 0.5}};
  Image out(height, width, 3);
  for (std::size_t i = 0; i < assignments.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) out.data[i * 3 + ch] = static_cast<float>(kColors[assignments[i] % 8](ch));
  return out;
}

}  // namespace

struct HttpService::Impl {
  Session& session;
  httplib::Server server;
  int port = -1;
  std::mutex replay_mutex;
  struct Stored {
    int status;
    std::string body;
    std::string type;
  };
  std::map<std::string, Stored> replays;

  explicit Impl(Session& s) : session(s) { routes(); }

  // Mutating endpoints replay the first response for a repeated request id.
  template <typename F>
  httplib::Server::Handler idempotent(F handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      std::string key = req.get_header_value("Idempotency-Key");
      if (key.empty()) key = req.get_header_value("X-Request-Id");
      if (!key.empty()) {
        key = req.method + " " + req.path + " " + key;
        std::lock_guard lock(replay_mutex);
        const auto it = replays.find(key);
        if (it != replays.end()) {
          res.status = it->second.status;
          res.set_content(it->second.body, it->second.type);
          return;
        }
      }
      guarded(res, [&] { handler(req, res); });
      if (!key.empty() && res.status < 500) {
        std::lock_guard lock(replay_mutex);
        replays.emplace(key, Stored{res.status, res.body, res.get_header_value("Content-Type")});
      }
    };
  }

  template <typename F>
  httplib::Server::Handler plain(F handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) { guarded(res, [&] { handler(req, res); }); };
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"status", "ok"}}); });

    server.Post("/scenes", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const Json body = parse_body(req);
      if (!body.contains("checkpoint")) throw InputError("POST /scenes needs a checkpoint path");
      const std::string id = session.load_scene(body.at("checkpoint").get<std::string>());
      send_json(res, {{"scene_id", id}}, 201);
    }));

    server.Get(R"(/scenes/([^/]+)/labels)", plain([this](const httplib::Request& req, httplib::Response& res) {
      const auto scene = session.scene(req.matches[1]);
      Json j;
      j["teacher"] = scene->queries.teacher();
      j["dim"] = scene->queries.dim();
      j["labels"] = scene->queries.labels();
      send_json(res, j);
    }));

    server.Post(R"(/scenes/([^/]+)/render)", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const Json body = parse_body(req);
      const auto scene = session.scene(id);
      const Camera camera = request_camera(body, *scene);
      const Quality quality = quality_from_string(body.value("quality", std::string("preview")));
      const RenderChannels channels = channels_from(body);
      const auto seed = body.value("seed", std::uint64_t{0});
      const bool as_json = channels.feature || channels.depth || body.value("format", std::string()) == "json";
      if (quality == Quality::kPreview) {
        send_render(res, session.render(id, camera, quality, channels, seed), as_json);
        return;
      }
      const std::string job = session.submit("render", [this, id, camera, channels, seed] {
        return render_json(session.render(id, camera, Quality::kFull, channels, seed));
      });
      send_json(res, {{"job_id", job}, {"status", "queued"}}, 202);
    }));

    server.Post(R"(/scenes/([^/]+)/query)", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      handle_query(req.matches[1], parse_body(req), res);
    }));

    server.Post(R"(/scenes/([^/]+)/edits)", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const std::string scene_id = req.matches[1];
      const Json body = parse_body(req);
      session.scene(scene_id);
      const std::string selection_id = body.at("selection_id").get<std::string>();
      if (session.selection_scene(selection_id) != scene_id)
        throw NotFoundError("selection '" + selection_id + "' does not belong to scene '" + scene_id + "'");
      Json params = body.value("params", Json::object());
      EditDescription edit;
      edit.op = edit_op_from_string(body.at("op").get<std::string>());
      if (params.contains("transform")) edit.transform = Similarity::from_json(params.at("transform"));
      if (params.contains("color_map")) edit.color_map = ColorMap::from_json(params.at("color_map"));
      edit.compositor = compositor_from_string(params.value("compositor", std::string("sum")));
      const std::string id = session.add_edit(selection_id, edit, params.value("target_scene", std::string()));
      send_json(res, {{"edit_id", id}}, 201);
    }));

    server.Post(R"(/edits/([^/]+)/render)", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const std::string edit_id = req.matches[1];
      const Json body = parse_body(req);
      // The edit's scene supplies bounds for look-at poses.
      const auto scene = session.scene(session.edit_scene(edit_id));
      const Camera camera = request_camera(body, *scene);
      const Quality quality = quality_from_string(body.value("quality", std::string("preview")));
      const auto seed = body.value("seed", std::uint64_t{0});
      if (quality == Quality::kPreview) {
        send_render(res, session.render_edit(edit_id, camera, quality, seed), body.value("format", std::string()) == "json");
        return;
      }
      const std::string job = session.submit("render", [this, edit_id, camera, seed] {
        return render_json(session.render_edit(edit_id, camera, Quality::kFull, seed));
      });
      send_json(res, {{"job_id", job}, {"status", "queued"}}, 202);
    }));

    server.Post(R"(/scenes/([^/]+)/train)", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const Json body = parse_body(req);
      const auto scene = session.scene(req.matches[1]);
      const TrainConfig config = train_config_from_json(body.value("config", Json::object()), scene->train_config);
      const std::string job = session.start_training(req.matches[1], body.at("dataset").get<std::string>(), config,
                                                     body.value("checkpoint", std::string()));
      send_json(res, {{"job_id", job}, {"status", "queued"}}, 202);
    }));

    server.Get(R"(/jobs/([^/]+))", plain([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, session.job(req.matches[1]));
    }));
  }

  void handle_query(const std::string& scene_id, const Json& body, httplib::Response& res) {
    const auto scene = session.scene(scene_id);
    const std::string type = body.at("type").get<std::string>();
    const double threshold = body.value("threshold", kDefaultThreshold);
    const Quality quality = quality_from_string(body.value("quality", std::string("full")));
    const auto seed = body.value("seed", std::uint64_t{0});
    std::optional<Camera> camera;
    if (body.contains("pose")) camera = request_camera(body, *scene);
    const auto feature_map = [&] {
      if (!camera) throw InputError(type + " queries need a pose");
      return *session.render(scene_id, *camera, quality, {false, true, false}, seed).feature;
    };

    Json out;
    Selection selection;
    std::optional<Image> rendered;
    if (type == "text") {
      const std::string label = body.at("label").get<std::string>();
      if (body.value("mode", std::string("softmax")) == "threshold") {
        selection = Selection::thresholded(scene->queries.vector(label), threshold);
      } else {
        selection = Selection::softmax(scene->queries, {label},
                                       body.value("negatives", std::vector<std::string>{}));
      }
    } else if (type == "patch") {
      const Json& r = body.at("rect");
      rendered = feature_map();
      const PixelRect rect{r.at("row").get<int>(), r.at("col").get<int>(), r.at("height").get<int>(),
                           r.at("width").get<int>()};
      selection = Selection::thresholded(encode_patch_query(*rendered, rect), threshold);
    } else if (type == "point") {
      if (!camera) throw InputError("point queries need a pose");
      const Json& p = body.at("pixel");
      RenderOptions o = session.render_options(Quality::kFull, seed);
      selection = Selection::thresholded(
          encode_point_query(scene->view(), *camera, {p.at("row").get<int>(), p.at("col").get<int>()}, o), threshold);
    } else if (type == "cluster") {
      rendered = feature_map();
      const int k = body.value("k", 4);
      const KMeansResult km = kmeans_features(*rendered, k, body.value("seed", std::uint64_t{0}));
      const int cluster = body.value("cluster", 0);
      if (cluster < 0 || cluster >= k) throw InputError("cluster index out of range");
      selection = Selection::thresholded(km.centroids.col(cluster), threshold);
      out["clusters"] = base64_encode(encode_png(palette_image(km.assignments, rendered->height, rendered->width)));
      out["k"] = k;
    } else {
      throw InputError("unknown query type '" + type + "' (expected text, patch, point or cluster)");
    }

    out["selection_id"] = session.add_selection(scene_id, selection);
    out["mode"] = to_string(selection.mode);
    if (camera) {
      if (!rendered) rendered = feature_map();
      out["overlay"] = base64_encode(encode_png(selection_overlay(*rendered, selection)));
    }
    send_json(res, out, 201);
  }
};

HttpService::HttpService(Session& session) : impl_(std::make_unique<Impl>(session)) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  const auto& config = impl_->session.config();
  if (config.port == 0)
    impl_->port = impl_->server.bind_to_any_port(config.host);
  else
    impl_->port = impl_->server.bind_to_port(config.host, config.port) ? config.port : -1;
  if (impl_->port < 0)
    throw InputError("cannot bind " + config.host + ":" + std::to_string(config.port));
  return impl_->port;
}

void HttpService::listen() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void HttpService::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace dff
