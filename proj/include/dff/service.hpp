#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dff/editor.hpp"
#include "dff/json_io.hpp"
#include "dff/query.hpp"
#include "dff/renderer.hpp"
#include "dff/scene.hpp"
#include "dff/train_config.hpp"

namespace dff {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 2;
  int coarse_samples = 32;
  int fine_samples = 64;
  // Preview renders the coarse pass at this fraction of the requested size.
  double preview_scale = 0.25;

  static ServiceConfig from_json(const Json& j);
  // Port from DFF_PORT when set.
  void apply_environment();
};

enum class Quality { kPreview, kFull };
Quality quality_from_string(const std::string& text);

// Loaded scenes, named selections and edits, and background jobs.
class Session {
 public:
  explicit Session(ServiceConfig config = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const ServiceConfig& config() const { return config_; }

  std::string load_scene(const std::filesystem::path& checkpoint);
  std::string add_scene(SceneModel model);
  // Throws NotFoundError, or ConflictError while the scene trains.
  std::shared_ptr<const SceneModel> scene(const std::string& id) const;

  std::string add_selection(const std::string& scene_id, Selection selection);
  Selection selection(const std::string& id) const;
  std::string selection_scene(const std::string& id) const;

  std::string edit_scene(const std::string& edit_id) const;
  // `target_scene` is required for warps.
  std::string add_edit(const std::string& selection_id, EditDescription edit, const std::string& target_scene = "");

  RenderOptions render_options(Quality quality, std::uint64_t seed) const;
  Camera render_camera(const Camera& camera, Quality quality) const;
  RenderedBuffers render(const std::string& scene_id, const Camera& camera, Quality quality, RenderChannels channels,
                         std::uint64_t seed = 0) const;
  RenderedBuffers render_edit(const std::string& edit_id, const Camera& camera, Quality quality,
                              std::uint64_t seed = 0) const;

  // Runs `work` on the worker pool; its JSON becomes the job result.
  std::string submit(std::string kind, std::function<Json()> work);
  Json job(const std::string& id) const;
  // Blocks until the job leaves the queue; for tests and the CLI.
  Json wait(const std::string& id) const;

  // Retrains the scene's fields on a dataset; the scene answers 409 meanwhile.
  std::string start_training(const std::string& scene_id, const std::filesystem::path& dataset, TrainConfig config,
                             const std::filesystem::path& checkpoint_out = {});

 private:
  struct SceneEntry {
    std::shared_ptr<SceneModel> model;
    bool training = false;
  };
  struct EditEntry {
    std::string scene_id;
    std::string target_scene;
    EditDescription edit;
  };
  struct Job {
    std::string kind;
    std::string status = "queued";
    std::string error;
    Json result;
  };

  std::string next_id(const char* prefix);
  void worker_loop();

  ServiceConfig config_;
  mutable std::mutex mutex_;
  mutable std::condition_variable job_done_;
  std::map<std::string, SceneEntry> scenes_;
  std::map<std::string, std::pair<std::string, Selection>> selections_;
  std::map<std::string, EditEntry> edits_;
  std::map<std::string, Job> jobs_;
  long counter_ = 0;

  std::mutex queue_mutex_;
  std::condition_variable queue_ready_;
  std::deque<std::pair<std::string, std::function<Json()>>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

// Probability of the selection at each pixel of a rendered feature map, as
// alpha over a solid highlight color.
Image selection_overlay(const Image& features, const Selection& selection);

// JSON-over-HTTP front end for a Session.
class HttpService {
 public:
  explicit HttpService(Session& session);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Binds to the configured host and port; port 0 picks a free one. Returns
  // the bound port.
  int bind();
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dff
