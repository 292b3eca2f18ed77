// Command-line front end: dataset generation, training, rendering, editing,
// evaluation and the HTTP service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "dff/checkpoint.hpp"
#include "dff/dataset.hpp"
#include "dff/distiller.hpp"
#include "dff/editor.hpp"
#include "dff/errors.hpp"
#include "dff/evaluator.hpp"
#include "dff/fmap.hpp"
#include "dff/report.hpp"
#include "dff/service.hpp"
#include "dff/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dff;

namespace {

// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  std::string config;
  Json defaults = Json::object();

  // Section of the --config file for one command, or {}.
  Json section(const std::string& name) const {
    return defaults.contains(name) ? defaults.at(name) : Json::object();
  }
};

fs::path checkpoint_path(const fs::path& given) {
  return fs::is_directory(given) ? given / "model.dffc" : given;
}

std::vector<Json> read_poses(const fs::path& path) {
  const Json j = read_json_file(path);
  const Json& list = j.is_object() && j.contains("poses") ? j.at("poses") : j;
  if (!list.is_array() || list.empty()) throw InputError(path.string() + ": expected a non-empty array of poses");
  return {list.begin(), list.end()};
}

// A stored Selection, or {"labels": [...], "negatives"?: [...]} resolved
// against the scene's label table.
Selection resolve_selection(const Json& j, const QueryEmbeddingTable& table) {
  if (j.contains("mode")) return Selection::from_json(j);
  if (j.contains("labels"))
    return Selection::softmax(table, j.at("labels").get<std::vector<std::string>>(),
                              j.value("negatives", std::vector<std::string>{}));
  throw InputError("selection needs either a stored selection or a \"labels\" list");
}

void write_buffers(const RenderedBuffers& b, const fs::path& dir, std::size_t index) {
  char stem[32];
  std::snprintf(stem, sizeof stem, "%04zu", index);
  if (b.rgb) write_png(dir / (std::string(stem) + ".png"), *b.rgb);
  if (b.feature) write_fmap(dir / (std::string(stem) + ".feature.fmap"), *b.feature);
  if (b.depth) write_fmap(dir / (std::string(stem) + ".depth.fmap"), *b.depth);
}

void print_json(const Json& j, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << "\n";
  else
    write_json_file(out, j);
}

void add_sampling(CLI::App* cmd, RenderOptions& o) {
  cmd->add_option("--coarse-samples", o.coarse_samples, "Coarse samples per ray");
  cmd->add_option("--fine-samples", o.fine_samples, "Fine samples per ray");
}

int gen_synthetic(const Common& common, const std::string& spec_path, const std::string& out) {
  SyntheticSpec spec = spec_path.empty() ? SyntheticSpec::desk() : SyntheticSpec::from_json(read_json_file(spec_path));
  if (!common.section("gen-synthetic").empty()) spec = SyntheticSpec::from_json(common.section("gen-synthetic"));
  spec.seed = common.seed;
  save_dataset(generate_synthetic(spec), out);
  std::cout << Json{{"dataset", out}, {"views", spec.n_views}}.dump() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, field_scale = "desk";
  int phase1 = -1, phase2 = -1, rays = -1, coarse = -1, fine = -1, log_every = -1;
  double lambda = -1.0;
  std::string feature_pass;
  bool freeze = false, quiet = false;
};

int train_command(const Common& common, const TrainArgs& a) {
  const TeacherDataset dataset = load_dataset(a.data);
  const Json section = common.section("train");
  TrainConfig config = train_config_from_json(section.value("train", section), TrainConfig{});
  config.seed = common.seed;
  if (a.phase1 >= 0) config.phase1_iters = a.phase1;
  if (a.phase2 >= 0) config.phase2_iters = a.phase2;
  if (a.rays > 0) config.rays_per_batch = a.rays;
  if (a.coarse > 0) config.coarse_samples = a.coarse;
  if (a.fine > 0) config.fine_samples = a.fine;
  if (a.log_every >= 0) config.log_every = a.log_every;
  if (a.lambda >= 0.0) config.lambda_f = a.lambda;
  if (!a.feature_pass.empty()) config.feature_sampling = pass_from_string(a.feature_pass);
  if (a.freeze) config.freeze_radiance = true;

  const std::string scale = section.value("field_scale", a.field_scale);
  FieldConfig field;
  if (scale == "desk")
    field = FieldConfig::desk_scale(dataset.feature_dim);
  else if (scale == "large")
    field = FieldConfig::large_scale(dataset.feature_dim);
  else
    throw InputError("unknown field scale '" + scale + "' (expected desk or large)");
  if (section.contains("field")) field = field_config_from_json(section.at("field"), field);

  TrainHooks hooks;
  if (!a.quiet)
    hooks.on_log = [](const TrainTelemetry& t) {
      std::cerr << Json{{"phase", t.phase},
                        {"iteration", t.iteration},
                        {"lr", t.lr},
                        {"loss", t.loss.total},
                        {"photometric_coarse", t.loss.photometric_coarse},
                        {"photometric_fine", t.loss.photometric_fine},
                        {"feature", t.loss.feature}}
                       .dump()
                << "\n";
    };
  fs::path out = a.out;
  if (out.extension() != ".dffc") {
    fs::create_directories(out);
    out /= "model.dffc";
  }
  hooks.on_checkpoint = [&](const SceneModel& m) { save_checkpoint(m, out); };
  const SceneModel model = train(dataset, config, field, hooks);
  save_checkpoint(model, out);
  std::cout << Json{{"checkpoint", out.string()}, {"iterations", model.iteration}}.dump() << "\n";
  return 0;
}

int render_command(const Common& common, const std::string& checkpoint, const std::string& pose_file,
                   const std::string& out, RenderOptions o, const std::vector<std::string>& channels) {
  const SceneModel scene = load_checkpoint(checkpoint_path(checkpoint));
  o.seed = common.seed;
  o.channels = {false, false, false};
  for (const auto& c : channels) {
    if (c == "rgb")
      o.channels.rgb = true;
    else if (c == "feature")
      o.channels.feature = true;
    else if (c == "depth")
      o.channels.depth = true;
    else
      throw InputError("unknown channel '" + c + "' (expected rgb, feature or depth)");
  }
  fs::create_directories(out);
  const auto poses = read_poses(pose_file);
  for (std::size_t i = 0; i < poses.size(); ++i)
    write_buffers(render_view(scene.view(), camera_from_pose(poses[i], scene.near, scene.far), o), out, i);
  std::cout << Json{{"rendered", poses.size()}, {"out", out}}.dump() << "\n";
  return 0;
}

int edit_command(const Common& common, const std::string& checkpoint, const std::string& edit_file,
                 const std::string& target, const std::string& pose_file, const std::string& out, RenderOptions o) {
  const SceneModel scene = load_checkpoint(checkpoint_path(checkpoint));
  std::optional<SceneModel> target_scene;
  if (!target.empty()) target_scene.emplace(load_checkpoint(checkpoint_path(target)));
  Json j = read_json_file(edit_file);
  const QueryEmbeddingTable& table = target_scene && j.value("op", "") == "warp" ? target_scene->queries : scene.queries;
  j["selection"] = resolve_selection(j.at("selection"), table).to_json();
  const EditDescription edit = EditDescription::from_json(j);
  if (edit.op == EditOp::kWarp && !target_scene) throw InputError("warp edits need --target");

  const SceneSource source(scene.view());
  std::optional<SceneSource> target_source;
  if (target_scene) target_source.emplace(target_scene->view());
  const EditedScene edited(edit, source, target_source ? &*target_source : nullptr);
  o.seed = common.seed;
  o.channels = {true, false, false};
  fs::create_directories(out);
  const auto poses = read_poses(pose_file);
  for (std::size_t i = 0; i < poses.size(); ++i)
    write_buffers(render_edit(edited, camera_from_pose(poses[i], scene.near, scene.far), o), out, i);
  std::cout << Json{{"rendered", poses.size()}, {"out", out}}.dump() << "\n";
  return 0;
}

int segment_command(const std::string& checkpoint, const std::string& data, std::vector<std::string> labels,
                    bool top2, const std::string& out) {
  const SceneModel scene = load_checkpoint(checkpoint_path(checkpoint));
  const TeacherDataset dataset = load_dataset(data);
  if (!dataset.gt_points) throw InputError(data + ": dataset has no labeled point cloud");
  std::vector<int> truth = dataset.gt_points->labels;
  if (labels.empty()) {
    labels = dataset.gt_labels;
  } else {
    // Ground truth indexes gt_labels; remap onto the requested label set.
    for (int& t : truth) {
      const auto it = std::find(labels.begin(), labels.end(), dataset.gt_labels.at(t));
      if (it == labels.end()) throw InputError("label '" + dataset.gt_labels.at(t) + "' occurs in ground truth but not in --labels");
      t = static_cast<int>(it - labels.begin());
    }
  }
  const PointSegmentation seg =
      segment_point_cloud(scene.feature_field(), dataset.gt_points->points, truth, labels, scene.queries, top2);
  Json j = seg.top1.to_json();
  if (seg.top2) j["top2"] = seg.top2->to_json();
  print_json(j, out);
  return 0;
}

int eval_command(const std::string& checkpoint, const std::string& data, RenderOptions o, bool top2,
                 const std::string& out) {
  const SceneModel scene = load_checkpoint(checkpoint_path(checkpoint));
  const TeacherDataset dataset = load_dataset(data);
  print_json(evaluate_scene(scene, dataset, o, top2).to_json(), out);
  return 0;
}

int pca_command(const std::string& features, const std::string& reference, const std::string& out) {
  const Image map = read_fmap(features);
  const Image ref = reference.empty() ? map : read_fmap(reference);
  write_png(out, pca_visualize(map, ref));
  return 0;
}

HttpService* g_service = nullptr;

int serve_command(const Common& common, const std::string& host, int port, int workers,
                  const std::vector<std::string>& preload) {
  ServiceConfig config = ServiceConfig::from_json(common.section("serve"));
  config.apply_environment();
  if (!host.empty()) config.host = host;
  if (port >= 0) config.port = port;
  if (workers > 0) config.workers = workers;
  Session session(config);
  for (const auto& p : preload)
    std::cout << Json{{"scene_id", session.load_scene(checkpoint_path(p))}, {"checkpoint", p}}.dump() << "\n";
  HttpService service(session);
  const int bound = service.bind();
  std::cout << Json{{"listening", config.host}, {"port", bound}}.dump() << std::endl;
  g_service = &service;
  std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
  std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
  service.listen();
  g_service = nullptr;
  return 0;
}

// One JSON object per failure on stderr: {"error": kind, "message": text}.
int fail(const char* kind, const std::string& message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distilled feature fields: train, render, query and edit"};
  app.require_subcommand(1);
  Common common;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", common.seed, "Random seed");
    cmd->add_option("--config", common.config, "JSON file of defaults, keyed by command name")->check(CLI::ExistingFile);
  };

  std::string spec_path, out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic teacher dataset");
  gen->add_option("--spec", spec_path, "Scene spec JSON (default: the desk scene)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output dataset directory")->required();
  add_common(gen);

  TrainArgs targs;
  auto* tr = app.add_subcommand("train", "Distill a feature field from a dataset");
  tr->add_option("--data", targs.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", targs.out, "Checkpoint file (.dffc) or directory")->required();
  tr->add_option("--phase1-iters", targs.phase1, "Radiance pretraining iterations");
  tr->add_option("--phase2-iters", targs.phase2, "Feature finetuning iterations");
  tr->add_option("--rays", targs.rays, "Rays per batch");
  tr->add_option("--coarse-samples", targs.coarse, "Coarse samples per ray");
  tr->add_option("--fine-samples", targs.fine, "Fine samples per ray");
  tr->add_option("--lambda", targs.lambda, "Feature loss weight");
  tr->add_option("--feature-pass", targs.feature_pass, "Pass that renders features")
      ->check(CLI::IsMember({"coarse", "fine"}));
  tr->add_option("--field-scale", targs.field_scale, "Network size")->check(CLI::IsMember({"desk", "large"}));
  tr->add_option("--log-every", targs.log_every, "Iterations between log lines (0: silent)");
  tr->add_flag("--freeze-radiance", targs.freeze, "Finetune only the feature head");
  tr->add_flag("--quiet", targs.quiet, "No progress lines");
  add_common(tr);

  std::string checkpoint, pose_file, data, edit_file, target, reference, features, host;
  RenderOptions ro;
  ro.coarse_samples = 0;
  ro.fine_samples = 0;
  std::vector<std::string> channels{"rgb"};
  auto* rd = app.add_subcommand("render", "Render one PNG per pose");
  rd->add_option("--checkpoint", checkpoint, "Checkpoint file or directory")->required();
  rd->add_option("--pose-file", pose_file, "JSON array of cameras or look-at poses")->required()->check(CLI::ExistingFile);
  rd->add_option("--out", out, "Output directory")->required();
  rd->add_option("--channels", channels, "Any of rgb, feature, depth")->delimiter(',');
  add_sampling(rd, ro);
  add_common(rd);

  auto* ed = app.add_subcommand("edit", "Render an edited scene");
  ed->add_option("--checkpoint", checkpoint, "Checkpoint file or directory")->required();
  ed->add_option("--edit", edit_file, "Edit description JSON")->required()->check(CLI::ExistingFile);
  ed->add_option("--target", target, "Second checkpoint, for warps");
  ed->add_option("--pose-file", pose_file, "JSON array of poses")->required()->check(CLI::ExistingFile);
  ed->add_option("--out", out, "Output directory")->required();
  add_sampling(ed, ro);
  add_common(ed);

  std::vector<std::string> labels;
  bool top2 = false;
  auto* sg = app.add_subcommand("segment", "Segment the dataset's labeled point cloud");
  sg->add_option("--checkpoint", checkpoint, "Checkpoint file or directory")->required();
  sg->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sg->add_option("--labels", labels, "Label set (default: the dataset's)")->delimiter(',');
  sg->add_flag("--top2", top2, "Also report the second-choice variant");
  sg->add_option("--out", out, "Report file (default stdout)");
  add_common(sg);

  auto* ev = app.add_subcommand("eval", "Score held-out views and point segmentation");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file or directory")->required();
  ev->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_flag("--top2", top2, "Also report the second-choice segmentation variant");
  ev->add_option("--out", out, "Report file (default stdout)");
  add_sampling(ev, ro);
  add_common(ev);

  auto* pv = app.add_subcommand("pca-vis", "Color a feature map by its principal components");
  pv->add_option("--features", features, "Feature map (.fmap)")->required()->check(CLI::ExistingFile);
  pv->add_option("--reference", reference, "Map the basis is fit on (default: --features)")->check(CLI::ExistingFile);
  pv->add_option("--out", out, "Output PNG")->required();
  add_common(pv);

  int port = -1, workers = 0;
  std::vector<std::string> preload;
  auto* sv = app.add_subcommand("serve", "Run the HTTP service");
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--port", port, "Port (0: any free port; default DFF_PORT or 8080)");
  sv->add_option("--workers", workers, "Render worker threads");
  sv->add_option("--checkpoint", preload, "Checkpoints to load at startup");
  add_common(sv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (!common.config.empty()) common.defaults = read_json_file(common.config);
    if (*gen) return gen_synthetic(common, spec_path, out);
    if (*tr) return train_command(common, targs);
    // Unset sample counts come from the config section, then the checkpoint.
    const auto with_defaults = [&](RenderOptions o, const std::string& name) {
      const Json s = common.section(name);
      if (o.coarse_samples <= 0) o.coarse_samples = s.value("coarse_samples", 0);
      if (o.fine_samples <= 0) o.fine_samples = s.value("fine_samples", 0);
      if (o.coarse_samples <= 0 || o.fine_samples <= 0) {
        const RenderOptions trained = training_render_options(load_checkpoint(checkpoint_path(checkpoint)));
        if (o.coarse_samples <= 0) o.coarse_samples = trained.coarse_samples;
        if (o.fine_samples <= 0) o.fine_samples = trained.fine_samples;
      }
      return o;
    };
    if (*rd) return render_command(common, checkpoint, pose_file, out, with_defaults(ro, "render"), channels);
    if (*ed) return edit_command(common, checkpoint, edit_file, target, pose_file, out, with_defaults(ro, "edit"));
    if (*sg) return segment_command(checkpoint, data, labels, top2, out);
    if (*ev) return eval_command(checkpoint, data, with_defaults(ro, "eval"), top2, out);
    if (*pv) return pca_command(features, reference, out);
    if (*sv) return serve_command(common, host, port, workers, preload);
  } catch (const InputError& e) {
    return fail("input", e.what(), 3);
  } catch (const LoadError& e) {
    return fail("load", e.what(), 4);
  } catch (const StructuralError& e) {
    return fail("structure", e.what(), 5);
  } catch (const nlohmann::json::exception& e) {
    return fail("input", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
