// Python bindings. Structured arguments and results cross as JSON text; the
// package wrapper in dff/__init__.py converts them to dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dff/checkpoint.hpp"
#include "dff/dataset.hpp"
#include "dff/distiller.hpp"
#include "dff/editor.hpp"
#include "dff/evaluator.hpp"
#include "dff/fmap.hpp"
#include "dff/json_io.hpp"
#include "dff/report.hpp"
#include "dff/synthetic.hpp"

namespace py = pybind11;
using namespace dff;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_array(const Image& img) {
  FloatArray a({img.height, img.width, img.channels});
  std::copy(img.data.begin(), img.data.end(), a.mutable_data());
  return a;
}

Image from_array(const FloatArray& a) {
  if (a.ndim() != 3) throw InputError("expected an array of shape (height, width, channels)");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::dict buffers_to_dict(const RenderedBuffers& b) {
  py::dict d;
  if (b.rgb) d["rgb"] = to_array(*b.rgb);
  if (b.feature) d["feature"] = to_array(*b.feature);
  if (b.depth) d["depth"] = to_array(*b.depth);
  d["opacity"] = to_array(b.opacity);
  return d;
}

RenderChannels channels_from(const std::vector<std::string>& names) {
  RenderChannels c{false, false, false};
  for (const auto& n : names) {
    if (n == "rgb")
      c.rgb = true;
    else if (n == "feature")
      c.feature = true;
    else if (n == "depth")
      c.depth = true;
    else
      throw InputError("unknown channel '" + n + "' (expected rgb, feature or depth)");
  }
  return c;
}

// A loaded checkpoint plus the sample counts it renders with.
struct PyScene {
  SceneModel model;
  RenderOptions options;

  explicit PyScene(const std::string& path) : model(load_checkpoint(path)), options(training_render_options(model)) {}

  Camera camera(const std::string& pose) const { return camera_from_pose(Json::parse(pose), model.near, model.far); }

  py::dict render(const std::string& pose, const std::vector<std::string>& channels) const {
    RenderOptions o = options;
    o.channels = channels_from(channels);
    const Camera cam = camera(pose);
    RenderedBuffers b;
    {
      py::gil_scoped_release release;
      b = render_view(model.view(), cam, o);
    }
    return buffers_to_dict(b);
  }

  // Per-pixel selection probability of a softmax query over `labels`.
  FloatArray query(const std::string& pose, const std::vector<std::string>& labels,
                   const std::vector<std::string>& negatives) const {
    RenderOptions o = options;
    o.channels = {false, true, false};
    const Selection sel = Selection::softmax(model.queries, labels, negatives);
    const RenderedBuffers b = render_view(model.view(), camera(pose), o);
    Image p(b.feature->height, b.feature->width, 1);
    for (int r = 0; r < p.height; ++r)
      for (int c = 0; c < p.width; ++c) {
        Eigen::VectorXd f(b.feature->channels);
        for (int ch = 0; ch < b.feature->channels; ++ch) f(ch) = b.feature->at(r, c, ch);
        p.at(r, c) = static_cast<float>(selection_probability(f, sel));
      }
    return to_array(p);
  }

  // `edit` is an edit description whose selection may be {"labels": [...]}.
  py::dict render_edit(const std::string& edit, const std::string& pose) const {
    Json j = Json::parse(edit);
    const Json& s = j.at("selection");
    if (!s.contains("mode"))
      j["selection"] = Selection::softmax(model.queries, s.at("labels").get<std::vector<std::string>>(),
                                          s.value("negatives", std::vector<std::string>{}))
                           .to_json();
    const EditDescription e = EditDescription::from_json(j);
    if (e.op == EditOp::kWarp) throw InputError("warp edits need a second scene; use the CLI");
    const SceneSource source(model.view());
    const EditedScene edited(e, source);
    RenderOptions o = options;
    o.channels = {true, false, true};
    const Camera cam = camera(pose);
    RenderedBuffers b;
    {
      py::gil_scoped_release release;
      b = dff::render_edit(edited, cam, o);
    }
    return buffers_to_dict(b);
  }

  std::string segment(const std::string& dataset_dir) const {
    const TeacherDataset ds = load_dataset(dataset_dir);
    if (!ds.gt_points) throw InputError(dataset_dir + ": dataset has no labeled point cloud");
    return segment_point_cloud(model.feature_field(), ds.gt_points->points, ds.gt_points->labels, ds.gt_labels,
                               model.queries)
        .top1.to_json()
        .dump();
  }

  std::string evaluate(const std::string& dataset_dir) const {
    const TeacherDataset ds = load_dataset(dataset_dir);
    py::gil_scoped_release release;
    return evaluate_scene(model, ds, options).to_json().dump();
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distilled feature fields: native core";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<StructuralError>(m, "StructuralError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_KeyError);
  py::register_exception<ConflictError>(m, "ConflictError", PyExc_RuntimeError);

  m.def(
      "gen_synthetic",
      [](const std::string& out, const std::string& spec) {
        const SyntheticSpec s = spec.empty() ? SyntheticSpec::desk() : SyntheticSpec::from_json(Json::parse(spec));
        save_dataset(generate_synthetic(s), out);
      },
      py::arg("out"), py::arg("spec") = "");

  m.def(
      "dataset_info",
      [](const std::string& dir) {
        const TeacherDataset ds = load_dataset(dir);
        Json j;
        j["frames"] = ds.frames.size();
        j["train_frames"] = ds.frame_indices(true).size();
        j["feature_dim"] = ds.feature_dim;
        j["labels"] = ds.queries.labels();
        j["gt_points"] = ds.gt_points ? ds.gt_points->points.cols() : 0;
        return j.dump();
      },
      py::arg("dataset"));

  m.def(
      "train",
      [](const std::string& dataset, const std::string& out, const std::string& config) {
        const TeacherDataset ds = load_dataset(dataset);
        TrainConfig tc = train_config_from_json(config.empty() ? Json::object() : Json::parse(config));
        tc.log_every = 0;
        const FieldConfig field = FieldConfig::desk_scale(ds.feature_dim);
        py::gil_scoped_release release;
        const SceneModel model = dff::train(ds, tc, field);
        save_checkpoint(model, out);
        return model.iteration;
      },
      py::arg("dataset"), py::arg("out"), py::arg("config") = "");

  py::class_<PyScene>(m, "Scene")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def_property_readonly("labels", [](const PyScene& s) { return s.model.queries.labels(); })
      .def_property_readonly("iteration", [](const PyScene& s) { return s.model.iteration; })
      .def_property_readonly("feature_dim", [](const PyScene& s) { return s.model.queries.dim(); })
      .def("set_samples",
           [](PyScene& s, int coarse, int fine) {
             if (coarse < 1 || fine < 0) throw InputError("sample counts must be positive");
             s.options.coarse_samples = coarse;
             s.options.fine_samples = fine;
           })
      .def("render", &PyScene::render, py::arg("pose"), py::arg("channels") = std::vector<std::string>{"rgb"})
      .def("query", &PyScene::query, py::arg("pose"), py::arg("labels"),
           py::arg("negatives") = std::vector<std::string>{})
      .def("render_edit", &PyScene::render_edit, py::arg("edit"), py::arg("pose"))
      .def("segment", &PyScene::segment, py::arg("dataset"))
      .def("evaluate", &PyScene::evaluate, py::arg("dataset"))
      .def("save", [](const PyScene& s, const std::string& path) { save_checkpoint(s.model, path); });

  m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(from_array(a), from_array(b)); });
  m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(from_array(a), from_array(b)); });
  m.def("encode_fmap", [](const FloatArray& a) {
    const auto bytes = encode_fmap(from_array(a));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_fmap", [](const py::bytes& b) {
    const std::string s = b;
    return to_array(decode_fmap(std::vector<unsigned char>(s.begin(), s.end())));
  });
}
