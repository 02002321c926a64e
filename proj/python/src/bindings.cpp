#include "uags/checkpoint.hpp"
#include "uags/config.hpp"
#include "uags/evalsuite.hpp"
#include "uags/metrics.hpp"
#include "uags/rasterizer.hpp"
#include "uags/synth.hpp"
#include "uags/trainer.hpp"
#include "uags/uncertainty.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace uags;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Single-channel images come back as (H, W), others as (H, W, C).
py::array to_numpy(const Image& img) {
  if (img.empty()) return Array(std::vector<py::ssize_t>{0});
  std::vector<py::ssize_t> shape{img.height, img.width};
  if (img.channels != 1) shape.push_back(img.channels);
  Array out(shape);
  std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(double));
  return out;
}

Image from_numpy(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("expected a 2D or 3D array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
            a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
  std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(double));
  return img;
}

std::optional<Mask> mask_from_numpy(const std::optional<py::array_t<bool>>& m) {
  if (!m) return std::nullopt;
  auto r = m->unchecked<2>();
  Mask mask(static_cast<int>(r.shape(1)), static_cast<int>(r.shape(0)));
  for (py::ssize_t y = 0; y < r.shape(0); ++y)
    for (py::ssize_t x = 0; x < r.shape(1); ++x) mask.set(int(y), int(x), r(y, x));
  return mask;
}

py::array vector_view(const std::vector<double>& v, py::ssize_t cols) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size()) / cols, cols});
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
  return out;
}

void assign(std::vector<double>& dst, const Array& src, std::size_t rows, std::size_t cols,
            const char* name) {
  if (static_cast<std::size_t>(src.size()) != rows * cols)
    throw py::value_error(std::string(name) + ": expected " + std::to_string(rows) + " x " +
                          std::to_string(cols) + " values");
  dst.assign(src.data(), src.data() + src.size());
}

ChannelSet channels_from(const std::vector<std::string>& names) {
  ChannelSet c{false, false, false, false};
  for (const auto& n : names) {
    if (n == "color") c.color = true;
    else if (n == "depth") c.depth = true;
    else if (n == "uncertainty") c.uncertainty = true;
    else if (n == "flow") c.flow = true;
    else throw py::value_error("unknown channel: " + n);
  }
  return c;
}

RenderRequest make_request(const std::vector<std::string>& channels,
                           const std::optional<Camera>& flow_target) {
  RenderRequest req;
  req.channels = channels_from(channels);
  req.flow_target = flow_target;
  if (req.channels.flow && !flow_target)
    throw py::value_error("the flow channel needs flow_target");
  return req;
}

const DeformationField* field_of(const std::optional<Checkpoint>& ckpt) {
  return ckpt && ckpt->field ? &*ckpt->field : nullptr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Uncertainty-aware 4D Gaussian splatting";

  py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::enum_<Precision>(m, "Precision")
      .value("float32", Precision::Float32)
      .value("float64", Precision::Float64);

  py::class_<Camera>(m, "Camera")
      .def(py::init([](double fx, double fy, double cx, double cy, const Mat4& world_to_camera,
                       int width, int height, double timestamp) {
             Camera c;
             c.intrinsics = {fx, fy, cx, cy};
             c.world_to_camera = world_to_camera;
             c.width = width;
             c.height = height;
             c.timestamp = timestamp;
             c.validate();
             return c;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
           py::arg("world_to_camera"), py::arg("width"), py::arg("height"),
           py::arg("timestamp") = 0.0)
      .def_readwrite("world_to_camera", &Camera::world_to_camera)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("timestamp", &Camera::timestamp)
      .def_property_readonly("center", &Camera::center);

  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"),
        "Camera-to-world pose looking from eye at target.");

  py::class_<GaussianModel>(m, "GaussianModel")
      .def(py::init<int>(), py::arg("sh_degree") = 0)
      .def("__len__", &GaussianModel::size)
      .def_property_readonly("sh_degree", &GaussianModel::sh_degree)
      .def_static(
          "from_arrays",
          [](const Array& positions, const Array& rotations, const Array& log_scales,
             const Array& opacity_logits, const Array& features, int sh_degree) {
            GaussianModel g(sh_degree);
            const std::size_t n = static_cast<std::size_t>(opacity_logits.size());
            assign(g.positions, positions, n, 3, "positions");
            assign(g.rotations, rotations, n, 4, "rotations");
            assign(g.log_scales, log_scales, n, 3, "log_scales");
            assign(g.opacity_logits, opacity_logits, n, 1, "opacity_logits");
            assign(g.features, features, n, g.feature_stride(), "features");
            g.contributions.assign(n, 0.0);
            g.uncertainties.assign(n, 1.0);
            g.validate();
            return g;
          },
          py::arg("positions"), py::arg("rotations"), py::arg("log_scales"),
          py::arg("opacity_logits"), py::arg("features"), py::arg("sh_degree") = 0)
      .def_property_readonly("positions", [](const GaussianModel& g) { return vector_view(g.positions, 3); })
      .def_property_readonly("rotations", [](const GaussianModel& g) { return vector_view(g.rotations, 4); })
      .def_property_readonly("log_scales", [](const GaussianModel& g) { return vector_view(g.log_scales, 3); })
      .def_property_readonly("opacity_logits", [](const GaussianModel& g) { return vector_view(g.opacity_logits, 1).attr("ravel")(); })
      .def_property_readonly("features", [](const GaussianModel& g) { return vector_view(g.features, g.feature_stride()); })
      .def_property_readonly("contributions", [](const GaussianModel& g) { return vector_view(g.contributions, 1).attr("ravel")(); })
      .def_property_readonly("uncertainties", [](const GaussianModel& g) { return vector_view(g.uncertainties, 1).attr("ravel")(); });

  py::class_<RenderOutput>(m, "RenderOutput")
      .def_readonly("width", &RenderOutput::width)
      .def_readonly("height", &RenderOutput::height)
      .def_property_readonly("color", [](const RenderOutput& r) { return to_numpy(r.color); })
      .def_property_readonly("depth", [](const RenderOutput& r) { return to_numpy(r.depth); })
      .def_property_readonly("uncertainty", [](const RenderOutput& r) { return to_numpy(r.uncertainty); })
      .def_property_readonly("flow", [](const RenderOutput& r) { return to_numpy(r.flow); })
      .def_property_readonly("alpha", [](const RenderOutput& r) { return to_numpy(r.alpha); })
      .def_property_readonly("transmittance", [](const RenderOutput& r) { return to_numpy(r.transmittance); })
      .def_readonly("contributions", &RenderOutput::contributions);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readwrite("model", &Checkpoint::model)
      .def_readonly("iteration", &Checkpoint::iteration)
      .def_readwrite("background", &Checkpoint::background)
      .def_property_readonly("has_field", [](const Checkpoint& c) { return c.field.has_value(); });

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));

  m.def(
      "render",
      [](const GaussianModel& model, const Camera& cam, std::vector<std::string> channels,
         std::optional<Camera> flow_target, std::optional<Checkpoint> deformation,
         const Vec3& background, Precision precision, bool thresholds) {
        RenderSettings s;
        s.background = background;
        s.precision = precision;
        s.thresholds = thresholds;
        py::gil_scoped_release release;
        return render(model, field_of(deformation), cam, make_request(channels, flow_target), s);
      },
      py::arg("model"), py::arg("camera"),
      py::arg("channels") = std::vector<std::string>{"color"},
      py::arg("flow_target") = std::nullopt, py::arg("deformation") = std::nullopt,
      py::arg("background") = Vec3::Zero(), py::arg("precision") = Precision::Float32,
      py::arg("thresholds") = true,
      "Tiled rasterization. `deformation` is a checkpoint whose field deforms the model.");

  m.def(
      "render_oracle",
      [](const GaussianModel& model, const Camera& cam, std::vector<std::string> channels,
         std::optional<Camera> flow_target, std::optional<Checkpoint> deformation,
         const Vec3& background) {
        py::gil_scoped_release release;
        return render_oracle(model, field_of(deformation), cam,
                             make_request(channels, flow_target), background);
      },
      py::arg("model"), py::arg("camera"),
      py::arg("channels") = std::vector<std::string>{"color"},
      py::arg("flow_target") = std::nullopt, py::arg("deformation") = std::nullopt,
      py::arg("background") = Vec3::Zero());

  py::class_<UncertaintyParams>(m, "UncertaintyParams")
      .def(py::init<>())
      .def_readwrite("c0", &UncertaintyParams::c0)
      .def_readwrite("c1", &UncertaintyParams::c1)
      .def_static("for_view_count", &UncertaintyParams::for_view_count, py::arg("views"));

  m.def("contribution_to_uncertainty", &contribution_to_uncertainty, py::arg("contribution"),
        py::arg("params"));
  m.def(
      "refresh_uncertainty",
      [](GaussianModel& model, const std::vector<Camera>& frames,
         const UncertaintyParams& params) {
        refresh_uncertainty(model, nullptr, frames, params);
      },
      py::arg("model"), py::arg("frames"), py::arg("params"),
      "Recomputes per-primitive contributions and uncertainty in place.");

  m.def(
      "psnr",
      [](const Array& a, const Array& b, std::optional<py::array_t<bool>> mask) {
        auto mk = mask_from_numpy(mask);
        return psnr(from_numpy(a), from_numpy(b), mk ? &*mk : nullptr);
      },
      py::arg("a"), py::arg("b"), py::arg("mask") = std::nullopt);
  m.def(
      "ssim",
      [](const Array& a, const Array& b, std::optional<py::array_t<bool>> mask) {
        auto mk = mask_from_numpy(mask);
        return ssim(from_numpy(a), from_numpy(b), mk ? &*mk : nullptr);
      },
      py::arg("a"), py::arg("b"), py::arg("mask") = std::nullopt);

  py::class_<SceneBundle>(m, "Scene")
      .def("__len__", [](const SceneBundle& s) { return s.frames.size(); })
      .def_property_readonly("frame_ids",
                             [](const SceneBundle& s) {
                               std::vector<std::string> ids;
                               for (const auto& f : s.frames) ids.push_back(f.id);
                               return ids;
                             })
      .def("cameras", [](const SceneBundle& s, const std::string& split) {
        return s.cameras(split == "val" ? Split::Val : Split::Train);
      }, py::arg("split") = "train")
      .def("image", [](const SceneBundle& s, std::size_t i) { return to_numpy(s.frames.at(i).image); })
      .def("save", [](const SceneBundle& s, const fs::path& dir) { save_scene(s, dir); });

  m.def("load_scene", &load_scene, py::arg("directory"));
  m.def(
      "synth_scene",
      [](const std::string& preset, std::uint64_t seed, std::optional<int> frames,
         std::optional<int> width, std::optional<int> height) {
        SynthSpec spec = synth_preset(preset, seed);
        if (frames) spec.frames = *frames;
        if (width) spec.width = *width;
        if (height) spec.height = *height;
        return synth_scene(spec, seed);
      },
      py::arg("preset") = "default", py::arg("seed") = 0, py::arg("frames") = std::nullopt,
      py::arg("width") = std::nullopt, py::arg("height") = std::nullopt);

  m.def("config_defaults", [] { return config_to_json_text(TrainConfig{}); },
        "Default training configuration as JSON text.");

  m.def(
      "train",
      [](const SceneBundle& scene, const std::string& config_json, const fs::path& out_dir) {
        TrainConfig config = config_from_json_text(config_json);
        TrainerOptions options;
        options.out_dir = out_dir;
        py::gil_scoped_release release;
        GaussianModel init = initial_model(scene, config);
        return train(scene, std::move(init), config, options).checkpoint;
      },
      py::arg("scene"), py::arg("config_json") = "{}", py::arg("out_dir") = fs::path{},
      "Trains from SfM points (plus dynamic lifting) and returns the final checkpoint.");

  m.def(
      "evaluate",
      [](const Checkpoint& ckpt, const SceneBundle& scene, const std::string& split) {
        EvalSummary s = evaluate(ckpt, scene, split == "train" ? Split::Train : Split::Val);
        py::dict d;
        d["mean_psnr"] = s.mean_psnr;
        d["mean_ssim"] = s.mean_ssim;
        d["mean_mpsnr"] = s.mean_mpsnr;
        d["mean_mssim"] = s.mean_mssim;
        d["csv"] = metrics_csv(s.frames);
        return d;
      },
      py::arg("checkpoint"), py::arg("scene"), py::arg("split") = "val");
}
