#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "skydehaze/dark_channel.hpp"
#include "skydehaze/dehazenet.hpp"
#include "skydehaze/pipeline.hpp"
#include "skydehaze/quality_metrics.hpp"
#include "skydehaze/scattering.hpp"
#include "skydehaze/sky_segmentation.hpp"

namespace py = pybind11;
using namespace skydehaze;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

ColorImage to_color(const F64& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an H x W x 3 array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return ColorImage(w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

ScalarMap to_scalar(const F64& a) {
  if (a.ndim() != 2) throw py::value_error("expected an H x W array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return ScalarMap(w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

template <typename T, int C>
py::array_t<T> to_array(const Raster<T, C>& r) {
  std::vector<py::ssize_t> shape = {r.height(), r.width()};
  if (C > 1) shape.push_back(C);
  py::array_t<T> out(shape);
  std::copy(r.data().begin(), r.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const QualityReport& report) {
  return py::module_::import("json").attr("loads")(report.to_json());
}

}  // namespace

PYBIND11_MODULE(_skydehaze, m) {
  m.doc() = "Bindings for the skydehaze C++ library. Images are float64 H x W x 3 arrays in [0, 1].";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kInvalidArgument:
          PyErr_SetString(PyExc_ValueError, e.what());
          return;
        case ErrorKind::kDecode:
        case ErrorKind::kIo:
          PyErr_SetString(PyExc_OSError, e.what());
          return;
        case ErrorKind::kNumeric:
          PyErr_SetString(PyExc_ArithmeticError, e.what());
          return;
      }
    }
  });

  m.def(
      "synthesize_haze",
      [](const F64& clear, std::array<double, 3> airlight, const F64& transmission) {
        return to_array(synthesize_haze(to_color(clear), {airlight, to_scalar(transmission)}));
      },
      py::arg("clear"), py::arg("airlight"), py::arg("transmission"),
      "I = J t + A (1 - t), clamped to [0, 1].");

  m.def(
      "dark_channel",
      [](const F64& img, int radius, bool average) {
        const ColorImage c = to_color(img);
        return to_array(average ? dark_channel_avg(c, radius) : dark_channel_min(c, radius));
      },
      py::arg("img"), py::arg("radius") = 7, py::arg("average") = false);

  m.def(
      "guided_filter",
      [](const F64& input, const F64& guide, int radius, double epsilon) {
        return to_array(guided_filter(to_scalar(input), to_scalar(guide), radius, epsilon));
      },
      py::arg("input"), py::arg("guide"), py::arg("radius"), py::arg("epsilon"));

  m.def(
      "dehaze_dcp",
      [](const F64& img, double omega, int window_radius) {
        DcpParams p;
        p.omega = omega;
        p.window_radius = window_radius;
        const DcpResult r = dehaze_dcp(to_color(img), p);
        py::dict out;
        out["restored"] = to_array(r.restored);
        out["recovered"] = to_array(r.recovered);
        out["transmission"] = to_array(r.transmission);
        out["raw_transmission"] = to_array(r.raw_transmission);
        out["airlight"] = r.airlight.per_channel;
        return out;
      },
      py::arg("img"), py::arg("omega") = 0.95, py::arg("window_radius") = 7,
      "Dark-channel restoration of the whole frame.");

  m.def(
      "extract_sky_mask",
      [](const F64& img) { return to_array(extract_sky_mask(to_color(img), MeanShiftParams{})); },
      py::arg("img"), "Binary sky mask (uint8, H x W).");

  m.def("entropy", [](const F64& img) { return entropy(to_color(img)); }, py::arg("img"));
  m.def(
      "visible_edge_ratio",
      [](const F64& before, const F64& after) {
        return visible_edge_ratio(to_color(before), to_color(after));
      },
      py::arg("before"), py::arg("after"), "None when `before` has no visible edges.");
  m.def("average_gradient", [](const F64& img) { return average_gradient(to_color(img)); },
        py::arg("img"));
  m.def("saturated_pixel_pct", [](const F64& img) { return saturated_pixel_pct(to_color(img)); },
        py::arg("img"));
  m.def(
      "evaluate",
      [](const F64& before, const F64& after) {
        return report_dict(evaluate(to_color(before), to_color(after)));
      },
      py::arg("before"), py::arg("after"), "Flat report dictionary.");

  m.def(
      "augment_count",
      [](std::size_t n) {
        return augment_dataset(std::vector<ColorImage>(n, ColorImage(2, 2))).size();
      },
      py::arg("n"), "Number of images augment_dataset makes from n inputs.");

  py::class_<NetworkSpec>(m, "Network")
      .def_static("initialize", &NetworkSpec::initialize, py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const NetworkSpec& net, const std::filesystem::path& p) { save_checkpoint(net, p); },
           py::arg("path"))
      .def_property_readonly("parameter_count", &NetworkSpec::parameter_count)
      .def(
          "forward",
          [](const NetworkSpec& net, const F64& img) {
            return to_array(to_image(forward(net, to_tensor(to_color(img)))));
          },
          py::arg("img"), "Clamped network output for the whole image.");

  m.def(
      "dehaze",
      [](const F64& img, const std::string& config, const NetworkSpec* model) {
        const PipelineConfig cfg = parse_config_text(config);
        std::optional<NetworkSpec> loaded;
        if (model == nullptr && cfg.model_path) loaded = load_checkpoint(*cfg.model_path);
        const DehazeResult r = dehaze(to_color(img), cfg, model ? model : (loaded ? &*loaded : nullptr));
        return py::make_tuple(to_array(r.image), report_dict(r.report), to_array(r.mask));
      },
      py::arg("img"), py::arg("config") = "", py::arg("model") = nullptr,
      "Full pipeline. `config` holds `key = value` lines. Returns (image, report, sky_mask).");
}
