#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "thermopipe/bench.hpp"
#include "thermopipe/cli.hpp"
#include "thermopipe/correction.hpp"
#include "thermopipe/dataset.hpp"
#include "thermopipe/detector.hpp"
#include "thermopipe/eval.hpp"
#include "thermopipe/frame.hpp"
#include "thermopipe/nuc.hpp"
#include "thermopipe/report_json.hpp"
#include "thermopipe/synth.hpp"

namespace py = pybind11;
using namespace thermopipe;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

template <typename T>
py::array_t<T> as_array(std::span<const T> data, std::size_t width, std::size_t height) {
  py::array_t<T> out({height, width});
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

template <typename T>
std::vector<T> from_array(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, std::size_t& w,
                          std::size_t& h) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array (height, width)");
  h = static_cast<std::size_t>(a.shape(0));
  w = static_cast<std::size_t>(a.shape(1));
  return std::vector<T>(a.data(), a.data() + a.size());
}

RawFrame raw_from(const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a,
                  std::uint64_t index = 0) {
  std::size_t w = 0, h = 0;
  auto v = from_array(a, w, h);
  return RawFrame(w, h, std::move(v), index);
}

CorrectedFrame corrected_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::size_t w = 0, h = 0;
  auto v = from_array(a, w, h);
  return CorrectedFrame(w, h, std::move(v));
}

py::array_t<std::uint16_t> raw_to(const RawFrame& f) { return as_array(f.samples(), f.width(), f.height()); }
py::array_t<double> corrected_to(const CorrectedFrame& f) { return as_array(f.values(), f.width(), f.height()); }
py::array_t<std::uint8_t> display_to(const DisplayFrame& f) { return as_array(f.bytes(), f.width(), f.height()); }

ReferenceStack stack_from(const std::vector<py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>>& frames,
                          double celsius) {
  ReferenceStack s{{}, celsius};
  std::uint64_t i = 0;
  for (const auto& a : frames) s.frames.push_back(raw_from(a, i++));
  return s;
}

}  // namespace

PYBIND11_MODULE(_thermopipe, m) {
  m.attr("__version__") = "0.1.0";

  py::register_exception<FrameError>(m, "FrameError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<DetectorError>(m, "DetectorError", PyExc_RuntimeError);

  // frames
  m.def("load_frame_16", [](const std::filesystem::path& p) { return raw_to(load_frame_16(p)); }, py::arg("path"));
  m.def("store_frame_16", [](const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a,
                             const std::filesystem::path& p) { store_frame_16(raw_from(a), p); },
        py::arg("frame"), py::arg("path"));
  m.def("frame_stats", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return to_python(to_json(frame_stats(corrected_from(a))));
  }, py::arg("frame"));

  // calibration
  py::class_<NucThresholds>(m, "NucThresholds")
      .def(py::init<>())
      .def_readwrite("dead_response", &NucThresholds::dead_response)
      .def_readwrite("gain_min", &NucThresholds::gain_min)
      .def_readwrite("gain_max", &NucThresholds::gain_max)
      .def_readwrite("max_bad_fraction", &NucThresholds::max_bad_fraction)
      .def_readwrite("trim_fraction", &NucThresholds::trim_fraction);

  py::class_<CalibrationSet>(m, "CalibrationSet")
      .def_property_readonly("width", [](const CalibrationSet& c) { return c.geometry.width; })
      .def_property_readonly("height", [](const CalibrationSet& c) { return c.geometry.height; })
      .def_property_readonly("gain", [](const CalibrationSet& c) {
        return as_array<double>(c.gain, c.geometry.width, c.geometry.height);
      })
      .def_property_readonly("offset", [](const CalibrationSet& c) {
        return as_array<double>(c.offset, c.geometry.width, c.geometry.height);
      })
      .def_property_readonly("bad_count", &CalibrationSet::bad_count)
      .def_readonly("t_cold", &CalibrationSet::t_cold)
      .def_readonly("t_hot", &CalibrationSet::t_hot)
      .def_readonly("target_cold", &CalibrationSet::target_cold)
      .def_readonly("target_hot", &CalibrationSet::target_hot)
      .def("save", [](const CalibrationSet& c, const std::filesystem::path& p) { save_calibration(c, p); })
      .def_static("load", &load_calibration, py::arg("path"));

  m.def("build_two_point",
        [](const std::vector<py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>>& cold, double t_cold,
           const std::vector<py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>>& hot, double t_hot,
           const NucThresholds& thresholds) {
          return build_two_point(stack_from(cold, t_cold), stack_from(hot, t_hot), thresholds);
        },
        py::arg("cold"), py::arg("t_cold"), py::arg("hot"), py::arg("t_hot"), py::arg("thresholds") = NucThresholds{});
  m.def("apply_nuc", [](const CalibrationSet& cal, const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a) {
    return corrected_to(apply_nuc(cal, raw_from(a)));
  }, py::arg("calibration"), py::arg("frame"));

  // correction
  m.def("agc_display", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a, double low, double high) {
    return display_to(agc_display(corrected_from(a), AgcParams{low, high}));
  }, py::arg("frame"), py::arg("low_percentile") = 1.0, py::arg("high_percentile") = 99.0);

  py::class_<CorrectionPipeline>(m, "CorrectionPipeline")
      .def(py::init([](const CalibrationSet& cal) { return CorrectionPipeline(default_pipeline_config(cal)); }),
           py::arg("calibration"))
      .def_static("from_config", [](const std::filesystem::path& p) { return CorrectionPipeline(load_pipeline_config(p)); },
                  py::arg("path"))
      .def("process", [](CorrectionPipeline& p, const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a,
                         std::uint64_t index) {
        const PipelineOutput out = p.process(raw_from(a, index));
        return py::make_tuple(corrected_to(out.corrected), display_to(out.display));
      }, py::arg("frame"), py::arg("frame_index") = 0)
      .def_property_readonly("runtime_bad_pixels", [](const CorrectionPipeline& p) { return p.mask().bad_count(); });

  // synthetic sensor
  m.def("synth_uniform_frames",
        [](std::uint64_t seed, std::size_t width, std::size_t height, double celsius, std::size_t count, double noise,
           double gain_quantum) {
          synth::SensorParams params;
          params.geometry = {width, height};
          params.noise_sigma = noise;
          params.gain_quantum = gain_quantum;
          const auto sensor = synth::make_sensor(seed, params);
          std::vector<py::array_t<std::uint16_t>> frames;
          for (std::uint64_t i = 0; i < count; ++i) frames.push_back(raw_to(synth::uniform_frame(sensor, celsius, i)));
          return frames;
        },
        py::arg("seed"), py::arg("width"), py::arg("height"), py::arg("celsius"), py::arg("count") = 1,
        py::arg("noise_sigma") = 0.0, py::arg("gain_quantum") = 0.0);

  // dataset and evaluation
  m.def("dataset_stats", [](const std::filesystem::path& root) {
    const Dataset ds = load_dataset(root);
    return to_python(to_json(dataset_stats(ds), ds.scheme));
  }, py::arg("root"));
  m.def("share_percent", &share_percent, py::arg("count"), py::arg("total"));

  m.def("evaluate_stub",
        [](const std::filesystem::path& root, const std::string& stub, const std::string& strategy, double conf,
           double iou_threshold, double fusion_iou) {
          const Dataset ds = load_dataset(root);
          StubDetector det(parse_stub_spec(stub));
          std::vector<std::vector<Detection>> dets;
          for (const Sample& s : ds.samples) {
            dets.push_back(run_strategy(parse_strategy(strategy), {&det}, {s.id, s.image, s.truths}, conf, fusion_iou));
          }
          return to_python(to_json(evaluate(dets, ds, {conf, iou_threshold})));
        },
        py::arg("root"), py::arg("stub") = "", py::arg("strategy") = "na", py::arg("conf") = 0.25,
        py::arg("iou") = 0.5, py::arg("fusion_iou") = kDefaultFusionIou);

  m.def("average_precision", [](const std::vector<bool>& tp, std::size_t n_truth, bool eleven_point) {
    const std::unique_ptr<bool[]> flags(new bool[tp.size()]);
    std::copy(tp.begin(), tp.end(), flags.get());
    return average_precision(std::span<const bool>(flags.get(), tp.size()), n_truth,
                             eleven_point ? ApConvention::eleven_point : ApConvention::all_point);
  }, py::arg("true_positive"), py::arg("n_truth"), py::arg("eleven_point") = false);

  // benchmarking
  m.def("bench_report", [](std::uint64_t frames, double total_ms) { return to_python(to_json(make_bench_report(frames, total_ms))); },
        py::arg("frames"), py::arg("total_ms"));
  m.def("thermal_status", [](const std::string& snapshot) {
    const auto readings = parse_thermal_zones(snapshot);
    return to_python(to_json(throttle_check(readings)));
  }, py::arg("snapshot"));

  // command line
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
