#include "thermopipe/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "thermopipe/bench.hpp"
#include "thermopipe/correction.hpp"
#include "thermopipe/dataset.hpp"
#include "thermopipe/detector.hpp"
#include "thermopipe/eval.hpp"
#include "thermopipe/nuc.hpp"
#include "thermopipe/report_json.hpp"
#include "thermopipe/synth.hpp"

namespace thermopipe::cli {

namespace {

using nlohmann::json;

const char* kSubcommands = "calibrate, correct, synth, evaluate, bench, dataset-stats";

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

class Logger {
 public:
  Logger(std::ostream& err, int verbosity) : err_(err) {
    level_ = LogLevel::warn;
    if (const char* env = std::getenv("THERMOPIPE_LOG")) {
      const std::string v = env;
      if (v == "error" || v == "quiet") level_ = LogLevel::error;
      if (v == "info") level_ = LogLevel::info;
      if (v == "debug") level_ = LogLevel::debug;
    }
    const int raised = static_cast<int>(level_) + verbosity;
    level_ = static_cast<LogLevel>(std::clamp(raised, 0, 3));
  }

  void info(const std::string& msg) const { log(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { log(LogLevel::debug, "debug", msg); }
  void warn(const std::string& msg) const { log(LogLevel::warn, "warning", msg); }

 private:
  void log(LogLevel level, const char* tag, const std::string& msg) const {
    if (level <= level_) err_ << "thermopipe: " << tag << ": " << msg << '\n';
  }

  std::ostream& err_;
  LogLevel level_;
};

fs::path abs_path(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<RawFrame> load_frames(const fs::path& dir) {
  std::vector<RawFrame> frames;
  std::uint64_t index = 0;
  for (const auto& p : list_images(dir)) {
    RawFrame f = load_frame_16(p);
    f.set_frame_index(index++);
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw std::runtime_error("no 16-bit frames found in " + dir.string());
  return frames;
}

void emit(const json& report, const GlobalOptions& g, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (g.out) {
    std::ofstream f(*g.out, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write report " + g.out->string());
    f << text;
  } else {
    out << text;
  }
}

void emit_csv(const std::vector<std::string>& rows, const GlobalOptions& g) {
  if (!g.csv) return;
  std::ofstream f(*g.csv, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write CSV " + g.csv->string());
  f << kCsvHeader << '\n';
  for (const auto& r : rows) f << r << '\n';
}

std::string numbered(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return prefix + digits;
}

int run_synth(const SynthArgs& a, const GlobalOptions& g, std::ostream& out, const Logger& log) {
  synth::SensorParams params;
  params.geometry = {a.width, a.height};
  params.noise_sigma = a.noise;
  params.bad_count = a.bad_pixels;
  const synth::SensorTruth sensor = synth::make_sensor(g.seed, params);

  const fs::path dataset = a.out_dir / "dataset";
  for (const auto& d : {dataset / "images", dataset / "labels", a.out_dir / "refs" / "cold",
                        a.out_dir / "refs" / "hot", a.out_dir / "refs" / "check"}) {
    fs::create_directories(d);
  }

  const std::pair<const char*, double> stacks[] = {{"cold", a.t_cold}, {"hot", a.t_hot}, {"check", a.t_check}};
  std::uint64_t stream_base = 0;
  for (const auto& [name, celsius] : stacks) {
    for (std::size_t k = 0; k < a.ref_frames; ++k) {
      const RawFrame f = synth::uniform_frame(sensor, celsius, stream_base + k);
      store_frame_16(f, a.out_dir / "refs" / name / (numbered("ref_", k) + ".pgm"));
    }
    stream_base += 1'000'000;
    log.info(std::string("wrote ") + std::to_string(a.ref_frames) + " " + name + " reference frames");
  }

  static const char* kTimeOfDay[] = {"day", "evening", "night"};
  json tags = json::object();
  std::size_t box_total = 0;
  for (std::size_t i = 0; i < a.images; ++i) {
    const auto objects = synth::random_objects(g.seed, i, a.max_objects);
    CounterRng rng = synth::frame_rng(sensor, stream_base + i);
    auto [frame, truths] = synth::scene_frame(sensor, objects, a.background, rng);
    const std::string id = numbered("img_", i);
    store_frame_16(frame, dataset / "images" / (id + ".pgm"));
    write_label_file(dataset / "labels" / (id + ".txt"), truths);
    tags[id] = json::array({kTimeOfDay[i % 3]});
    box_total += truths.size();
  }
  {
    std::ofstream t(dataset / "tags.json", std::ios::trunc);
    t << tags.dump(2) << '\n';
  }
  synth::save_sensor_truth(sensor, a.out_dir / "sensor_truth.json");

  emit({{"command", "synth"},
        {"seed", g.seed},
        {"width", a.width},
        {"height", a.height},
        {"noise_sigma", a.noise},
        {"bad_pixels", a.bad_pixels},
        {"reference_frames_per_stack", a.ref_frames},
        {"reference_temperatures", {{"cold", a.t_cold}, {"hot", a.t_hot}, {"check", a.t_check}}},
        {"images", a.images},
        {"boxes", box_total}},
       g, out);
  return kExitOk;
}

int run_calibrate(const CalibrateArgs& a, const GlobalOptions& g, std::ostream& out, const Logger& log) {
  ReferenceStack cold{load_frames(a.cold), a.t_cold};
  ReferenceStack hot{load_frames(a.hot), a.t_hot};
  if (a.select) {
    cold.frames = select_references(cold.frames, std::min(*a.select, cold.frames.size()));
    hot.frames = select_references(hot.frames, std::min(*a.select, hot.frames.size()));
  }
  NucThresholds thresholds;
  thresholds.dead_response = a.dead_response;
  thresholds.gain_min = a.gain_min;
  thresholds.gain_max = a.gain_max;
  thresholds.max_bad_fraction = a.max_bad_fraction;
  const CalibrationSet cal = build_two_point(cold, hot, thresholds);
  save_calibration(cal, a.output);
  log.info("calibration written with " + std::to_string(cal.bad_count()) + " bad pixels");

  json report = {{"command", "calibrate"},
                 {"width", cal.geometry.width},
                 {"height", cal.geometry.height},
                 {"cold_frames", cold.frames.size()},
                 {"hot_frames", hot.frames.size()},
                 {"t_cold", cal.t_cold},
                 {"t_hot", cal.t_hot},
                 {"target_cold", cal.target_cold},
                 {"target_hot", cal.target_hot},
                 {"bad_count", cal.bad_count()},
                 {"gain", to_json(frame_stats(std::span<const double>(cal.gain)))}};
  if (a.check) {
    const ReferenceStack check{load_frames(*a.check), 0.0};
    report["check_residual_nonuniformity"] = residual_nonuniformity(cal, check);
  }
  emit(report, g, out);
  return kExitOk;
}

int run_correct(const CorrectArgs& a, const GlobalOptions& g, std::ostream& out, const Logger& log) {
  PipelineConfig config = g.config ? load_pipeline_config(*g.config)
                                   : default_pipeline_config(load_calibration(*a.calibration));
  if (g.config && a.calibration) config.calibration = load_calibration(*a.calibration);

  const bool dataset_mode = fs::is_directory(a.input / "images");
  const fs::path image_dir = dataset_mode ? a.input / "images" : a.input;
  const auto files = list_images(image_dir);
  if (files.empty()) throw std::runtime_error("no frames found in " + image_dir.string());

  fs::create_directories(a.output / "images");
  if (a.write_corrected) fs::create_directories(a.output / "corrected");

  CorrectionPipeline pipeline(config);
  json frames = json::array();
  double uniformity_sum = 0.0;
  std::uint64_t index = 0;
  for (const auto& path : files) {
    RawFrame raw = load_frame_16(path);
    raw.set_frame_index(index++);
    const PipelineOutput result = pipeline.process(raw);
    const std::string stem = path.stem().string();
    store_frame_8(result.display, a.output / "images" / (stem + ".pgm"));
    if (a.write_corrected) {
      std::vector<std::uint16_t> samples;
      samples.reserve(result.corrected.values().size());
      for (double v : result.corrected.values()) {
        samples.push_back(static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0)));
      }
      store_frame_16(RawFrame(raw.width(), raw.height(), std::move(samples)), a.output / "corrected" / (stem + ".pgm"));
    }
    const FrameStats stats = frame_stats(result.corrected);
    const double uniformity = stats.mean > 0 ? stats.stddev / stats.mean : 0.0;
    uniformity_sum += uniformity;
    frames.push_back({{"id", stem}, {"mean", stats.mean}, {"stddev", stats.stddev}, {"uniformity", uniformity}});
  }

  if (dataset_mode) {
    if (fs::is_directory(a.input / "labels")) {
      fs::create_directories(a.output / "labels");
      for (const auto& entry : fs::directory_iterator(a.input / "labels")) {
        if (entry.path().extension() == ".txt") {
          fs::copy_file(entry.path(), a.output / "labels" / entry.path().filename(),
                        fs::copy_options::overwrite_existing);
        }
      }
    }
    if (fs::exists(a.input / "tags.json")) {
      fs::copy_file(a.input / "tags.json", a.output / "tags.json", fs::copy_options::overwrite_existing);
    }
  }
  log.info("corrected " + std::to_string(files.size()) + " frames");

  std::size_t runtime_bad = 0;
  for (std::size_t i = 0; i < pipeline.mask().geometry().pixel_count(); ++i) {
    if (pipeline.mask().source(i) == BadPixelSource::runtime) ++runtime_bad;
  }
  emit({{"command", "correct"},
        {"frames", files.size()},
        {"stages",
         {{"nuc", config.stages.nuc}, {"gain", config.stages.gain}, {"bpr", config.stages.bpr}, {"td", config.stages.td}}},
        {"calibration_bad_pixels", config.calibration.bad_count()},
        {"runtime_bad_pixels", runtime_bad},
        {"mean_uniformity", uniformity_sum / static_cast<double>(files.size())},
        {"per_frame", frames}},
       g, out);
  return kExitOk;
}

struct DetectorSet {
  std::vector<std::unique_ptr<Detector>> owned;
  std::vector<Detector*> members;
  Strategy strategy = Strategy::na;
  double fusion_iou = 0.5;
};

DetectorSet make_detectors(const DetectorArgs& a, const GlobalOptions& g, int class_count) {
  DetectorSet set;
  set.strategy = parse_strategy(a.strategy);
  set.fusion_iou = a.fusion_iou;
  for (const auto& text : a.stubs) {
    StubSpec spec = parse_stub_spec(text);
    if (text.find("seed=") == std::string::npos) spec.seed = g.seed;
    spec.class_count = class_count;
    set.owned.push_back(std::make_unique<StubDetector>(spec));
  }
  for (const auto& cmd : a.commands) {
    ExternalSpec spec;
    spec.command = cmd;
    spec.timeout = std::chrono::milliseconds(a.timeout_ms);
    spec.class_count = class_count;
    set.owned.push_back(std::make_unique<ExternalDetector>(spec));
  }
  for (auto& d : set.owned) set.members.push_back(d.get());
  return set;
}

std::vector<std::vector<Detection>> detect_all(DetectorSet& detectors, const Dataset& ds, double conf) {
  std::vector<std::vector<Detection>> out;
  out.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    const ImageInput input{s.id, s.image, s.truths};
    out.push_back(run_strategy(detectors.strategy, detectors.members, input, conf, detectors.fusion_iou));
  }
  return out;
}

int run_evaluate(const EvaluateArgs& a, const GlobalOptions& g, std::ostream& out, const Logger& log) {
  const Dataset ds = load_dataset(a.dataset);
  DetectorSet detectors = make_detectors(a.detector, g, ds.scheme.size());
  const ApConvention convention = a.eleven_point ? ApConvention::eleven_point : ApConvention::all_point;

  json report = {{"command", "evaluate"},
                 {"strategy", to_string(detectors.strategy)},
                 {"detectors", detectors.members.size()},
                 {"fusion_iou", detectors.fusion_iou},
                 {"images", ds.samples.size()}};
  std::vector<std::string> csv;
  if (a.threshold_grid) {
    double lowest = 1.0;
    for (const auto& [conf, iou_thr] : kThresholdGrid) lowest = std::min(lowest, conf);
    const auto dets = detect_all(detectors, ds, lowest);
    json grid = json::array();
    for (const auto& [conf, iou_thr] : kThresholdGrid) {
      const EvalReport r = evaluate(dets, ds, {conf, iou_thr, convention});
      grid.push_back(to_json(r));
      csv.push_back(csv_row(r));
      log.info("grid conf=" + std::to_string(conf) + " iou=" + std::to_string(iou_thr) +
               " mAP=" + std::to_string(r.map));
    }
    report["grid"] = grid;
  } else {
    const auto dets = detect_all(detectors, ds, a.conf);
    const EvalReport r = evaluate(dets, ds, {a.conf, a.iou, convention});
    if (r.precision_undefined) log.warn("no detections survived the confidence cutoff; precision reported as 0");
    report["evaluation"] = to_json(r);
    csv.push_back(csv_row(r));
  }
  emit(report, g, out);
  emit_csv(csv, g);
  return kExitOk;
}

int run_bench(const BenchArgs& a, const GlobalOptions& g, std::ostream& out, const Logger& log) {
  std::vector<ImageInput> inputs;
  int class_count = ClassScheme().size();
  if (fs::is_directory(a.frames / "images")) {
    const Dataset ds = load_dataset(a.frames);
    class_count = ds.scheme.size();
    for (const Sample& s : ds.samples) inputs.push_back({s.id, s.image, s.truths});
  } else {
    for (const auto& p : list_images(a.frames)) inputs.push_back({p.stem().string(), p, {}});
  }
  if (inputs.empty()) throw std::runtime_error("no frames to benchmark in " + a.frames.string());

  DetectorSet detectors = make_detectors(a.detector, g, class_count);
  BenchOptions options;
  options.warmup = a.warmup;
  BenchReport bench = measure_fps_indexed(
      [&](std::size_t i) {
        run_strategy(detectors.strategy, detectors.members, inputs[i], a.conf, detectors.fusion_iou);
      },
      inputs.size(), options);
  if (a.baseline) bench.speedup_vs_baseline = compare_speedup(bench, load_bench_report(*a.baseline));
  log.info("measured " + std::to_string(bench.fps_exact) + " fps over " + std::to_string(bench.frame_count) +
           " frames");

  json report = {{"command", "bench"},
                 {"strategy", to_string(detectors.strategy)},
                 {"detectors", detectors.members.size()},
                 {"bench", to_json(bench)}};
  if (a.thermal) {
    std::ifstream in(*a.thermal);
    if (!in) throw std::runtime_error("cannot read thermal snapshot " + a.thermal->string());
    std::stringstream text;
    text << in.rdbuf();
    const auto readings = parse_thermal_zones(text.str());
    ThermalLimits limits;
    limits.fallback = {a.warn_celsius, a.critical_celsius};
    const ThrottleStatus status = throttle_check(readings, limits);
    if (status.no_readings) log.warn("thermal snapshot holds no readings");
    if (status.implausible_reading) log.warn("thermal snapshot holds a reading outside [-40, 150] degC");
    report["thermal"] = to_json(status);
  }
  emit(report, g, out);
  char fps[64];
  std::snprintf(fps, sizeof fps, ",,,%.2f", bench.fps_exact);
  emit_csv({fps}, g);
  return kExitOk;
}

int run_dataset_stats(const DatasetStatsArgs& a, const GlobalOptions& g, std::ostream& out, const Logger&) {
  const ClassScheme scheme = a.classes.empty() ? ClassScheme() : ClassScheme(a.classes);
  const Dataset ds = load_dataset(a.dataset, scheme);
  const DatasetStats stats = dataset_stats(ds);
  json report = to_json(stats, scheme);
  report["command"] = "dataset-stats";
  emit(report, g, out);
  return kExitOk;
}

void add_detector_options(CLI::App* sub, DetectorArgs& d) {
  sub->add_option("--detector", d.commands, "External adapter command (repeat for ensembles)");
  sub->add_option("--stub", d.stubs, "Stub detector spec, e.g. drop=0.3,jitter=0.05,conf=0.4:0.95,fp=1");
  sub->add_option("--strategy", d.strategy, "Inference strategy")->check(CLI::IsMember({"na", "tta", "ensemble"}));
  sub->add_option("--fusion-iou", d.fusion_iou, "NMS IoU threshold for fusing predictions")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--timeout-ms", d.timeout_ms, "Adapter response timeout")->check(CLI::PositiveNumber);
}

void check_detectors(const DetectorArgs& d) {
  if (d.commands.empty() && d.stubs.empty()) throw UsageError("at least one --detector or --stub is required", kExitUsage);
  for (const auto& s : d.stubs) {
    try {
      parse_stub_spec(s);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--stub: ") + e.what(), kExitUsage);
    }
  }
}

}  // namespace

Command parse_args(const std::vector<std::string>& argv) {
  CLI::App app{"Thermal imaging correction, detection evaluation and benchmarking toolkit", "thermopipe"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.allow_extras(false);

  Command cmd;
  GlobalOptions& g = cmd.global;
  std::string config, out, csv;
  app.add_option("--config", config, "Pipeline configuration JSON (correct)");
  app.add_option("--out", out, "Write the JSON report here instead of standard output");
  app.add_option("--csv", csv, "Also write a P%,R%,mAP%,FPS CSV row to this file");
  app.add_option("--seed", g.seed, "Seed for synthetic data and stub detectors");
  app.add_flag("-v,--verbose", g.verbosity, "Increase log verbosity (repeatable)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic sensor, reference stacks and an annotated dataset");
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  s->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height)->check(CLI::PositiveNumber);
  s->add_option("--images", synth.images, "Annotated scene frames to render");
  s->add_option("--ref-frames", synth.ref_frames, "Frames per reference stack")->check(CLI::PositiveNumber);
  s->add_option("--noise", synth.noise, "Temporal noise sigma (ADU)")->check(CLI::NonNegativeNumber);
  s->add_option("--bad-pixels", synth.bad_pixels, "Defective pixels to inject");
  s->add_option("--t-cold", synth.t_cold)->check(CLI::Range(0.0, 60.0));
  s->add_option("--t-hot", synth.t_hot)->check(CLI::Range(0.0, 60.0));
  s->add_option("--t-check", synth.t_check)->check(CLI::Range(0.0, 60.0));
  s->add_option("--background", synth.background)->check(CLI::Range(0.0, 60.0));
  s->add_option("--max-objects", synth.max_objects)->check(CLI::Range(1, 50));

  CalibrateArgs cal;
  std::string check;
  std::size_t select = 0;
  auto* c = app.add_subcommand("calibrate", "Build a two-point NUC calibration from blackbody stacks");
  c->add_option("--cold", cal.cold, "Directory of cold reference frames")->required();
  c->add_option("--hot", cal.hot, "Directory of hot reference frames")->required();
  c->add_option("--check", check, "Held-out uniform stack used to validate the calibration");
  c->add_option("--t-cold", cal.t_cold);
  c->add_option("--t-hot", cal.t_hot);
  c->add_option("--select", select, "Keep only the N most uniform frames of each stack")->check(CLI::PositiveNumber);
  c->add_option("--output", cal.output, "Calibration JSON to write")->required();
  c->add_option("--dead-response", cal.dead_response)->check(CLI::NonNegativeNumber);
  c->add_option("--gain-min", cal.gain_min)->check(CLI::PositiveNumber);
  c->add_option("--gain-max", cal.gain_max)->check(CLI::PositiveNumber);
  c->add_option("--max-bad-fraction", cal.max_bad_fraction)->check(CLI::Range(0.0, 1.0));

  CorrectArgs cor;
  std::string calibration;
  auto* r = app.add_subcommand("correct", "Run the correction pipeline over a directory of raw frames");
  r->add_option("--calibration", calibration, "Calibration JSON (overrides the one named in --config)");
  r->add_option("--input", cor.input, "Frame directory or dataset root")->required();
  r->add_option("--output", cor.output, "Output directory")->required();
  r->add_flag("--write-corrected", cor.write_corrected, "Also store 16-bit corrected frames");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a detector on a YOLO-format dataset");
  e->add_option("--dataset", ev.dataset, "Dataset root (images/, labels/, tags.json)")->required();
  add_detector_options(e, ev.detector);
  e->add_option("--conf", ev.conf, "Confidence threshold")->check(CLI::Range(0.0, 1.0));
  e->add_option("--iou", ev.iou, "IoU threshold for matching")->check(CLI::Range(0.0, 1.0));
  e->add_flag("--threshold-grid", ev.threshold_grid, "Evaluate at (0.4,0.6), (0.2,0.4) and (0.1,0.2)");
  e->add_flag("--eleven-point", ev.eleven_point, "Use 11-point interpolated AP instead of all-point");

  BenchArgs bn;
  std::string thermal, baseline;
  auto* b = app.add_subcommand("bench", "Measure detector throughput and check thermal headroom");
  b->add_option("--frames", bn.frames, "Frame directory or dataset root")->required();
  add_detector_options(b, bn.detector);
  b->add_option("--conf", bn.conf, "Confidence threshold")->check(CLI::Range(0.0, 1.0));
  b->add_option("--iou", bn.detector.fusion_iou, "Fusion IoU threshold")->check(CLI::Range(0.0, 1.0));
  b->add_option("--warmup", bn.warmup, "Untimed warm-up frames");
  b->add_option("--thermal", thermal, "Thermal zone snapshot ('<zone> <millidegrees>' lines)");
  b->add_option("--baseline", baseline, "Baseline bench report JSON for the speedup figure");
  b->add_option("--warn-celsius", bn.warn_celsius, "Warning limit for every zone");
  b->add_option("--critical-celsius", bn.critical_celsius, "Critical limit for every zone");

  DatasetStatsArgs ds;
  std::string classes;
  auto* d = app.add_subcommand("dataset-stats", "Class and tag statistics of a YOLO-format dataset");
  d->add_option("--dataset", ds.dataset, "Dataset root")->required();
  d->add_option("--classes", classes, "Comma-separated class names overriding the default scheme");

  if (!argv.empty() && !argv.front().empty() && argv.front().front() != '-' &&
      app.get_subcommands([&](const CLI::App* sub) { return sub->check_name(argv.front()); }).empty()) {
    throw UsageError("unknown subcommand '" + argv.front() + "'\navailable subcommands: " + kSubcommands, kExitUsage);
  }
  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help(), kExitOk);
  } catch (const CLI::CallForAllHelp&) {
    throw UsageError(app.help("", CLI::AppFormatMode::All), kExitOk);
  } catch (const CLI::ParseError& err) {
    std::string message = err.what();
    if (app.get_subcommands().empty()) message += "\navailable subcommands: " + std::string(kSubcommands);
    throw UsageError(message + "\nrun 'thermopipe --help' for usage", kExitUsage);
  }

  if (!config.empty()) g.config = abs_path(config);
  if (!out.empty()) g.out = abs_path(out);
  if (!csv.empty()) g.csv = abs_path(csv);

  if (s->parsed()) {
    cmd.name = "synth";
    synth.out_dir = abs_path(synth.out_dir);
    if (!(synth.t_cold < synth.t_hot)) throw UsageError("--t-cold must be below --t-hot", kExitUsage);
    cmd.args = synth;
  } else if (c->parsed()) {
    cmd.name = "calibrate";
    cal.cold = abs_path(cal.cold);
    cal.hot = abs_path(cal.hot);
    cal.output = abs_path(cal.output);
    if (!check.empty()) cal.check = abs_path(check);
    if (select > 0) cal.select = select;
    if (!(cal.t_cold < cal.t_hot)) throw UsageError("--t-cold must be below --t-hot", kExitUsage);
    if (!(cal.gain_min < cal.gain_max)) throw UsageError("--gain-min must be below --gain-max", kExitUsage);
    cmd.args = cal;
  } else if (r->parsed()) {
    cmd.name = "correct";
    cor.input = abs_path(cor.input);
    cor.output = abs_path(cor.output);
    if (!calibration.empty()) cor.calibration = abs_path(calibration);
    if (!cor.calibration && !g.config) throw UsageError("correct needs --calibration or --config", kExitUsage);
    cmd.args = cor;
  } else if (e->parsed()) {
    cmd.name = "evaluate";
    ev.dataset = abs_path(ev.dataset);
    check_detectors(ev.detector);
    cmd.args = ev;
  } else if (b->parsed()) {
    cmd.name = "bench";
    bn.frames = abs_path(bn.frames);
    if (!thermal.empty()) bn.thermal = abs_path(thermal);
    if (!baseline.empty()) bn.baseline = abs_path(baseline);
    if (!(bn.warn_celsius <= bn.critical_celsius)) {
      throw UsageError("--warn-celsius must not exceed --critical-celsius", kExitUsage);
    }
    check_detectors(bn.detector);
    cmd.args = bn;
  } else if (d->parsed()) {
    cmd.name = "dataset-stats";
    ds.dataset = abs_path(ds.dataset);
    std::stringstream ss(classes);
    for (std::string name; std::getline(ss, name, ',');) {
      if (!name.empty()) ds.classes.push_back(name);
    }
    cmd.args = ds;
  }
  return cmd;
}

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  const Logger log(err, cmd.global.verbosity);
  try {
    return std::visit(
        [&](const auto& args) -> int {
          using T = std::decay_t<decltype(args)>;
          if constexpr (std::is_same_v<T, SynthArgs>) return run_synth(args, cmd.global, out, log);
          if constexpr (std::is_same_v<T, CalibrateArgs>) return run_calibrate(args, cmd.global, out, log);
          if constexpr (std::is_same_v<T, CorrectArgs>) return run_correct(args, cmd.global, out, log);
          if constexpr (std::is_same_v<T, EvaluateArgs>) return run_evaluate(args, cmd.global, out, log);
          if constexpr (std::is_same_v<T, BenchArgs>) return run_bench(args, cmd.global, out, log);
          if constexpr (std::is_same_v<T, DatasetStatsArgs>) return run_dataset_stats(args, cmd.global, out, log);
        },
        cmd.args);
  } catch (const DetectorError& e) {
    err << "thermopipe " << cmd.name << ": " << e.what() << '\n';
    if (!e.diagnostics().empty()) err << "adapter stderr:\n" << e.diagnostics() << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "thermopipe " << cmd.name << ": " << e.what() << '\n';
    return kExitDomainError;
  }
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_args(argv);
  } catch (const UsageError& e) {
    (e.exit_code() == kExitOk ? out : err) << e.what() << '\n';
    return e.exit_code();
  }
  return execute(cmd, out, err);
}

}  // namespace thermopipe::cli
