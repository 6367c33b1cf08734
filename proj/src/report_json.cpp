#include "thermopipe/report_json.hpp"

#include <fstream>

namespace thermopipe {

nlohmann::json to_json(const FrameStats& stats) {
  return {{"min", stats.min}, {"max", stats.max}, {"mean", stats.mean}, {"stddev", stats.stddev}};
}

nlohmann::json to_json(const Detection& det) {
  return {{"class_id", det.class_id}, {"cx", det.cx}, {"cy", det.cy},
          {"w", det.w},               {"h", det.h},   {"confidence", det.confidence}};
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassReport& c : report.classes) {
    classes.push_back({{"class_id", c.class_id},
                       {"name", c.name},
                       {"truths", c.truths},
                       {"detections", c.detections},
                       {"true_positives", c.true_positives},
                       {"ap", c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr)}});
  }
  return {{"config",
           {{"conf_threshold", report.config.conf_threshold},
            {"iou_threshold", report.config.iou_threshold},
            {"ap_convention", report.config.ap_convention == ApConvention::all_point ? "all-point" : "11-point"}}},
          {"frame_count", report.frame_count},
          {"precision", report.precision},
          {"precision_undefined", report.precision_undefined},
          {"recall", report.recall},
          {"map", report.map},
          {"true_positives", report.true_positives},
          {"false_positives", report.false_positives},
          {"false_negatives", report.false_negatives},
          {"classes", classes}};
}

nlohmann::json to_json(const DatasetStats& stats, const ClassScheme& scheme) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < stats.class_instances.size(); ++c) {
    classes[scheme.name(static_cast<int>(c))] = stats.class_instances[c];
  }
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [tag, share] : stats.tags) tags[tag] = {{"count", share.count}, {"percent", share.percent}};
  return {{"image_count", stats.image_count}, {"box_count", stats.box_count}, {"class_instances", classes},
          {"tags", tags}};
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json j = {{"frame_count", report.frame_count},
                      {"total_ms", report.total_ms},
                      {"seconds_per_frame", report.seconds_per_frame},
                      {"fps_exact", report.fps_exact},
                      {"fps_rounded", report.fps_rounded},
                      {"latency_ms", {{"p50", report.p50_ms}, {"p90", report.p90_ms}, {"p99", report.p99_ms}}},
                      {"warmup_frames", report.warmup_frames}};
  j["speedup_vs_baseline"] = report.speedup_vs_baseline ? nlohmann::json(*report.speedup_vs_baseline) : nullptr;
  return j;
}

nlohmann::json to_json(const ThrottleStatus& status) {
  nlohmann::json zones = nlohmann::json::array();
  for (const ZoneStatus& z : status.zones) {
    zones.push_back({{"zone", z.reading.zone},
                     {"celsius", z.reading.celsius},
                     {"status", to_string(z.severity)},
                     {"implausible", z.implausible}});
  }
  return {{"overall", to_string(status.overall)},
          {"no_readings", status.no_readings},
          {"implausible_reading", status.implausible_reading},
          {"zones", zones}};
}

BenchReport bench_report_from_json(const nlohmann::json& doc) {
  const nlohmann::json& j = doc.contains("bench") ? doc.at("bench") : doc;
  try {
    BenchReport r = make_bench_report(j.at("frame_count").get<std::uint64_t>(), j.at("total_ms").get<double>());
    if (j.contains("latency_ms")) {
      r.p50_ms = j["latency_ms"].at("p50").get<double>();
      r.p90_ms = j["latency_ms"].at("p90").get<double>();
      r.p99_ms = j["latency_ms"].at("p99").get<double>();
    }
    r.warmup_frames = j.value("warmup_frames", std::uint64_t{0});
    if (j.contains("speedup_vs_baseline") && !j["speedup_vs_baseline"].is_null()) {
      r.speedup_vs_baseline = j["speedup_vs_baseline"].get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed bench report: ") + e.what());
  }
}

BenchReport load_bench_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open bench report " + path.string());
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw std::invalid_argument(path.string() + ": malformed JSON");
  return bench_report_from_json(doc);
}

}  // namespace thermopipe
