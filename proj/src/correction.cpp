#include "thermopipe/correction.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "map_store.hpp"
#include "thermopipe/numeric.hpp"

namespace thermopipe {

namespace {

void require_geometry(const Geometry& expected, const Geometry& actual, const char* what) {
  if (expected != actual) {
    throw FrameError(std::string(what) + ": geometry mismatch (" + std::to_string(actual.width) + "x" +
                     std::to_string(actual.height) + " vs " + std::to_string(expected.width) + "x" +
                     std::to_string(expected.height) + ")");
  }
}

/// Up to 24 neighbour values gathered on the stack.
struct Neighbours {
  std::array<double, 24> values{};
  std::size_t count = 0;

  void push(double v) { values[count++] = v; }

  double median() {
    std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(count));
    const std::size_t mid = count / 2;
    return count % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  }
};

/// Good pixels at Chebyshev distance `radius` from (x, y).
void gather_ring(const CorrectedFrame& frame, const BadPixelMask& mask, std::size_t x, std::size_t y,
                 int radius, Neighbours& out) {
  const auto w = static_cast<long>(frame.width());
  const auto h = static_cast<long>(frame.height());
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (std::max(std::abs(dx), std::abs(dy)) != radius) continue;
      const long nx = static_cast<long>(x) + dx;
      const long ny = static_cast<long>(y) + dy;
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      const auto ux = static_cast<std::size_t>(nx);
      const auto uy = static_cast<std::size_t>(ny);
      if (!mask.is_bad(ux, uy)) out.push(frame.at(ux, uy));
    }
  }
}

const char* mode_name(DenoiseMode mode) { return mode == DenoiseMode::windowed ? "windowed" : "exponential"; }

}  // namespace

GainMap build_gain_map(std::span<const CorrectedFrame> uniform_frames) {
  if (uniform_frames.empty()) throw FrameError("gain map needs at least one uniform frame");
  const Geometry g = uniform_frames.front().geometry();
  std::vector<double> avg(g.pixel_count(), 0.0);
  for (const CorrectedFrame& f : uniform_frames) {
    require_geometry(g, f.geometry(), "build_gain_map");
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += f.values()[i];
  }
  const auto n = static_cast<double>(uniform_frames.size());
  for (double& v : avg) v /= n;
  const double scene_mean = frame_stats(std::span<const double>(avg)).mean;

  GainMap map{g, std::vector<double>(avg.size())};
  for (std::size_t i = 0; i < avg.size(); ++i) {
    if (avg[i] == 0.0) {
      throw FrameError("gain map undefined: pixel " + std::to_string(i) + " averages to zero");
    }
    map.gain[i] = scene_mean / avg[i];
    if (!std::isfinite(map.gain[i]) || map.gain[i] <= 0.0) {
      throw FrameError("gain map entry " + std::to_string(i) + " is not finite and positive");
    }
  }
  return map;
}

CorrectedFrame apply_gain_map(const GainMap& map, const CorrectedFrame& frame) {
  require_geometry(map.geometry, frame.geometry(), "apply_gain_map");
  std::vector<double> out(frame.values().begin(), frame.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= map.gain[i];
  return CorrectedFrame(frame.width(), frame.height(), std::move(out));
}

void save_gain_map(const GainMap& map, const std::filesystem::path& json_path) {
  nlohmann::json header{{"kind", "gain-map"}, {"width", map.geometry.width}, {"height", map.geometry.height}};
  detail::MapPayload payload;
  payload.maps["gain"] = map.gain;
  detail::write_map_file(json_path, header, payload);
}

GainMap load_gain_map(const std::filesystem::path& json_path) {
  std::ifstream probe(json_path);
  if (!probe) throw FrameError("cannot open gain map " + json_path.string());
  const auto peek = nlohmann::json::parse(probe, nullptr, false);
  if (peek.is_discarded() || !peek.contains("width") || !peek.contains("height")) {
    throw FrameError(json_path.string() + ": malformed gain map header");
  }
  GainMap map;
  map.geometry = {peek["width"].get<std::size_t>(), peek["height"].get<std::size_t>()};
  detail::MapPayload payload;
  detail::read_map_file(json_path, map.geometry.pixel_count(), payload);
  if (!payload.maps.contains("gain")) throw FrameError(json_path.string() + ": gain map payload missing");
  map.gain = std::move(payload.maps["gain"]);
  for (double v : map.gain) {
    if (!std::isfinite(v) || v <= 0) throw FrameError(json_path.string() + ": gain map entries must be positive");
  }
  return map;
}

void AgcParams::validate() const {
  if (!(low_percentile >= 0 && low_percentile < high_percentile && high_percentile <= 100)) {
    throw std::invalid_argument("AGC percentiles must satisfy 0 <= low < high <= 100");
  }
}

DisplayFrame agc_display(const CorrectedFrame& frame, const AgcParams& params) {
  params.validate();
  std::vector<double> sorted(frame.values().begin(), frame.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = percentile_sorted(sorted, params.low_percentile);
  const double hi = percentile_sorted(sorted, params.high_percentile);

  std::vector<std::uint8_t> bytes(sorted.size(), 128);
  if (hi > lo) {
    const auto values = frame.values();
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const double mapped = std::clamp((values[i] - lo) * 255.0 / (hi - lo), 0.0, 255.0);
      bytes[i] = static_cast<std::uint8_t>(round_half_even(mapped));
    }
  }
  return DisplayFrame(frame.width(), frame.height(), std::move(bytes));
}

BadPixelMask::BadPixelMask(Geometry geometry, double max_bad_fraction)
    : geometry_(geometry), entries_(geometry.pixel_count(), BadPixelSource::good),
      max_bad_fraction_(max_bad_fraction) {}

BadPixelMask BadPixelMask::from_calibration(const CalibrationSet& cal) {
  BadPixelMask mask(cal.geometry, cal.thresholds.max_bad_fraction);
  for (std::size_t i = 0; i < cal.bad_mask.size(); ++i) {
    if (cal.bad_mask[i]) {
      mask.entries_[i] = BadPixelSource::calibration;
      ++mask.bad_count_;
    }
  }
  return mask;
}

void BadPixelMask::mark(std::size_t index, BadPixelSource source) {
  if (source == BadPixelSource::good) throw std::invalid_argument("cannot mark a pixel good");
  if (entries_[index] != BadPixelSource::good) return;
  if (static_cast<double>(bad_count_ + 1) > max_bad_fraction_ * static_cast<double>(entries_.size())) {
    throw FrameError("bad pixel mask exceeds the allowed fraction of " +
                     std::to_string(max_bad_fraction_ * 100) + "%");
  }
  entries_[index] = source;
  ++bad_count_;
}

BadPixelMask scan_bad_pixels(const CorrectedFrame& frame, const BadPixelMask& mask, const BprParams& params,
                             ConfirmationHistory& history) {
  require_geometry(mask.geometry(), frame.geometry(), "scan_bad_pixels");
  const std::size_t n = frame.geometry().pixel_count();
  if (history.counts.empty()) {
    history.counts.assign(n, 0);
  } else if (history.counts.size() != n) {
    throw FrameError("scan_bad_pixels: confirmation history has the wrong size");
  }

  BadPixelMask updated = mask;
  for (std::size_t y = 0; y < frame.height(); ++y) {
    for (std::size_t x = 0; x < frame.width(); ++x) {
      const std::size_t i = y * frame.width() + x;
      if (mask.is_bad(i)) {
        history.counts[i] = 0;
        continue;
      }
      Neighbours nb;
      gather_ring(frame, mask, x, y, 1, nb);
      if (nb.count == 0 || std::abs(frame.at(x, y) - nb.median()) <= params.threshold) {
        history.counts[i] = 0;
        continue;
      }
      if (++history.counts[i] >= params.confirm) updated.mark(i, BadPixelSource::runtime);
    }
  }
  return updated;
}

CorrectedFrame repair_bad_pixels(const CorrectedFrame& frame, const BadPixelMask& mask) {
  require_geometry(mask.geometry(), frame.geometry(), "repair_bad_pixels");
  if (mask.bad_count() == 0) return frame;
  std::vector<double> out(frame.values().begin(), frame.values().end());
  for (std::size_t y = 0; y < frame.height(); ++y) {
    for (std::size_t x = 0; x < frame.width(); ++x) {
      if (!mask.is_bad(x, y)) continue;
      Neighbours nb;
      gather_ring(frame, mask, x, y, 1, nb);
      if (nb.count == 0) gather_ring(frame, mask, x, y, 2, nb);
      if (nb.count == 0) {
        throw FrameError("bad pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                         ") has no good pixel within its 5x5 neighbourhood");
      }
      out[y * frame.width() + x] = nb.median();
    }
  }
  return CorrectedFrame(frame.width(), frame.height(), std::move(out));
}

void DenoiseParams::validate() const {
  if (mode == DenoiseMode::windowed && window == 0) throw std::invalid_argument("denoise window must be >= 1");
  if (mode == DenoiseMode::exponential && !(alpha > 0 && alpha <= 1)) {
    throw std::invalid_argument("denoise alpha must lie in (0, 1]");
  }
}

TemporalDenoiseState::TemporalDenoiseState(DenoiseParams params) : params_(params) { params_.validate(); }

CorrectedFrame TemporalDenoiseState::step(const CorrectedFrame& frame) {
  if (n_seen_ == 0) {
    geometry_ = frame.geometry();
  } else if (frame.geometry() != geometry_) {
    throw FrameError("temporal denoise: geometry changed mid-stream");
  }
  ++n_seen_;

  if (params_.mode == DenoiseMode::exponential) {
    if (accumulator_.empty()) {
      accumulator_.assign(frame.values().begin(), frame.values().end());
    } else {
      const auto v = frame.values();
      for (std::size_t i = 0; i < accumulator_.size(); ++i) {
        accumulator_[i] = params_.alpha * v[i] + (1.0 - params_.alpha) * accumulator_[i];
      }
    }
    return CorrectedFrame(frame.width(), frame.height(), accumulator_);
  }

  window_.push_back(frame);
  if (window_.size() > params_.window) window_.pop_front();
  std::vector<double> sum(frame.values().size(), 0.0);
  for (const CorrectedFrame& f : window_) {
    const auto v = f.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const auto count = static_cast<double>(window_.size());
  for (double& s : sum) s /= count;
  return CorrectedFrame(frame.width(), frame.height(), std::move(sum));
}

PipelineError::PipelineError(std::uint64_t frame_index, const std::string& what)
    : FrameError("frame " + std::to_string(frame_index) + ": " + what), frame_index_(frame_index) {}

PipelineConfig default_pipeline_config(CalibrationSet calibration) {
  PipelineConfig config;
  config.calibration = std::move(calibration);
  return config;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FrameError("cannot open pipeline config " + path.string());
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw FrameError(path.string() + ": malformed pipeline config");

  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  PipelineConfig config;
  try {
    config.calibration = load_calibration(resolve(doc.at("calibration").get<std::string>()));
    if (doc.contains("gain_map") && !doc["gain_map"].is_null()) {
      config.gain_map = load_gain_map(resolve(doc["gain_map"].get<std::string>()));
    }
    if (doc.contains("agc")) {
      config.agc.low_percentile = doc["agc"].value("low_percentile", config.agc.low_percentile);
      config.agc.high_percentile = doc["agc"].value("high_percentile", config.agc.high_percentile);
    }
    if (doc.contains("bpr")) {
      config.bpr.threshold = doc["bpr"].value("threshold", config.bpr.threshold);
      config.bpr.confirm = doc["bpr"].value("confirm", config.bpr.confirm);
    }
    if (doc.contains("td")) {
      const auto mode = doc["td"].value("mode", std::string(mode_name(config.td.mode)));
      if (mode == "windowed") {
        config.td.mode = DenoiseMode::windowed;
      } else if (mode == "exponential") {
        config.td.mode = DenoiseMode::exponential;
      } else {
        throw FrameError(path.string() + ": unknown td.mode '" + mode + "'");
      }
      config.td.window = doc["td"].value("window", config.td.window);
      config.td.alpha = doc["td"].value("alpha", config.td.alpha);
    }
    if (doc.contains("stages")) {
      const auto& s = doc["stages"];
      config.stages = {s.value("nuc", true), s.value("gain", true), s.value("bpr", true), s.value("td", true)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FrameError(path.string() + ": malformed pipeline config: " + e.what());
  }
  config.agc.validate();
  config.td.validate();
  if (config.bpr.confirm == 0) throw FrameError(path.string() + ": bpr.confirm must be >= 1");
  if (config.gain_map && config.gain_map->geometry != config.calibration.geometry) {
    throw FrameError(path.string() + ": gain map and calibration geometries differ");
  }
  return config;
}

CorrectionPipeline::CorrectionPipeline(PipelineConfig config)
    : config_(std::move(config)),
      mask_(BadPixelMask::from_calibration(config_.calibration)),
      denoise_(config_.td) {
  config_.agc.validate();
}

PipelineOutput CorrectionPipeline::process(const RawFrame& raw) {
  const std::uint64_t index = raw.frame_index();
  try {
    if (raw.geometry() != config_.calibration.geometry) {
      throw FrameError("frame geometry does not match the calibration");
    }
    CorrectedFrame frame = config_.stages.nuc ? apply_nuc(config_.calibration, raw) : CorrectedFrame::from_raw(raw);
    if (config_.stages.gain && config_.gain_map) frame = apply_gain_map(*config_.gain_map, frame);
    if (config_.stages.bpr) {
      mask_ = scan_bad_pixels(frame, mask_, config_.bpr, history_);
      frame = repair_bad_pixels(frame, mask_);
    }
    if (config_.stages.td) frame = denoise_.step(frame);
    DisplayFrame display = agc_display(frame, config_.agc);
    return {index, std::move(frame), std::move(display)};
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(index, e.what());
  }
}

std::vector<PipelineOutput> run_pipeline(const PipelineConfig& config, std::span<const RawFrame> frames) {
  CorrectionPipeline pipeline(config);
  std::vector<PipelineOutput> out;
  out.reserve(frames.size());
  for (const RawFrame& f : frames) out.push_back(pipeline.process(f));
  return out;
}

}  // namespace thermopipe
