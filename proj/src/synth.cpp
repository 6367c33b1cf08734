#include "thermopipe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "map_store.hpp"

namespace thermopipe::synth {

namespace {

constexpr std::uint64_t kTruthStream = 0x5e45'0000'0000'0001ULL;
constexpr std::uint64_t kFrameStreamBase = 0xf4a3'0000'0000'0000ULL;
constexpr std::uint64_t kLayoutStreamBase = 0x1a70'0000'0000'0000ULL;

std::uint16_t clamp16(double v) {
  return static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
}

void check_temperature(double celsius) {
  if (!(celsius >= kMinTemperature && celsius <= kMaxTemperature)) {
    throw std::out_of_range("scene temperature " + std::to_string(celsius) +
                            " degC outside the response model domain [0, 60]");
  }
}

const char* mode_name(FailureMode mode) {
  switch (mode) {
    case FailureMode::stuck_high: return "stuck-high";
    case FailureMode::stuck_low: return "stuck-low";
    case FailureMode::erratic: return "erratic";
  }
  return "?";
}

FailureMode parse_mode(const std::string& name) {
  if (name == "stuck-high") return FailureMode::stuck_high;
  if (name == "stuck-low") return FailureMode::stuck_low;
  if (name == "erratic") return FailureMode::erratic;
  throw std::invalid_argument("unknown failure mode '" + name + "'");
}

/// Fills `frame` with the sensor's response to the per-pixel temperature given by `scene`.
template <typename SceneFn>
RawFrame render(const SensorTruth& sensor, SceneFn&& scene, CounterRng& rng) {
  const std::size_t w = sensor.geometry.width;
  const std::size_t h = sensor.geometry.height;
  std::vector<std::uint16_t> samples(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      double v = sensor.response(i, scene(x, y));
      if (sensor.noise_sigma > 0) v += sensor.noise_sigma * rng.gaussian();
      samples[i] = clamp16(v);
    }
  }
  for (const BadPixel& bad : sensor.bad_pixels) {
    std::uint16_t& s = samples[bad.y * w + bad.x];
    switch (bad.mode) {
      case FailureMode::stuck_high: s = 65535; break;
      case FailureMode::stuck_low: s = 0; break;
      case FailureMode::erratic: s = static_cast<std::uint16_t>(rng.below(65536)); break;
    }
  }
  return RawFrame(w, h, std::move(samples));
}

}  // namespace

SensorTruth make_sensor(std::uint64_t seed, const SensorParams& params) {
  const Geometry g = params.geometry;
  if (g.width == 0 || g.height == 0) throw std::invalid_argument("sensor geometry must be non-zero");
  if (!(params.gain_min > 0 && params.gain_min <= params.gain_max)) {
    throw std::invalid_argument("gain range must be positive and ordered");
  }
  if (!(params.offset_min <= params.offset_max)) throw std::invalid_argument("offset range must be ordered");
  if (!(params.noise_sigma >= 0)) throw std::invalid_argument("noise sigma must be non-negative");
  if (params.bad_count >= g.pixel_count()) {
    throw std::invalid_argument("bad pixel count must be below the pixel count");
  }
  if (params.bad_count > 0 && params.bad_modes.empty()) {
    throw std::invalid_argument("bad pixels requested without failure modes");
  }

  SensorTruth sensor;
  sensor.geometry = g;
  sensor.noise_sigma = params.noise_sigma;
  sensor.seed = seed;
  sensor.gain_truth.resize(g.pixel_count());
  sensor.offset_truth.resize(g.pixel_count());

  CounterRng rng(seed, kTruthStream);
  for (std::size_t i = 0; i < g.pixel_count(); ++i) {
    double gain = rng.uniform(params.gain_min, params.gain_max);
    double offset = rng.uniform(params.offset_min, params.offset_max);
    if (params.gain_quantum > 0) {
      gain = std::clamp(std::round(gain / params.gain_quantum) * params.gain_quantum, params.gain_min,
                        params.gain_max);
      offset = std::round(offset);
    }
    sensor.gain_truth[i] = gain;
    sensor.offset_truth[i] = offset;
  }

  std::set<std::size_t> taken;
  while (sensor.bad_pixels.size() < params.bad_count) {
    const std::size_t index = rng.below(g.pixel_count());
    const FailureMode mode = params.bad_modes[rng.below(params.bad_modes.size())];
    if (!taken.insert(index).second) continue;
    sensor.bad_pixels.push_back({index % g.width, index / g.width, mode});
  }
  return sensor;
}

CounterRng frame_rng(const SensorTruth& sensor, std::uint64_t frame_index) {
  return CounterRng(sensor.seed, kFrameStreamBase + frame_index);
}

RawFrame uniform_frame(const SensorTruth& sensor, double celsius, CounterRng& rng) {
  check_temperature(celsius);
  return render(sensor, [celsius](std::size_t, std::size_t) { return celsius; }, rng);
}

RawFrame uniform_frame(const SensorTruth& sensor, double celsius, std::uint64_t frame_index) {
  CounterRng rng = frame_rng(sensor, frame_index);
  RawFrame frame = uniform_frame(sensor, celsius, rng);
  frame.set_frame_index(frame_index);
  return frame;
}

std::pair<RawFrame, std::vector<GroundTruthBox>> scene_frame(const SensorTruth& sensor,
                                                             const std::vector<SceneObject>& objects,
                                                             double background_celsius,
                                                             CounterRng& rng) {
  check_temperature(background_celsius);
  std::vector<GroundTruthBox> truths;
  truths.reserve(objects.size());
  for (const SceneObject& obj : objects) {
    GroundTruthBox box{obj.class_id, obj.cx, obj.cy, obj.w, obj.h};
    validate_box(box, 6);
    check_temperature(obj.apparent_temperature);
    truths.push_back(box);
  }

  const auto w = static_cast<double>(sensor.geometry.width);
  const auto h = static_cast<double>(sensor.geometry.height);
  auto scene = [&](std::size_t x, std::size_t y) {
    const double px = (static_cast<double>(x) + 0.5) / w;
    const double py = (static_cast<double>(y) + 0.5) / h;
    double t = background_celsius;
    for (const SceneObject& obj : objects) {
      const Corners c = to_corners(obj.cx, obj.cy, obj.w, obj.h);
      if (px >= c.x0 && px < c.x1 && py >= c.y0 && py < c.y1) t = obj.apparent_temperature;
    }
    return t;
  };
  return {render(sensor, scene, rng), std::move(truths)};
}

std::vector<SceneObject> random_objects(std::uint64_t seed, std::uint64_t index, int max_objects,
                                        int class_count) {
  CounterRng rng(seed, kLayoutStreamBase + index);
  const auto n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, max_objects))));
  std::vector<SceneObject> objects;
  for (int k = 0; k < n; ++k) {
    SceneObject obj;
    obj.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(class_count)));
    obj.w = rng.uniform(0.05, 0.3);
    obj.h = rng.uniform(0.05, 0.3);
    obj.cx = rng.uniform(obj.w / 2, 1 - obj.w / 2);
    obj.cy = rng.uniform(obj.h / 2, 1 - obj.h / 2);
    obj.apparent_temperature = rng.uniform(30.0, 45.0);
    objects.push_back(obj);
  }
  return objects;
}

void save_sensor_truth(const SensorTruth& sensor, const std::filesystem::path& json_path) {
  nlohmann::json header;
  header["kind"] = "sensor-truth";
  header["width"] = sensor.geometry.width;
  header["height"] = sensor.geometry.height;
  header["seed"] = sensor.seed;
  header["noise_sigma"] = sensor.noise_sigma;
  header["response_model"] = "adu = (1000 + 50*T) * gain + offset";
  nlohmann::json bad = nlohmann::json::array();
  for (const BadPixel& p : sensor.bad_pixels) bad.push_back({{"x", p.x}, {"y", p.y}, {"mode", mode_name(p.mode)}});
  header["bad_pixels"] = bad;
  detail::MapPayload payload;
  payload.maps["gain"] = sensor.gain_truth;
  payload.maps["offset"] = sensor.offset_truth;
  detail::write_map_file(json_path, header, payload);
}

SensorTruth load_sensor_truth(const std::filesystem::path& json_path) {
  std::ifstream probe(json_path);
  if (!probe) throw FrameError("cannot open " + json_path.string());
  const auto peek = nlohmann::json::parse(probe, nullptr, false);
  if (peek.is_discarded()) throw FrameError(json_path.string() + ": malformed JSON");
  SensorTruth sensor;
  try {
    sensor.geometry = {peek.at("width").get<std::size_t>(), peek.at("height").get<std::size_t>()};
    detail::MapPayload payload;
    const auto header = detail::read_map_file(json_path, sensor.geometry.pixel_count(), payload);
    sensor.seed = header.at("seed").get<std::uint64_t>();
    sensor.noise_sigma = header.at("noise_sigma").get<double>();
    for (const auto& p : header.at("bad_pixels")) {
      sensor.bad_pixels.push_back(
          {p.at("x").get<std::size_t>(), p.at("y").get<std::size_t>(), parse_mode(p.at("mode").get<std::string>())});
    }
    sensor.gain_truth = std::move(payload.maps.at("gain"));
    sensor.offset_truth = std::move(payload.maps.at("offset"));
  } catch (const nlohmann::json::exception& e) {
    throw FrameError(json_path.string() + ": malformed sensor truth: " + e.what());
  } catch (const std::out_of_range&) {
    throw FrameError(json_path.string() + ": sensor truth is missing gain/offset maps");
  }
  return sensor;
}

}  // namespace thermopipe::synth
