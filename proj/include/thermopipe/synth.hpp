#pragma once

// Synthetic microbolometer with known per-pixel truth. Every generator is a pure
// function of (seed, parameters, frame index), so Monte-Carlo checks reproduce
// bit-for-bit on any platform (see rng.hpp for the generator definition).

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "thermopipe/boxes.hpp"
#include "thermopipe/frame.hpp"
#include "thermopipe/rng.hpp"

namespace thermopipe::synth {

inline constexpr double kMinTemperature = 0.0;
inline constexpr double kMaxTemperature = 60.0;

/// Ideal response in ADU: 1000 + 50 ADU/degC, linear over [0, 60] degC.
constexpr double base_response(double celsius) { return 1000.0 + 50.0 * celsius; }

enum class FailureMode { stuck_high, stuck_low, erratic };

struct BadPixel {
  std::size_t x = 0;
  std::size_t y = 0;
  FailureMode mode = FailureMode::stuck_high;

  bool operator==(const BadPixel&) const = default;
};

struct SensorParams {
  Geometry geometry;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double offset_min = -200.0;
  double offset_max = 200.0;
  std::size_t bad_count = 0;
  /// Failure modes drawn uniformly for each bad pixel.
  std::vector<FailureMode> bad_modes{FailureMode::stuck_high, FailureMode::stuck_low};
  double noise_sigma = 0.0;
  /// When > 0, gains are snapped to multiples of this step and offsets to whole
  /// ADU, which keeps the noiseless response integer-valued at suitable temperatures.
  double gain_quantum = 0.0;
};

struct SensorTruth {
  Geometry geometry;
  std::vector<double> gain_truth;
  std::vector<double> offset_truth;
  std::vector<BadPixel> bad_pixels;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Noise-free response of pixel `index` at `celsius`, before 16-bit clamping.
  double response(std::size_t index, double celsius) const {
    return base_response(celsius) * gain_truth[index] + offset_truth[index];
  }
};

struct SceneObject {
  int class_id = 0;
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.1;
  double h = 0.1;
  double apparent_temperature = 36.0;
};

SensorTruth make_sensor(std::uint64_t seed, const SensorParams& params);

/// Generator for frame `frame_index`; streams for distinct indices are independent.
CounterRng frame_rng(const SensorTruth& sensor, std::uint64_t frame_index);

RawFrame uniform_frame(const SensorTruth& sensor, double celsius, CounterRng& rng);
/// Convenience form drawing noise from frame_rng(sensor, frame_index).
RawFrame uniform_frame(const SensorTruth& sensor, double celsius, std::uint64_t frame_index);

/// Renders objects as rectangular patches (painter's order: later objects win)
/// over a uniform background; the returned truths echo the objects.
std::pair<RawFrame, std::vector<GroundTruthBox>> scene_frame(const SensorTruth& sensor,
                                                             const std::vector<SceneObject>& objects,
                                                             double background_celsius,
                                                             CounterRng& rng);

/// Random object layout for image `index`: 1..max_objects boxes of random class.
std::vector<SceneObject> random_objects(std::uint64_t seed, std::uint64_t index, int max_objects,
                                        int class_count = 6);

void save_sensor_truth(const SensorTruth& sensor, const std::filesystem::path& json_path);
SensorTruth load_sensor_truth(const std::filesystem::path& json_path);

}  // namespace thermopipe::synth
