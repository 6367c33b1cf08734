#pragma once

// Shutterless two-point non-uniformity correction from blackbody reference stacks.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "thermopipe/frame.hpp"

namespace thermopipe {

class CalibrationError : public FrameError {
 public:
  using FrameError::FrameError;
};

/// Frames of one uniform blackbody scene.
struct ReferenceStack {
  std::vector<RawFrame> frames;
  double nominal_temperature = 0.0;  // degC
};

struct NucThresholds {
  double dead_response = 2.0;  // ADU; |hot - cold| below this marks a pixel dead
  double gain_min = 0.2;
  double gain_max = 5.0;
  double max_bad_fraction = 0.05;
  double trim_fraction = 0.01;  // trimmed from each tail when computing scene targets
};

struct CalibrationSet {
  Geometry geometry;
  std::vector<double> gain;
  std::vector<double> offset;
  std::vector<std::uint8_t> bad_mask;  // 1 = bad
  double t_cold = 0.0;
  double t_hot = 0.0;
  double target_cold = 0.0;  // scene-mean target at t_cold, ADU
  double target_hot = 0.0;
  NucThresholds thresholds;

  std::size_t bad_count() const;
  /// gain 1, offset 0, no bad pixels.
  static CalibrationSet identity(Geometry geometry);
};

struct UniformityScore {
  double score = 0.0;  // spatial stddev / mean
};

UniformityScore uniformity_score(const RawFrame& frame);

/// The `count` most uniform frames, returned in their original order. Ties on
/// score go to the lower frame_index.
std::vector<RawFrame> select_references(std::span<const RawFrame> stack, std::size_t count);

CalibrationSet build_two_point(const ReferenceStack& cold, const ReferenceStack& hot,
                               const NucThresholds& thresholds = {});

/// value = gain * raw + offset per pixel; bad pixels pass through unchanged.
CorrectedFrame apply_nuc(const CalibrationSet& cal, const RawFrame& raw);

/// Mean over the stack of the corrected frames' spatial stddev / mean, bad
/// pixels excluded. Used to check a held-out reference scene.
double residual_nonuniformity(const CalibrationSet& cal, const ReferenceStack& check);

void save_calibration(const CalibrationSet& cal, const std::filesystem::path& json_path);
CalibrationSet load_calibration(const std::filesystem::path& json_path);

}  // namespace thermopipe
