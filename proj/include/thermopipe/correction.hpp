#pragma once

// Post-NUC correction chain: flat-field gain, bad pixel replacement, temporal
// denoising and AGC display mapping. Stage order is fixed:
//   NUC -> gain -> bad pixel scan/repair -> temporal denoise -> display.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "thermopipe/frame.hpp"
#include "thermopipe/nuc.hpp"

namespace thermopipe {

struct GainMap {
  Geometry geometry;
  std::vector<double> gain;
};

/// map_i = scene_mean(avg) / avg_i, avg being the per-pixel mean over the frames.
GainMap build_gain_map(std::span<const CorrectedFrame> uniform_frames);
CorrectedFrame apply_gain_map(const GainMap& map, const CorrectedFrame& frame);
void save_gain_map(const GainMap& map, const std::filesystem::path& json_path);
GainMap load_gain_map(const std::filesystem::path& json_path);

struct AgcParams {
  double low_percentile = 1.0;
  double high_percentile = 99.0;

  void validate() const;
};

/// Linear stretch of [p_low, p_high] onto [0, 255], clamped, ties rounded to
/// even. A frame with p_low == p_high maps to constant 128.
DisplayFrame agc_display(const CorrectedFrame& frame, const AgcParams& params);

enum class BadPixelSource : std::uint8_t { good = 0, calibration = 1, runtime = 2 };

class BadPixelMask {
 public:
  BadPixelMask() = default;
  explicit BadPixelMask(Geometry geometry, double max_bad_fraction = 0.05);
  static BadPixelMask from_calibration(const CalibrationSet& cal);

  const Geometry& geometry() const { return geometry_; }
  bool is_bad(std::size_t index) const { return entries_[index] != BadPixelSource::good; }
  bool is_bad(std::size_t x, std::size_t y) const { return is_bad(y * geometry_.width + x); }
  BadPixelSource source(std::size_t index) const { return entries_[index]; }
  std::size_t bad_count() const { return bad_count_; }
  double max_bad_fraction() const { return max_bad_fraction_; }

  /// Calibration-time entries are never downgraded to runtime. Throws when the
  /// mask would exceed max_bad_fraction.
  void mark(std::size_t index, BadPixelSource source);

  bool operator==(const BadPixelMask&) const = default;

 private:
  Geometry geometry_{0, 0};
  std::vector<BadPixelSource> entries_;
  std::size_t bad_count_ = 0;
  double max_bad_fraction_ = 0.05;
};

struct BprParams {
  double threshold = 300.0;  // ADU deviation from the neighbourhood median
  unsigned confirm = 3;      // consecutive deviating frames before flagging
};

/// Per-pixel count of consecutive deviating frames.
struct ConfirmationHistory {
  std::vector<std::uint32_t> counts;
};

/// Flags pixels that deviate from the median of their valid 8-neighbours by
/// more than params.threshold for params.confirm consecutive frames.
BadPixelMask scan_bad_pixels(const CorrectedFrame& frame, const BadPixelMask& mask, const BprParams& params,
                             ConfirmationHistory& history);

/// Replaces each bad pixel by the median of its good 8-neighbours, falling back
/// to the good pixels of the surrounding 5x5 ring.
CorrectedFrame repair_bad_pixels(const CorrectedFrame& frame, const BadPixelMask& mask);

enum class DenoiseMode { windowed, exponential };

struct DenoiseParams {
  DenoiseMode mode = DenoiseMode::windowed;
  std::size_t window = 4;
  double alpha = 0.5;

  void validate() const;
};

class TemporalDenoiseState {
 public:
  explicit TemporalDenoiseState(DenoiseParams params = {});

  /// Windowed: mean of the last min(n_seen, N) frames, summed oldest first.
  /// Exponential: acc = alpha * frame + (1 - alpha) * acc, seeded by the first frame.
  CorrectedFrame step(const CorrectedFrame& frame);

  const DenoiseParams& params() const { return params_; }
  std::size_t frames_seen() const { return n_seen_; }
  const std::deque<CorrectedFrame>& window() const { return window_; }

 private:
  DenoiseParams params_;
  std::deque<CorrectedFrame> window_;
  std::vector<double> accumulator_;
  Geometry geometry_{0, 0};
  std::size_t n_seen_ = 0;
};

inline CorrectedFrame temporal_denoise_step(TemporalDenoiseState& state, const CorrectedFrame& frame) {
  return state.step(frame);
}

struct StageToggles {
  bool nuc = true;
  bool gain = true;
  bool bpr = true;
  bool td = true;
};

struct PipelineConfig {
  CalibrationSet calibration;
  std::optional<GainMap> gain_map;  // gain stage is identity when absent
  AgcParams agc;
  BprParams bpr;
  DenoiseParams td;
  StageToggles stages;
};

/// Loads a pipeline config document. Relative calibration/gain-map paths are
/// resolved against the document's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Config with an explicit calibration and all other settings at their defaults.
PipelineConfig default_pipeline_config(CalibrationSet calibration);

class PipelineError : public FrameError {
 public:
  PipelineError(std::uint64_t frame_index, const std::string& what);
  std::uint64_t frame_index() const { return frame_index_; }

 private:
  std::uint64_t frame_index_;
};

struct PipelineOutput {
  std::uint64_t frame_index = 0;
  CorrectedFrame corrected;
  DisplayFrame display;
};

/// Streaming form of run_pipeline: one instance per stream.
class CorrectionPipeline {
 public:
  explicit CorrectionPipeline(PipelineConfig config);

  PipelineOutput process(const RawFrame& raw);
  const BadPixelMask& mask() const { return mask_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  BadPixelMask mask_;
  ConfirmationHistory history_;
  TemporalDenoiseState denoise_;
};

std::vector<PipelineOutput> run_pipeline(const PipelineConfig& config, std::span<const RawFrame> frames);

}  // namespace thermopipe
