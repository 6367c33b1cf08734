#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermopipe {

/// Raised for malformed input files, mismatched geometry and similar data errors.
class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kSensorWidth = 640;
inline constexpr std::size_t kSensorHeight = 480;

struct Geometry {
  std::size_t width = kSensorWidth;
  std::size_t height = kSensorHeight;

  std::size_t pixel_count() const { return width * height; }
  bool operator==(const Geometry&) const = default;
};

/// 16-bit sensor frame in ADU, row-major.
class RawFrame {
 public:
  RawFrame() = default;
  RawFrame(std::size_t width, std::size_t height, std::vector<std::uint16_t> samples,
           std::uint64_t frame_index = 0);
  RawFrame(std::size_t width, std::size_t height, std::uint16_t fill = 0,
           std::uint64_t frame_index = 0);

  std::size_t width() const { return geometry_.width; }
  std::size_t height() const { return geometry_.height; }
  const Geometry& geometry() const { return geometry_; }
  std::uint64_t frame_index() const { return frame_index_; }
  void set_frame_index(std::uint64_t index) { frame_index_ = index; }

  std::span<const std::uint16_t> samples() const { return samples_; }
  std::span<std::uint16_t> samples() { return samples_; }
  std::uint16_t at(std::size_t x, std::size_t y) const { return samples_[y * geometry_.width + x]; }
  std::uint16_t& at(std::size_t x, std::size_t y) { return samples_[y * geometry_.width + x]; }

  bool operator==(const RawFrame&) const = default;

 private:
  Geometry geometry_{0, 0};
  std::vector<std::uint16_t> samples_;
  std::uint64_t frame_index_ = 0;
};

/// Real-valued frame produced by the correction chain.
class CorrectedFrame {
 public:
  CorrectedFrame() = default;
  CorrectedFrame(std::size_t width, std::size_t height, std::vector<double> values);
  CorrectedFrame(std::size_t width, std::size_t height, double fill = 0.0);

  static CorrectedFrame from_raw(const RawFrame& raw);

  std::size_t width() const { return geometry_.width; }
  std::size_t height() const { return geometry_.height; }
  const Geometry& geometry() const { return geometry_; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double at(std::size_t x, std::size_t y) const { return values_[y * geometry_.width + x]; }
  double& at(std::size_t x, std::size_t y) { return values_[y * geometry_.width + x]; }

  bool operator==(const CorrectedFrame&) const = default;

 private:
  Geometry geometry_{0, 0};
  std::vector<double> values_;
};

/// 8-bit display image.
class DisplayFrame {
 public:
  DisplayFrame() = default;
  DisplayFrame(std::size_t width, std::size_t height, std::vector<std::uint8_t> bytes);

  std::size_t width() const { return geometry_.width; }
  std::size_t height() const { return geometry_.height; }
  const Geometry& geometry() const { return geometry_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

  bool operator==(const DisplayFrame&) const = default;

 private:
  Geometry geometry_{0, 0};
  std::vector<std::uint8_t> bytes_;
};

struct FrameStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

// Population statistics (divide by N).
FrameStats frame_stats(std::span<const double> values);
FrameStats frame_stats(const RawFrame& frame);
FrameStats frame_stats(const CorrectedFrame& frame);

/// Reads a 16-bit grayscale frame. Binary PGM (P5, maxval 65535) and 16-bit
/// single-channel PNG are accepted; samples are returned without rescaling.
RawFrame load_frame_16(const std::filesystem::path& path);

/// Writes a 16-bit binary PGM, big-endian samples.
void store_frame_16(const RawFrame& frame, const std::filesystem::path& path);

/// 8-bit binary PGM (maxval 255).
void store_frame_8(const DisplayFrame& frame, const std::filesystem::path& path);
DisplayFrame load_frame_8(const std::filesystem::path& path);

}  // namespace thermopipe
