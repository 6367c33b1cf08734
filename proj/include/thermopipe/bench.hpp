#pragma once

// Throughput measurement with FPS = frames / seconds, plus on-board thermal
// zone snapshots and throttle classification.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace thermopipe {

struct BenchReport {
  std::uint64_t frame_count = 0;
  double total_ms = 0.0;
  double seconds_per_frame = 0.0;
  double fps_exact = 0.0;
  std::int64_t fps_rounded = 0;  // ties to even
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  double p99_ms = 0.0;
  std::uint64_t warmup_frames = 0;
  std::optional<double> speedup_vs_baseline;
};

/// Derives the rate fields from a frame count and elapsed time. Without
/// per-frame latencies the percentiles all equal the mean frame time.
BenchReport make_bench_report(std::uint64_t frame_count, double total_ms, std::vector<double> latencies_ms = {});

class BenchAborted : public std::runtime_error {
 public:
  BenchAborted(const std::string& what, BenchReport partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const BenchReport& partial() const { return partial_; }

 private:
  BenchReport partial_;
};

struct BenchOptions {
  std::size_t warmup = 5;  // untimed runs before the timed loop
};

/// Runs `runner(i)` for i in [0, frame_count) sequentially under a monotonic
/// clock. Warm-up calls cycle through the first frames and are not timed.
BenchReport measure_fps_indexed(const std::function<void(std::size_t)>& runner, std::size_t frame_count,
                                const BenchOptions& options = {});

template <typename Frame, typename Runner>
BenchReport measure_fps(Runner&& runner, std::span<const Frame> frames, const BenchOptions& options = {}) {
  return measure_fps_indexed([&](std::size_t i) { runner(frames[i]); }, frames.size(), options);
}

/// optimized.fps_exact / baseline.fps_exact
double compare_speedup(const BenchReport& optimized, const BenchReport& baseline);

struct ThermalReading {
  std::string zone;
  double celsius = 0.0;

  bool operator==(const ThermalReading&) const = default;
};

inline constexpr double kPlausibleMinCelsius = -40.0;
inline constexpr double kPlausibleMaxCelsius = 150.0;

/// Lines of "<zone-name> <millidegrees>"; blank lines are skipped.
std::vector<ThermalReading> parse_thermal_zones(std::string_view text);
std::string format_thermal_zones(std::span<const ThermalReading> readings);

/// Reads <root>/thermal_zone*/{type,temp} as exposed by Linux sysfs.
std::vector<ThermalReading> read_sysfs_thermal(const std::filesystem::path& root = "/sys/class/thermal");

enum class Severity { ok = 0, warn = 1, critical = 2 };
const char* to_string(Severity severity);

struct ZoneLimit {
  double warn = 70.0;
  double critical = 89.0;
};

struct ThermalLimits {
  ZoneLimit fallback;
  std::map<std::string, ZoneLimit> zones;

  const ZoneLimit& for_zone(const std::string& zone) const;
};

struct ZoneStatus {
  ThermalReading reading;
  Severity severity = Severity::ok;
  bool implausible = false;  // outside [-40, 150] degC
};

struct ThrottleStatus {
  std::vector<ZoneStatus> zones;
  Severity overall = Severity::ok;
  bool no_readings = false;
  bool implausible_reading = false;
};

/// A zone is critical at or above its critical limit, warn at or above its
/// warn limit. The overall status is the worst zone.
ThrottleStatus throttle_check(std::span<const ThermalReading> readings, const ThermalLimits& limits = {});

}  // namespace thermopipe
