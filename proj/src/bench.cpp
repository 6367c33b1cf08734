#include "thermopipe/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "thermopipe/numeric.hpp"

namespace thermopipe {

namespace {

double nearest_rank(const std::vector<double>& sorted, double pct) {
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

BenchReport make_bench_report(std::uint64_t frame_count, double total_ms, std::vector<double> latencies_ms) {
  if (frame_count == 0) throw std::invalid_argument("bench report needs at least one frame");
  if (!(total_ms > 0) || !std::isfinite(total_ms)) throw std::invalid_argument("bench total time must be positive");
  BenchReport r;
  r.frame_count = frame_count;
  r.total_ms = total_ms;
  r.seconds_per_frame = total_ms / 1000.0 / static_cast<double>(frame_count);
  r.fps_exact = static_cast<double>(frame_count) / (total_ms / 1000.0);
  r.fps_rounded = static_cast<std::int64_t>(round_half_even(r.fps_exact));
  if (latencies_ms.empty()) {
    r.p50_ms = r.p90_ms = r.p99_ms = r.seconds_per_frame * 1000.0;
  } else {
    std::sort(latencies_ms.begin(), latencies_ms.end());
    r.p50_ms = nearest_rank(latencies_ms, 50);
    r.p90_ms = nearest_rank(latencies_ms, 90);
    r.p99_ms = nearest_rank(latencies_ms, 99);
  }
  return r;
}

BenchReport measure_fps_indexed(const std::function<void(std::size_t)>& runner, std::size_t frame_count,
                                const BenchOptions& options) {
  if (frame_count == 0) throw std::invalid_argument("measure_fps needs at least one frame");
  static_assert(std::chrono::steady_clock::is_steady);
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  for (std::size_t i = 0; i < options.warmup; ++i) runner(i % frame_count);

  std::vector<double> latencies;
  latencies.reserve(frame_count);
  const auto start = clock::now();
  for (std::size_t i = 0; i < frame_count; ++i) {
    const auto t0 = clock::now();
    try {
      runner(i);
    } catch (const std::exception& e) {
      const auto now = clock::now();
      BenchReport partial;
      if (i > 0) partial = make_bench_report(i, std::max(ms_since(start, now), 1e-9), latencies);
      partial.warmup_frames = options.warmup;
      throw BenchAborted("runner failed on frame " + std::to_string(i) + ": " + e.what(), partial);
    }
    latencies.push_back(ms_since(t0, clock::now()));
  }
  const double total = ms_since(start, clock::now());
  BenchReport report = make_bench_report(frame_count, std::max(total, 1e-9), std::move(latencies));
  report.warmup_frames = options.warmup;
  return report;
}

double compare_speedup(const BenchReport& optimized, const BenchReport& baseline) {
  if (optimized.frame_count == 0 || baseline.frame_count == 0) {
    throw std::invalid_argument("speedup needs two non-empty reports");
  }
  if (!(baseline.fps_exact > 0)) throw std::invalid_argument("baseline FPS is zero");
  return optimized.fps_exact / baseline.fps_exact;
}

std::vector<ThermalReading> parse_thermal_zones(std::string_view text) {
  std::vector<ThermalReading> readings;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;

    const auto split = t.find_last_of(" \t");
    auto fail = [&] {
      return std::invalid_argument("thermal snapshot line " + std::to_string(line_no) +
                                   ": expected '<zone> <millidegrees>', got '" + t + "'");
    };
    if (split == std::string::npos) throw fail();
    const std::string zone = trim(t.substr(0, split));
    const std::string value = t.substr(split + 1);
    long long milli = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), milli);
    if (zone.empty() || zone.find_first_of(" \t") != std::string::npos || ec != std::errc() || ptr != value.data() + value.size()) throw fail();
    readings.push_back({zone, static_cast<double>(milli) / 1000.0});
  }
  return readings;
}

std::string format_thermal_zones(std::span<const ThermalReading> readings) {
  std::ostringstream os;
  for (const auto& r : readings) {
    os << r.zone << ' ' << static_cast<long long>(std::llround(r.celsius * 1000.0)) << '\n';
  }
  return os.str();
}

std::vector<ThermalReading> read_sysfs_thermal(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<ThermalReading> readings;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return readings;
  std::vector<fs::path> zones;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (entry.path().filename().string().rfind("thermal_zone", 0) == 0) zones.push_back(entry.path());
  }
  std::sort(zones.begin(), zones.end());
  for (const auto& z : zones) {
    std::ifstream type_in(z / "type");
    std::ifstream temp_in(z / "temp");
    std::string type;
    long long milli = 0;
    if (!(type_in >> type) || !(temp_in >> milli)) continue;
    readings.push_back({type, static_cast<double>(milli) / 1000.0});
  }
  return readings;
}

const char* to_string(Severity severity) {
  switch (severity) {
    case Severity::ok: return "ok";
    case Severity::warn: return "warn";
    case Severity::critical: return "critical";
  }
  return "?";
}

const ZoneLimit& ThermalLimits::for_zone(const std::string& zone) const {
  const auto it = zones.find(zone);
  return it == zones.end() ? fallback : it->second;
}

ThrottleStatus throttle_check(std::span<const ThermalReading> readings, const ThermalLimits& limits) {
  ThrottleStatus status;
  status.no_readings = readings.empty();
  for (const ThermalReading& r : readings) {
    ZoneStatus z;
    z.reading = r;
    const ZoneLimit& limit = limits.for_zone(r.zone);
    if (r.celsius >= limit.critical) {
      z.severity = Severity::critical;
    } else if (r.celsius >= limit.warn) {
      z.severity = Severity::warn;
    }
    z.implausible = !std::isfinite(r.celsius) || r.celsius < kPlausibleMinCelsius || r.celsius > kPlausibleMaxCelsius;
    status.implausible_reading = status.implausible_reading || z.implausible;
    status.overall = std::max(status.overall, z.severity);
    status.zones.push_back(std::move(z));
  }
  return status;
}

}  // namespace thermopipe
