#include "thermopipe/nuc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "map_store.hpp"

namespace thermopipe {

namespace {

std::vector<double> pixel_means(const ReferenceStack& stack, const char* label) {
  if (stack.frames.empty()) {
    throw CalibrationError(std::string(label) + " reference stack is empty");
  }
  const Geometry g = stack.frames.front().geometry();
  std::vector<double> sum(g.pixel_count(), 0.0);
  for (const RawFrame& f : stack.frames) {
    if (f.geometry() != g) {
      throw CalibrationError(std::string(label) + " reference stack mixes frame geometries");
    }
    const auto s = f.samples();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s[i];
  }
  const auto n = static_cast<double>(stack.frames.size());
  for (double& v : sum) v /= n;
  return sum;
}

/// Mean of the values left after trimming `trim` of the population from each tail.
double trimmed_mean(std::vector<double> values, double trim) {
  std::sort(values.begin(), values.end());
  const auto cut = static_cast<std::size_t>(std::floor(static_cast<double>(values.size()) * trim));
  const auto first = values.begin() + static_cast<std::ptrdiff_t>(cut);
  const auto last = values.end() - static_cast<std::ptrdiff_t>(cut);
  return std::accumulate(first, last, 0.0) / static_cast<double>(last - first);
}

}  // namespace

std::size_t CalibrationSet::bad_count() const {
  return static_cast<std::size_t>(std::count(bad_mask.begin(), bad_mask.end(), std::uint8_t{1}));
}

CalibrationSet CalibrationSet::identity(Geometry geometry) {
  CalibrationSet cal;
  cal.geometry = geometry;
  cal.gain.assign(geometry.pixel_count(), 1.0);
  cal.offset.assign(geometry.pixel_count(), 0.0);
  cal.bad_mask.assign(geometry.pixel_count(), 0);
  cal.t_cold = 20.0;
  cal.t_hot = 40.0;
  return cal;
}

UniformityScore uniformity_score(const RawFrame& frame) {
  const FrameStats stats = frame_stats(frame);
  if (stats.mean <= 0.0) {
    throw CalibrationError("uniformity score undefined for a zero-mean frame");
  }
  return {stats.stddev / stats.mean};
}

std::vector<RawFrame> select_references(std::span<const RawFrame> stack, std::size_t count) {
  if (stack.empty()) throw CalibrationError("cannot select references from an empty stack");
  if (count == 0 || count > stack.size()) {
    throw CalibrationError("requested " + std::to_string(count) + " references from a stack of " +
                           std::to_string(stack.size()));
  }
  struct Ranked {
    double score;
    std::uint64_t frame_index;
    std::size_t position;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(stack.size());
  for (std::size_t i = 0; i < stack.size(); ++i) {
    ranked.push_back({uniformity_score(stack[i]).score, stack[i].frame_index(), i});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return a.position < b.position;
  });
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < count; ++k) keep.push_back(ranked[k].position);
  std::sort(keep.begin(), keep.end());

  std::vector<RawFrame> selected;
  selected.reserve(count);
  for (std::size_t pos : keep) selected.push_back(stack[pos]);
  return selected;
}

CalibrationSet build_two_point(const ReferenceStack& cold, const ReferenceStack& hot,
                               const NucThresholds& thresholds) {
  if (!(cold.nominal_temperature < hot.nominal_temperature)) {
    throw CalibrationError("cold reference temperature must be below the hot reference temperature");
  }
  const std::vector<double> r_cold = pixel_means(cold, "cold");
  const std::vector<double> r_hot = pixel_means(hot, "hot");
  const Geometry g = cold.frames.front().geometry();
  if (hot.frames.front().geometry() != g) {
    throw CalibrationError("cold and hot reference stacks differ in geometry");
  }

  CalibrationSet cal;
  cal.geometry = g;
  cal.t_cold = cold.nominal_temperature;
  cal.t_hot = hot.nominal_temperature;
  cal.thresholds = thresholds;
  cal.target_cold = trimmed_mean(r_cold, thresholds.trim_fraction);
  cal.target_hot = trimmed_mean(r_hot, thresholds.trim_fraction);
  const double span = cal.target_hot - cal.target_cold;

  const std::size_t n = g.pixel_count();
  cal.gain.resize(n);
  cal.offset.resize(n);
  cal.bad_mask.assign(n, 0);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = r_hot[i] - r_cold[i];
    double gain = 1.0;
    bool ok = std::abs(delta) >= thresholds.dead_response;
    if (ok) {
      gain = span / delta;
      ok = std::isfinite(gain) && gain >= thresholds.gain_min && gain <= thresholds.gain_max;
    }
    if (ok) {
      cal.gain[i] = gain;
      cal.offset[i] = cal.target_cold - gain * r_cold[i];
    } else {
      cal.gain[i] = 1.0;
      cal.offset[i] = 0.0;
      cal.bad_mask[i] = 1;
      ++bad;
    }
  }
  const double fraction = static_cast<double>(bad) / static_cast<double>(n);
  if (fraction > thresholds.max_bad_fraction) {
    throw CalibrationError("calibration flagged " + std::to_string(bad) + " of " + std::to_string(n) +
                           " pixels bad (limit " + std::to_string(thresholds.max_bad_fraction * 100) +
                           "%); the reference scenes look invalid");
  }
  return cal;
}

CorrectedFrame apply_nuc(const CalibrationSet& cal, const RawFrame& raw) {
  if (raw.geometry() != cal.geometry) {
    throw CalibrationError("frame geometry " + std::to_string(raw.width()) + "x" +
                           std::to_string(raw.height()) + " does not match calibration " +
                           std::to_string(cal.geometry.width) + "x" + std::to_string(cal.geometry.height));
  }
  const auto s = raw.samples();
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = cal.bad_mask[i] ? static_cast<double>(s[i]) : cal.gain[i] * s[i] + cal.offset[i];
  }
  return CorrectedFrame(raw.width(), raw.height(), std::move(out));
}

double residual_nonuniformity(const CalibrationSet& cal, const ReferenceStack& check) {
  if (check.frames.empty()) throw CalibrationError("validation stack is empty");
  double total = 0.0;
  for (const RawFrame& f : check.frames) {
    const CorrectedFrame c = apply_nuc(cal, f);
    std::vector<double> good;
    good.reserve(c.values().size());
    for (std::size_t i = 0; i < c.values().size(); ++i) {
      if (!cal.bad_mask[i]) good.push_back(c.values()[i]);
    }
    const FrameStats stats = frame_stats(std::span<const double>(good));
    if (stats.mean <= 0.0) throw CalibrationError("validation scene has zero mean after correction");
    total += stats.stddev / stats.mean;
  }
  return total / static_cast<double>(check.frames.size());
}

void save_calibration(const CalibrationSet& cal, const std::filesystem::path& json_path) {
  nlohmann::json header;
  header["kind"] = "two-point-calibration";
  header["width"] = cal.geometry.width;
  header["height"] = cal.geometry.height;
  header["t_cold"] = cal.t_cold;
  header["t_hot"] = cal.t_hot;
  header["target_cold"] = cal.target_cold;
  header["target_hot"] = cal.target_hot;
  header["bad_count"] = cal.bad_count();
  header["thresholds"] = {{"dead_response", cal.thresholds.dead_response},
                          {"gain_min", cal.thresholds.gain_min},
                          {"gain_max", cal.thresholds.gain_max},
                          {"max_bad_fraction", cal.thresholds.max_bad_fraction},
                          {"trim_fraction", cal.thresholds.trim_fraction}};
  detail::MapPayload payload;
  payload.maps["gain"] = cal.gain;
  payload.maps["offset"] = cal.offset;
  payload.masks["bad"] = cal.bad_mask;
  detail::write_map_file(json_path, header, payload);
}

CalibrationSet load_calibration(const std::filesystem::path& json_path) {
  std::ifstream probe(json_path);
  if (!probe) throw CalibrationError("cannot open calibration " + json_path.string());
  const auto peek = nlohmann::json::parse(probe, nullptr, false);
  if (peek.is_discarded() || !peek.is_object()) {
    throw CalibrationError(json_path.string() + ": malformed calibration header");
  }
  CalibrationSet cal;
  try {
    cal.geometry = {peek.at("width").get<std::size_t>(), peek.at("height").get<std::size_t>()};
    detail::MapPayload payload;
    const auto header = detail::read_map_file(json_path, cal.geometry.pixel_count(), payload);
    cal.t_cold = header.at("t_cold").get<double>();
    cal.t_hot = header.at("t_hot").get<double>();
    cal.target_cold = header.at("target_cold").get<double>();
    cal.target_hot = header.at("target_hot").get<double>();
    const auto& t = header.at("thresholds");
    cal.thresholds = {t.at("dead_response").get<double>(), t.at("gain_min").get<double>(),
                      t.at("gain_max").get<double>(), t.at("max_bad_fraction").get<double>(),
                      t.at("trim_fraction").get<double>()};
    cal.gain = std::move(payload.maps.at("gain"));
    cal.offset = std::move(payload.maps.at("offset"));
    cal.bad_mask = std::move(payload.masks.at("bad"));
  } catch (const nlohmann::json::exception& e) {
    throw CalibrationError(json_path.string() + ": malformed calibration header: " + e.what());
  } catch (const std::out_of_range&) {
    throw CalibrationError(json_path.string() + ": calibration payload is missing a map");
  }
  if (!(cal.t_cold < cal.t_hot)) throw CalibrationError(json_path.string() + ": t_cold must be below t_hot");
  for (std::size_t i = 0; i < cal.gain.size(); ++i) {
    if (!std::isfinite(cal.gain[i]) || !std::isfinite(cal.offset[i]) || (!cal.bad_mask[i] && cal.gain[i] <= 0)) {
      throw CalibrationError(json_path.string() + ": calibration contains invalid gain/offset entries");
    }
  }
  return cal;
}

}  // namespace thermopipe
