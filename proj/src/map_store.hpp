#pragma once

// JSON header + binary sidecar used for calibration sets, gain maps and sensor truth.
// Maps are little-endian IEEE-754 doubles; masks are packed bits, LSB first.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace thermopipe::detail {

struct MapPayload {
  std::map<std::string, std::vector<double>> maps;
  std::map<std::string, std::vector<std::uint8_t>> masks;  // one byte (0/1) per pixel
};

/// Writes `json_path` (with a "payload" section appended to `header`) and its
/// sidecar `<stem>.bin` next to it.
void write_map_file(const std::filesystem::path& json_path, nlohmann::json header,
                    const MapPayload& payload);

/// Returns the header and fills `payload`; every map/mask must hold `expected` entries.
nlohmann::json read_map_file(const std::filesystem::path& json_path, std::size_t expected,
                             MapPayload& payload);

}  // namespace thermopipe::detail
