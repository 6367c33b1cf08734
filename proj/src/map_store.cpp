#include "map_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "thermopipe/frame.hpp"

namespace thermopipe::detail {

namespace {

void put_f64le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

double get_f64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_map_file(const std::filesystem::path& json_path, nlohmann::json header,
                    const MapPayload& payload) {
  const auto bin_path = std::filesystem::path(json_path).replace_extension(".bin");
  std::vector<unsigned char> blob;
  nlohmann::json maps = nlohmann::json::array();
  for (const auto& [name, values] : payload.maps) {
    maps.push_back({{"name", name}, {"offset", blob.size()}, {"count", values.size()}, {"dtype", "f64le"}});
    for (double v : values) put_f64le(blob, v);
  }
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& [name, bits] : payload.masks) {
    masks.push_back({{"name", name}, {"offset", blob.size()}, {"count", bits.size()}, {"dtype", "bits"}});
    std::vector<unsigned char> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != 0) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    }
    blob.insert(blob.end(), packed.begin(), packed.end());
  }
  header["payload"] = {{"file", bin_path.filename().string()}, {"maps", maps}, {"masks", masks}};

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw FrameError("cannot write " + bin_path.string());
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw FrameError("write failed for " + bin_path.string());

  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw FrameError("cannot write " + json_path.string());
  js << header.dump(2) << '\n';
  if (!js) throw FrameError("write failed for " + json_path.string());
}

nlohmann::json read_map_file(const std::filesystem::path& json_path, std::size_t expected,
                             MapPayload& payload) {
  std::ifstream js(json_path);
  if (!js) throw FrameError("cannot open " + json_path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(js);
    const auto bin_path = json_path.parent_path() / header.at("payload").at("file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw FrameError("cannot open " + bin_path.string());
    const std::vector<unsigned char> blob{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};

    for (const auto& entry : header.at("payload").at("maps")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (count != expected || offset + count * 8 > blob.size()) {
        throw FrameError(json_path.string() + ": map '" + entry.at("name").get<std::string>() +
                         "' has inconsistent size");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_f64le(blob.data() + offset + 8 * i);
      payload.maps[entry.at("name").get<std::string>()] = std::move(values);
    }
    for (const auto& entry : header.at("payload").at("masks")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (count != expected || offset + (count + 7) / 8 > blob.size()) {
        throw FrameError(json_path.string() + ": mask '" + entry.at("name").get<std::string>() +
                         "' has inconsistent size");
      }
      std::vector<std::uint8_t> bits(count);
      for (std::size_t i = 0; i < count; ++i) bits[i] = (blob[offset + i / 8] >> (i % 8)) & 1u;
      payload.masks[entry.at("name").get<std::string>()] = std::move(bits);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FrameError(json_path.string() + ": malformed map header: " + e.what());
  }
  return header;
}

}  // namespace thermopipe::detail
