#include "thermopipe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace thermopipe {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    if (pos > start) fields.push_back(line.substr(start, pos - start));
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, const char* what) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DatasetError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

bool is_image(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".png";
}

}  // namespace

ClassScheme::ClassScheme() : ClassScheme({"bicycle", "motorcycle", "bus", "car", "person", "pole-or-sign"}) {}

ClassScheme::ClassScheme(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw DatasetError("class scheme must name at least one class");
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size()) throw DatasetError("class names must be unique");
}

GroundTruthBox parse_annotation_line(std::string_view line, const ClassScheme& scheme) {
  const auto fields = split_fields(line);
  if (fields.size() != 5) {
    throw DatasetError("expected 5 fields (class cx cy w h), got " + std::to_string(fields.size()));
  }
  GroundTruthBox box;
  box.class_id = parse_number<int>(fields[0], "class id");
  box.cx = parse_number<double>(fields[1], "cx");
  box.cy = parse_number<double>(fields[2], "cy");
  box.w = parse_number<double>(fields[3], "w");
  box.h = parse_number<double>(fields[4], "h");
  try {
    validate_box(box, scheme.size());
  } catch (const BoxError& e) {
    throw DatasetError(e.what());
  }
  return box;
}

std::string format_annotation_line(const GroundTruthBox& box) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f", box.class_id, box.cx, box.cy, box.w, box.h);
  return buf;
}

std::vector<GroundTruthBox> parse_label_file(const std::filesystem::path& path, const ClassScheme& scheme) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read label file " + path.string());
  std::vector<GroundTruthBox> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_fields(line).empty()) continue;
    try {
      boxes.push_back(parse_annotation_line(line, scheme));
    } catch (const DatasetError& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return boxes;
}

void write_label_file(const std::filesystem::path& path, const std::vector<GroundTruthBox>& boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write label file " + path.string());
  for (const auto& b : boxes) out << format_annotation_line(b) << '\n';
  if (!out) throw DatasetError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& root, const ClassScheme& scheme) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("dataset root " + root.string() + " is not a readable directory");

  Dataset ds;
  ds.scheme = scheme;
  std::map<std::string, fs::path> images;
  std::map<std::string, fs::path> labels;
  try {
    if (fs::is_directory(root / "images")) {
      for (const auto& entry : fs::directory_iterator(root / "images")) {
        if (entry.is_regular_file() && is_image(entry.path())) {
          const auto stem = entry.path().stem().string();
          if (!images.emplace(stem, entry.path()).second) {
            throw DatasetError("two images share the basename '" + stem + "'");
          }
        }
      }
    }
    if (fs::is_directory(root / "labels")) {
      for (const auto& entry : fs::directory_iterator(root / "labels")) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
          labels.emplace(entry.path().stem().string(), entry.path());
        }
      }
    }
  } catch (const fs::filesystem_error& e) {
    throw DatasetError(std::string("unreadable dataset tree: ") + e.what());
  }

  for (const auto& [stem, path] : labels) {
    if (!images.contains(stem)) throw DatasetError("orphan label file " + path.string() + " has no matching image");
  }

  std::map<std::string, std::vector<std::string>> tags;
  if (fs::exists(root / "tags.json")) {
    std::ifstream in(root / "tags.json");
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw DatasetError("malformed tags.json in " + root.string());
    try {
      for (const auto& [key, value] : doc.items()) {
        tags[key] = value.is_string() ? std::vector<std::string>{value.get<std::string>()}
                                      : value.get<std::vector<std::string>>();
      }
    } catch (const nlohmann::json::exception&) {
      throw DatasetError("tags.json values must be strings or string arrays");
    }
  }

  for (const auto& [stem, path] : images) {
    Sample s;
    s.id = stem;
    s.image = path;
    if (auto it = labels.find(stem); it != labels.end()) s.truths = parse_label_file(it->second, scheme);
    if (auto it = tags.find(stem); it != tags.end()) s.tags = it->second;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

double share_percent(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return 0.0;
  const std::uint64_t scaled = count * 10000;
  std::uint64_t q = scaled / total;
  const std::uint64_t r = scaled % total;
  if (2 * r > total || (2 * r == total && q % 2 == 1)) ++q;
  return static_cast<double>(q) / 100.0;
}

std::map<std::string, TagShare> tag_shares(const std::map<std::string, std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (const auto& [tag, n] : counts) total += n;
  std::map<std::string, TagShare> out;
  for (const auto& [tag, n] : counts) out[tag] = {n, share_percent(n, total)};
  return out;
}

DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats stats;
  stats.image_count = ds.samples.size();
  stats.class_instances.assign(static_cast<std::size_t>(ds.scheme.size()), 0);
  std::map<std::string, std::uint64_t> tag_counts;
  for (const Sample& s : ds.samples) {
    for (const GroundTruthBox& b : s.truths) {
      if (b.class_id < 0 || b.class_id >= ds.scheme.size()) {
        throw DatasetError("sample " + s.id + " has class_id " + std::to_string(b.class_id) + " outside the scheme");
      }
      ++stats.class_instances[static_cast<std::size_t>(b.class_id)];
      ++stats.box_count;
    }
    for (const std::string& t : s.tags) ++tag_counts[t];
  }
  stats.tags = tag_shares(tag_counts);
  return stats;
}

}  // namespace thermopipe
