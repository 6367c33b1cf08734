#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "thermopipe/boxes.hpp"

namespace thermopipe {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClassScheme {
 public:
  /// bicycle, motorcycle, bus, car, person, pole-or-sign
  ClassScheme();
  explicit ClassScheme(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int class_id) const { return names_.at(static_cast<std::size_t>(class_id)); }
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const ClassScheme&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Sample {
  std::string id;  // image basename without extension
  std::filesystem::path image;
  std::vector<GroundTruthBox> truths;
  std::vector<std::string> tags;
};

struct Dataset {
  std::vector<Sample> samples;  // sorted by id
  ClassScheme scheme;
};

/// Parses "<class_id> <cx> <cy> <w> <h>".
GroundTruthBox parse_annotation_line(std::string_view line, const ClassScheme& scheme);
/// Inverse of parse_annotation_line, six decimals.
std::string format_annotation_line(const GroundTruthBox& box);

std::vector<GroundTruthBox> parse_label_file(const std::filesystem::path& path, const ClassScheme& scheme);
void write_label_file(const std::filesystem::path& path, const std::vector<GroundTruthBox>& boxes);

/// Pairs root/images/*.{pgm,png} with root/labels/*.txt by basename; optional
/// root/tags.json maps basename -> [tag, ...].
Dataset load_dataset(const std::filesystem::path& root, const ClassScheme& scheme = {});

struct TagShare {
  std::uint64_t count = 0;
  double percent = 0.0;  // 2 decimals, ties to even
};

struct DatasetStats {
  std::uint64_t image_count = 0;
  std::uint64_t box_count = 0;
  std::vector<std::uint64_t> class_instances;  // indexed by class_id
  std::map<std::string, TagShare> tags;
};

/// count / total as a percentage rounded to 2 decimals (ties to even), in exact
/// integer arithmetic.
double share_percent(std::uint64_t count, std::uint64_t total);
std::map<std::string, TagShare> tag_shares(const std::map<std::string, std::uint64_t>& counts);

DatasetStats dataset_stats(const Dataset& ds);

}  // namespace thermopipe
