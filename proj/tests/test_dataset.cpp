#include <map>

#include "doctest.h"
#include "support.hpp"
#include "thermopipe/dataset.hpp"
#include "thermopipe/frame.hpp"
#include "thermopipe/rng.hpp"

using namespace thermopipe;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

void touch_image(const fs::path& root, const std::string& id) {
  fs::create_directories(root / "images");
  store_frame_16(RawFrame(2, 2, 1000), root / "images" / (id + ".pgm"));
}

}  // namespace

TEST_CASE("parse_annotation_line") {
  const ClassScheme scheme;
  const GroundTruthBox car = parse_annotation_line("3 0.5 0.5 0.2 0.1", scheme);
  CHECK(car == GroundTruthBox{3, 0.5, 0.5, 0.2, 0.1});
  CHECK(scheme.name(car.class_id) == "car");
  CHECK_THROWS_AS(parse_annotation_line("9 0.5 0.5 0.2 0.1", scheme), DatasetError);
  CHECK_THROWS_AS(parse_annotation_line("3 0.5 0.5", scheme), DatasetError);
  CHECK_THROWS_AS(parse_annotation_line("3 1.2 0.5 0.2 0.1", scheme), DatasetError);
  CHECK_THROWS_AS(parse_annotation_line("3 0.5 0.5 0 0.1", scheme), DatasetError);
  CHECK_THROWS_AS(parse_annotation_line("3 0.5 0.5 0.2 x", scheme), DatasetError);
  CHECK_THROWS_AS(parse_annotation_line("3.5 0.5 0.5 0.2 0.1", scheme), DatasetError);
  CHECK(parse_annotation_line("  0\t0 1 1 0.000001 ", scheme) == GroundTruthBox{0, 0, 1, 1, 0.000001});
}

TEST_CASE("format then parse is the identity at six decimals") {
  const ClassScheme scheme;
  CounterRng rng(3, 3);
  for (int i = 0; i < 500; ++i) {
    GroundTruthBox b{static_cast<int>(rng.below(6)), rng.uniform(), rng.uniform(), 0.0, 0.0};
    b.w = std::max(1e-6, rng.uniform());
    b.h = std::max(1e-6, rng.uniform());
    const GroundTruthBox once = parse_annotation_line(format_annotation_line(b), scheme);
    CHECK(parse_annotation_line(format_annotation_line(once), scheme) == once);
    CHECK(std::abs(once.cx - b.cx) <= 5e-7);
  }
  CHECK(format_annotation_line({3, 0.5, 0.5, 0.2, 0.1}) == "3 0.500000 0.500000 0.200000 0.100000");
}

TEST_CASE("class schemes") {
  CHECK(ClassScheme().names() ==
        std::vector<std::string>{"bicycle", "motorcycle", "bus", "car", "person", "pole-or-sign"});
  CHECK_THROWS_AS(ClassScheme({"a", "a"}), DatasetError);
  CHECK(parse_annotation_line("1 0.5 0.5 0.1 0.1", ClassScheme({"x", "y"})).class_id == 1);
}

TEST_CASE("load_dataset pairs images with labels") {
  TempDir dir;
  for (const char* id : {"a", "b", "c"}) touch_image(dir.path(), id);
  fs::create_directories(dir / "labels");
  write_label_file(dir / "labels/a.txt", {{3, 0.5, 0.5, 0.2, 0.1}});
  testsupport::write_text(dir / "labels/b.txt", "1 0.1 0.2 0.1 0.1\n\n4 0.9 0.9 0.1 0.2\n");
  testsupport::write_text(dir / "tags.json", R"({"a": ["day"], "c": "night"})");
  const Dataset ds = load_dataset(dir.path());
  REQUIRE(ds.samples.size() == 3);
  CHECK(ds.samples[0].id == "a");
  CHECK(ds.samples[0].truths.size() == 1);
  CHECK(ds.samples[1].truths.size() == 2);
  CHECK(ds.samples[2].truths.empty());
  CHECK(ds.samples[0].tags == std::vector<std::string>{"day"});
  CHECK(ds.samples[2].tags == std::vector<std::string>{"night"});
  CHECK(ds.samples[1].tags.empty());
}

TEST_CASE("load_dataset errors and degenerate roots") {
  TempDir dir;
  touch_image(dir.path(), "a");
  testsupport::write_text(dir / "labels/zzz.txt", "0 0.5 0.5 0.1 0.1\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("zzz.txt"), DatasetError);

  TempDir bad_line;
  touch_image(bad_line.path(), "a");
  testsupport::write_text(bad_line / "labels/a.txt", "0 0.5 0.5 0.1 0.1\n7 0.5 0.5 0.1 0.1\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad_line.path()), doctest::Contains("a.txt:2"), DatasetError);

  TempDir empty;
  CHECK(load_dataset(empty.path()).samples.empty());
  CHECK_THROWS_AS(load_dataset(empty / "missing"), DatasetError);
}

TEST_CASE("tag percentages reproduce the published corpus split") {
  const auto shares = tag_shares({{"day", 17740}, {"evening", 12640}, {"night", 9390}});
  CHECK(shares.at("day").percent == 44.61);
  CHECK(shares.at("evening").percent == 31.78);
  CHECK(shares.at("night").percent == 23.61);
  CHECK(share_percent(1, 1) == 100.00);
  CHECK(share_percent(1, 8) == 12.5);
  CHECK(share_percent(1, 200) == 0.5);
  CHECK(share_percent(1, 20000) == 0.0);   // 0.005 -> 0.00
  CHECK(share_percent(3, 20000) == 0.02);  // 0.015 -> 0.02
  CHECK(share_percent(2, 3) == 66.67);
  CHECK(share_percent(0, 0) == 0.0);
  std::uint64_t total = 0;
  for (std::uint64_t n : {50, 5360, 149, 130}) total += n;
  CHECK(total == 5689);
}

TEST_CASE("dataset_stats equals a brute-force scan") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 0);
    Dataset ds;
    std::map<int, std::uint64_t> classes;
    std::map<std::string, std::uint64_t> tags;
    std::uint64_t boxes = 0;
    const auto n = rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) {
      Sample s;
      s.id = std::to_string(i);
      for (auto k = rng.below(5); k > 0; --k) {
        const int c = static_cast<int>(rng.below(6));
        s.truths.push_back({c, 0.5, 0.5, 0.1, 0.1});
        ++classes[c];
        ++boxes;
      }
      static const char* kTags[] = {"day", "evening", "night", "rain"};
      for (auto k = rng.below(3); k > 0; --k) {
        s.tags.push_back(kTags[rng.below(4)]);
        ++tags[s.tags.back()];
      }
      ds.samples.push_back(s);
    }
    const DatasetStats st = dataset_stats(ds);
    CHECK(st.image_count == n);
    CHECK(st.box_count == boxes);
    REQUIRE(st.class_instances.size() == 6);
    for (int c = 0; c < 6; ++c) CHECK(st.class_instances[c] == classes[c]);
    CHECK(st.tags.size() == tags.size());
    double sum = 0;
    for (const auto& [tag, count] : tags) {
      CHECK(st.tags.at(tag).count == count);
      sum += st.tags.at(tag).percent;
    }
    if (!tags.empty()) CHECK(std::abs(sum - 100.0) <= 0.01 * static_cast<double>(tags.size()));
  }
  Dataset single;
  single.samples.push_back({"x", {}, {{0, 0.5, 0.5, 0.1, 0.1}}, {"day"}});
  CHECK(dataset_stats(single).tags.at("day").percent == 100.0);
  CHECK(dataset_stats(Dataset{}).image_count == 0);
}
