#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "thermopipe/cli.hpp"
#include "thermopipe/dataset.hpp"
#include "thermopipe/frame.hpp"

using namespace thermopipe::cli;
using testsupport::TempDir;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("parse_args: evaluate with a threshold pair") {
  const Command cmd = parse_args({"evaluate", "--dataset", "d/", "--detector", "cmd", "--conf", "0.2", "--iou", "0.4"});
  CHECK(cmd.name == "evaluate");
  const auto& a = std::get<EvaluateArgs>(cmd.args);
  CHECK(a.conf == 0.2);
  CHECK(a.iou == 0.4);
  CHECK(a.dataset.is_absolute());
  CHECK(a.detector.commands == std::vector<std::string>{"cmd"});
}

TEST_CASE("parse_args: usage errors") {
  try {
    parse_args({"bogus"});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(e.exit_code() == kExitUsage);
    for (const char* sub : {"synth", "calibrate", "correct", "evaluate", "bench", "dataset-stats"}) {
      CHECK(std::string(e.what()).find(sub) != std::string::npos);
    }
  }
  auto code_of = [](const std::vector<std::string>& args) {
    try {
      parse_args(args);
    } catch (const UsageError& e) {
      return e.exit_code();
    }
    return -1;
  };
  CHECK(code_of({"bench", "--conf", "1.5"}) == kExitUsage);
  CHECK(code_of({"bench", "--frames", "f", "--stub", "", "--conf", "1.5"}) == kExitUsage);
  CHECK(code_of({"evaluate", "--dataset", "d", "--stub", "drop=0.1", "--frobnicate"}) == kExitUsage);
  CHECK(code_of({"evaluate", "--dataset", "d"}) == kExitUsage);
  CHECK(code_of({"evaluate", "--dataset", "d", "--stub", "drop=2"}) == kExitUsage);
  CHECK(code_of({"evaluate", "--dataset", "d", "--stub", "", "--conf", "abc"}) == kExitUsage);
  CHECK(code_of({"evaluate", "--dataset", "d", "--stub", "", "--strategy", "wbf"}) == kExitUsage);
  CHECK(code_of({"correct", "--input", "i", "--output", "o"}) == kExitUsage);
  CHECK(code_of({}) == kExitUsage);
  CHECK(code_of({"--help"}) == kExitOk);
  CHECK(code_of({"evaluate", "--help"}) == kExitOk);
}

TEST_CASE("parse_args: global flags work on either side of the subcommand") {
  const Command a = parse_args({"--seed", "5", "synth", "--out-dir", "x", "-v"});
  CHECK(a.global.seed == 5);
  CHECK(a.global.verbosity == 1);
  const Command b = parse_args({"synth", "--out-dir", "x", "--seed", "6", "--out", "r.json", "--csv", "r.csv"});
  CHECK(b.global.seed == 6);
  REQUIRE(b.global.out);
  CHECK(b.global.out->is_absolute());
  CHECK(b.global.csv->is_absolute());
  CHECK(std::get<SynthArgs>(b.args).out_dir.is_absolute());
}

TEST_CASE("run: help goes to stdout with exit 0") {
  const Run r = run_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("evaluate") != std::string::npos);
  CHECK(run_cli({"bogus"}).code == 2);
}

TEST_CASE("execute: orphan label is a domain error naming the file") {
  TempDir dir;
  testsupport::fs::create_directories(dir / "ds/images");
  thermopipe::store_frame_16(thermopipe::RawFrame(4, 4, 1000), dir / "ds/images/a.pgm");
  testsupport::write_text(dir / "ds/labels/ghost.txt", "0 0.5 0.5 0.1 0.1\n");
  const Run r = run_cli({"evaluate", "--dataset", (dir / "ds").string(), "--stub", "drop=0"});
  CHECK(r.code == kExitDomainError);
  CHECK(r.err.find("ghost.txt") != std::string::npos);
}

TEST_CASE("execute: synth, calibrate, correct, evaluate, bench, dataset-stats") {
  TempDir dir;
  const std::string root = dir.path().string();
  Run r = run_cli({"synth", "--out-dir", root + "/gen", "--width", "64", "--height", "48", "--images", "6",
                   "--ref-frames", "8", "--noise", "4", "--seed", "3"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["images"] == 6);
  CHECK(testsupport::fs::exists(dir / "gen/sensor_truth.json"));
  CHECK(testsupport::fs::exists(dir / "gen/dataset/tags.json"));

  r = run_cli({"calibrate", "--cold", root + "/gen/refs/cold", "--hot", root + "/gen/refs/hot", "--check",
               root + "/gen/refs/check", "--select", "6", "--output", root + "/cal.json"});
  REQUIRE(r.code == 0);
  const json cal = json::parse(r.out);
  CHECK(cal["cold_frames"] == 6);
  CHECK(cal["check_residual_nonuniformity"].get<double>() < 0.01);

  r = run_cli({"correct", "--calibration", root + "/cal.json", "--input", root + "/gen/refs/check", "--output",
               root + "/flat", "--write-corrected"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["mean_uniformity"].get<double>() < 0.005);
  CHECK(testsupport::fs::exists(dir / "flat/corrected/ref_0000.pgm"));

  testsupport::write_text(dir / "pipe.json", R"({"calibration": "cal.json", "stages": {"td": false}})");
  r = run_cli({"correct", "--config", root + "/pipe.json", "--input", root + "/gen/dataset", "--output",
               root + "/corr", "--out", root + "/correct.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  CHECK(json::parse(testsupport::read_text(dir / "correct.json"))["frames"] == 6);
  CHECK(thermopipe::load_dataset(dir / "corr").samples.size() == 6);

  r = run_cli({"evaluate", "--dataset", root + "/corr", "--stub", "drop=0,conf=0.9", "--csv", root + "/e.csv"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["evaluation"]["map"] == 1.0);
  CHECK(testsupport::read_text(dir / "e.csv") == "P%,R%,mAP%,FPS\n100.00,100.00,100.00,\n");

  r = run_cli({"evaluate", "--dataset", root + "/corr", "--stub", "drop=0.3,jitter=0.05,conf=0.05:0.95,fp=2",
               "--stub", "drop=0.5,seed=9", "--strategy", "ensemble", "--threshold-grid"});
  REQUIRE(r.code == 0);
  const json grid = json::parse(r.out)["grid"];
  REQUIRE(grid.size() == 3);
  CHECK(grid[0]["config"]["conf_threshold"] == 0.4);
  CHECK(grid[2]["config"]["iou_threshold"] == 0.2);

  testsupport::write_text(dir / "zones.txt", "A0-therm 65500\nGPU-therm 90000\n");
  r = run_cli({"bench", "--frames", root + "/corr", "--stub", "drop=0", "--strategy", "tta", "--warmup", "1",
               "--thermal", root + "/zones.txt", "--out", root + "/bench.json"});
  REQUIRE(r.code == 0);
  const json bench = json::parse(testsupport::read_text(dir / "bench.json"));
  CHECK(bench["bench"]["frame_count"] == 6);
  CHECK(bench["thermal"]["overall"] == "critical");

  r = run_cli({"bench", "--frames", root + "/corr/images", "--stub", "drop=0", "--baseline", root + "/bench.json"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["bench"]["speedup_vs_baseline"].get<double>() > 0);

  r = run_cli({"dataset-stats", "--dataset", root + "/corr"});
  REQUIRE(r.code == 0);
  const json stats = json::parse(r.out);
  CHECK(stats["image_count"] == 6);
  CHECK(stats["tags"]["day"]["count"] == 2);

  r = run_cli({"calibrate", "--cold", root + "/nowhere", "--hot", root + "/gen/refs/hot", "--output", root + "/c.json"});
  CHECK(r.code == kExitDomainError);
  CHECK(r.err.find("nowhere") != std::string::npos);
}

TEST_CASE("THERMOPIPE_LOG raises verbosity") {
  TempDir dir;
  ::setenv("THERMOPIPE_LOG", "info", 1);
  const Run r = run_cli({"synth", "--out-dir", dir.path().string(), "--width", "16", "--height", "8", "--images", "1",
                         "--ref-frames", "1"});
  ::unsetenv("THERMOPIPE_LOG");
  CHECK(r.code == 0);
  CHECK(r.err.find("info:") != std::string::npos);
  const Run quiet = run_cli({"synth", "--out-dir", dir.path().string(), "--width", "16", "--height", "8",
                             "--images", "1", "--ref-frames", "1"});
  CHECK(quiet.err.empty());
}
