#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "thermopipe/correction.hpp"
#include "thermopipe/numeric.hpp"
#include "thermopipe/rng.hpp"
#include "thermopipe/synth.hpp"

using namespace thermopipe;
using testsupport::TempDir;

namespace {

CorrectedFrame noisy(std::size_t w, std::size_t h, double level, double sigma, CounterRng& rng) {
  CorrectedFrame f(w, h, level);
  for (double& v : f.values()) v = level + sigma * rng.gaussian();
  return f;
}

}  // namespace

TEST_CASE("build_gain_map") {
  SUBCASE("uniform scene gives unit map") {
    const std::vector<CorrectedFrame> frames(3, CorrectedFrame(4, 4, 1000.0));
    const GainMap m = build_gain_map(frames);
    for (double g : m.gain) CHECK(g == 1.0);
  }
  SUBCASE("pixel at twice the scene mean maps to 0.5") {
    const std::vector<CorrectedFrame> frames{CorrectedFrame(2, 2, std::vector<double>{1000, 1000, 1000, 3000})};
    CHECK(build_gain_map(frames).gain[3] == 0.5);
  }
  SUBCASE("errors") {
    CHECK_THROWS(build_gain_map(std::vector<CorrectedFrame>{}));
    CHECK_THROWS(build_gain_map(std::vector<CorrectedFrame>{CorrectedFrame(2, 1, std::vector<double>{0, 5})}));
  }
  SUBCASE("residual map noise shrinks as 1/sqrt(K)") {
    auto residual = [](std::size_t k) {
      CounterRng rng(42, k);
      std::vector<CorrectedFrame> frames;
      for (std::size_t i = 0; i < k; ++i) frames.push_back(noisy(64, 64, 1000, 20, rng));
      return frame_stats(std::span<const double>(build_gain_map(frames).gain)).stddev;
    };
    const double ratio = residual(16) / residual(64);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.25));
  }
  SUBCASE("apply and persist") {
    TempDir dir;
    const GainMap m{{2, 1}, {0.5, 2.0}};
    const CorrectedFrame out = apply_gain_map(m, CorrectedFrame(2, 1, std::vector<double>{100, 100}));
    CHECK(out.values()[0] == 50);
    CHECK(out.values()[1] == 200);
    save_gain_map(m, dir / "g.json");
    CHECK(load_gain_map(dir / "g.json").gain == m.gain);
  }
}

TEST_CASE("agc_display") {
  SUBCASE("full-range ramp") {
    std::vector<double> ramp(65536);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    const DisplayFrame d = agc_display(CorrectedFrame(256, 256, ramp), {0, 100});
    CHECK(d.bytes().front() == 0);
    CHECK(d.bytes().back() == 255);
  }
  SUBCASE("constant frame maps to 128") {
    const DisplayFrame d = agc_display(CorrectedFrame(3, 3, 777.0), {});
    for (auto b : d.bytes()) CHECK(b == 128);
  }
  SUBCASE("midpoint rounds half to even") {
    const DisplayFrame d = agc_display(CorrectedFrame(3, 1, std::vector<double>{0, 100, 200}), {0, 100});
    CHECK(d.bytes()[0] == 0);
    CHECK(d.bytes()[1] == 128);  // 127.5
    CHECK(d.bytes()[2] == 255);
  }
  SUBCASE("monotone on random frames") {
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
      CounterRng rng(7, trial);
      CorrectedFrame f(17, 13, 0.0);
      for (double& v : f.values()) v = rng.uniform(-500, 20000);
      const AgcParams p{rng.uniform(0, 20), rng.uniform(60, 100)};
      const DisplayFrame d = agc_display(f, p);
      std::vector<std::size_t> order(f.values().size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return f.values()[a] < f.values()[b]; });
      for (std::size_t i = 1; i < order.size(); ++i) REQUIRE(d.bytes()[order[i - 1]] <= d.bytes()[order[i]]);
    }
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS(agc_display(CorrectedFrame(2, 2, 1.0), {50, 50}));
    CHECK_THROWS(agc_display(CorrectedFrame(2, 2, 1.0), {-1, 50}));
  }
}

TEST_CASE("BadPixelMask provenance and capacity") {
  BadPixelMask m(Geometry{10, 10}, 0.05);
  m.mark(3, BadPixelSource::calibration);
  m.mark(3, BadPixelSource::runtime);
  CHECK(m.source(3) == BadPixelSource::calibration);
  for (std::size_t i = 10; i < 14; ++i) m.mark(i, BadPixelSource::runtime);
  CHECK(m.bad_count() == 5);
  CHECK_THROWS_AS(m.mark(50, BadPixelSource::runtime), FrameError);
}

TEST_CASE("scan_bad_pixels confirmation rule") {
  CorrectedFrame f(8, 8, 1000.0);
  f.at(4, 4) = 65535;
  BadPixelMask mask(f.geometry());
  ConfirmationHistory history;
  const BprParams params{300, 2};
  mask = scan_bad_pixels(f, mask, params, history);
  CHECK_FALSE(mask.is_bad(4, 4));
  mask = scan_bad_pixels(f, mask, params, history);
  CHECK(mask.is_bad(4, 4));
  CHECK(mask.source(4 * 8 + 4) == BadPixelSource::runtime);
  CHECK(mask.bad_count() == 1);

  SUBCASE("uniform frame flags nothing") {
    BadPixelMask clean(Geometry{8, 8});
    ConfirmationHistory h;
    for (int i = 0; i < 5; ++i) clean = scan_bad_pixels(CorrectedFrame(8, 8, 1000.0), clean, {}, h);
    CHECK(clean.bad_count() == 0);
  }
  SUBCASE("an interrupted run restarts the count") {
    BadPixelMask m2(Geometry{8, 8});
    ConfirmationHistory h;
    m2 = scan_bad_pixels(f, m2, params, h);
    m2 = scan_bad_pixels(CorrectedFrame(8, 8, 1000.0), m2, params, h);
    m2 = scan_bad_pixels(f, m2, params, h);
    CHECK_FALSE(m2.is_bad(4, 4));
  }
  SUBCASE("calibration entries are kept") {
    CalibrationSet cal = CalibrationSet::identity({8, 8});
    cal.bad_mask[0] = 1;
    BadPixelMask m3 = BadPixelMask::from_calibration(cal);
    ConfirmationHistory h;
    m3 = scan_bad_pixels(CorrectedFrame(8, 8, 1000.0), m3, {}, h);
    CHECK(m3.source(0) == BadPixelSource::calibration);
  }
  CHECK_THROWS_AS(scan_bad_pixels(CorrectedFrame(4, 4, 0.0), mask, params, history), FrameError);
}

TEST_CASE("repair_bad_pixels") {
  SUBCASE("constant neighbourhood") {
    CorrectedFrame f(3, 3, 1200.0);
    f.at(1, 1) = 0;
    BadPixelMask m(f.geometry(), 0.5);
    m.mark(4, BadPixelSource::runtime);
    CHECK(repair_bad_pixels(f, m).at(1, 1) == 1200.0);
  }
  SUBCASE("even-sized median averages the middle pair") {
    CorrectedFrame f(3, 3, std::vector<double>{1, 2, 3, 4, 65535, 5, 6, 7, 8});
    BadPixelMask m(f.geometry(), 0.5);
    m.mark(4, BadPixelSource::runtime);
    const CorrectedFrame r = repair_bad_pixels(f, m);
    CHECK(r.at(1, 1) == 4.5);
    for (std::size_t i = 0; i < 9; ++i) {
      if (i != 4) CHECK(r.values()[i] == f.values()[i]);
    }
    CHECK(repair_bad_pixels(r, m) == r);
  }
  SUBCASE("empty mask is a no-op") {
    CounterRng rng(1, 1);
    const CorrectedFrame f = noisy(9, 7, 1000, 30, rng);
    CHECK(repair_bad_pixels(f, BadPixelMask(f.geometry())) == f);
  }
  SUBCASE("falls back to the 5x5 ring") {
    CorrectedFrame f(5, 5, 10.0);
    BadPixelMask m(f.geometry(), 0.5);
    for (std::size_t y = 1; y <= 3; ++y) {
      for (std::size_t x = 1; x <= 3; ++x) {
        f.at(x, y) = 9999;
        m.mark(y * 5 + x, BadPixelSource::runtime);
      }
    }
    f.at(0, 0) = 30;
    const CorrectedFrame r = repair_bad_pixels(f, m);
    CHECK(r.at(2, 2) == 10.0);
    CHECK(repair_bad_pixels(r, m) == r);
  }
  SUBCASE("no good pixel within 5x5 is an error") {
    CorrectedFrame f(3, 3, 1.0);
    BadPixelMask m(f.geometry(), 1.0);
    for (std::size_t i = 0; i < 9; ++i) m.mark(i, BadPixelSource::runtime);
    CHECK_THROWS_AS(repair_bad_pixels(f, m), FrameError);
  }
}

TEST_CASE("temporal denoise") {
  SUBCASE("constant stream is a fixed point") {
    for (DenoiseMode mode : {DenoiseMode::windowed, DenoiseMode::exponential}) {
      TemporalDenoiseState s({mode, 4, 0.3});
      for (int i = 0; i < 6; ++i) CHECK(s.step(CorrectedFrame(3, 2, 512.0)) == CorrectedFrame(3, 2, 512.0));
    }
  }
  SUBCASE("windowed equals the brute-force window mean") {
    TemporalDenoiseState s;
    CounterRng rng(9, 0);
    std::vector<CorrectedFrame> seen;
    for (int step = 0; step < 12; ++step) {
      seen.push_back(noisy(5, 4, 100, 25, rng));
      const CorrectedFrame out = s.step(seen.back());
      const std::size_t n = std::min<std::size_t>(seen.size(), 4);
      CHECK(s.window().size() == n);
      for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0;
        for (std::size_t k = seen.size() - n; k < seen.size(); ++k) sum += seen[k].values()[i];
        REQUIRE(out.values()[i] == sum / static_cast<double>(n));
      }
    }
  }
  SUBCASE("exponential step response") {
    TemporalDenoiseState s({DenoiseMode::exponential, 4, 0.5});
    s.step(CorrectedFrame(2, 2, 0.0));
    for (int k = 1; k <= 6; ++k) {
      const CorrectedFrame out = s.step(CorrectedFrame(2, 2, 1000.0));
      CHECK(out.values()[0] == doctest::Approx(1000.0 * (1.0 - std::pow(0.5, k))).epsilon(1e-14));
    }
  }
  SUBCASE("noise stddev halves with N=4") {
    TemporalDenoiseState s;
    CounterRng rng(5, 5);
    CorrectedFrame out;
    for (int i = 0; i < 4; ++i) out = s.step(noisy(100, 100, 1000, 40, rng));
    CHECK(frame_stats(out).stddev == doctest::Approx(20.0).epsilon(0.15));
  }
  SUBCASE("geometry change and bad params are errors") {
    TemporalDenoiseState s;
    s.step(CorrectedFrame(2, 2, 1.0));
    CHECK_THROWS_AS(s.step(CorrectedFrame(3, 2, 1.0)), FrameError);
    CHECK_THROWS(TemporalDenoiseState({DenoiseMode::exponential, 4, 0.0}));
    CHECK_THROWS(TemporalDenoiseState({DenoiseMode::windowed, 0, 0.5}));
  }
}

TEST_CASE("run_pipeline") {
  SUBCASE("identity NUC with other stages off passes values through") {
    PipelineConfig cfg = default_pipeline_config(CalibrationSet::identity({6, 4}));
    cfg.stages = {true, false, false, false};
    RawFrame raw(6, 4, 0);
    for (std::size_t i = 0; i < 24; ++i) raw.samples()[i] = static_cast<std::uint16_t>(i * 1000);
    const auto out = run_pipeline(cfg, std::span<const RawFrame>(&raw, 1));
    REQUIRE(out.size() == 1);
    for (std::size_t i = 0; i < 24; ++i) CHECK(out[0].corrected.values()[i] == raw.samples()[i]);
  }
  SUBCASE("stream conservation") {
    std::vector<RawFrame> frames;
    for (std::uint64_t i = 0; i < 100; ++i) frames.emplace_back(8, 6, static_cast<std::uint16_t>(1000 + i), i);
    const auto out = run_pipeline(default_pipeline_config(CalibrationSet::identity({8, 6})), frames);
    REQUIRE(out.size() == 100);
    for (std::uint64_t i = 0; i < 100; ++i) CHECK(out[i].frame_index == i);
  }
  SUBCASE("full chain beats NUC alone on a noisy sensor") {
    synth::SensorParams p;
    p.geometry = {64, 48};
    p.noise_sigma = 20;
    const auto sensor = synth::make_sensor(21, p);
    ReferenceStack cold{{}, 20}, hot{{}, 40};
    for (std::uint64_t k = 0; k < 25; ++k) {
      cold.frames.push_back(synth::uniform_frame(sensor, 20, k));
      hot.frames.push_back(synth::uniform_frame(sensor, 40, 100 + k));
    }
    const auto cal = build_two_point(cold, hot);
    std::vector<RawFrame> stream;
    for (std::uint64_t k = 0; k < 8; ++k) stream.push_back(synth::uniform_frame(sensor, 30, 1000 + k));
    PipelineConfig nuc_only = default_pipeline_config(cal);
    nuc_only.stages = {true, false, false, false};
    const double single = frame_stats(run_pipeline(nuc_only, stream).back().corrected).stddev;
    const double full = frame_stats(run_pipeline(default_pipeline_config(cal), stream).back().corrected).stddev;
    const double raw = frame_stats(stream.back()).stddev;
    CHECK(single < raw);
    CHECK(full < single);
  }
  SUBCASE("errors carry the frame index") {
    CorrectionPipeline pipe(default_pipeline_config(CalibrationSet::identity({4, 4})));
    pipe.process(RawFrame(4, 4, 10, 0));
    try {
      pipe.process(RawFrame(5, 4, 10, 17));
      FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
      CHECK(e.frame_index() == 17);
    }
  }
  SUBCASE("config document") {
    TempDir dir;
    save_calibration(CalibrationSet::identity({4, 4}), dir / "cal.json");
    testsupport::write_text(dir / "pipe.json", R"({"calibration": "cal.json", "agc": {"low_percentile": 2,
      "high_percentile": 98}, "bpr": {"threshold": 250, "confirm": 4}, "td": {"mode": "exponential", "alpha": 0.25},
      "stages": {"gain": false}})");
    const PipelineConfig cfg = load_pipeline_config(dir / "pipe.json");
    CHECK(cfg.calibration.geometry == Geometry{4, 4});
    CHECK(cfg.agc.low_percentile == 2);
    CHECK(cfg.bpr.threshold == 250);
    CHECK(cfg.bpr.confirm == 4);
    CHECK(cfg.td.mode == DenoiseMode::exponential);
    CHECK(cfg.td.alpha == 0.25);
    CHECK_FALSE(cfg.stages.gain);
    CHECK(cfg.stages.bpr);
    testsupport::write_text(dir / "bad.json", R"({"calibration": "cal.json", "td": {"mode": "median"}})");
    CHECK_THROWS_AS(load_pipeline_config(dir / "bad.json"), FrameError);
  }
}
